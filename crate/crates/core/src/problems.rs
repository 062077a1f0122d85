//! Test scenarios: initial and boundary data, switch radius and exact solutions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::field::{Bc, Boundaries, BoundaryFn};
use crate::mesh::{Grid1D, Grid2D, Interval};
use crate::physics::{Advection, Euler, Primitive};

/// How discrete cell values are produced from a point function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    /// Four-point Gauss–Legendre cell average (per direction).
    #[default]
    CellAverage,
    /// Value at the cell midpoint.
    Midpoint,
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_27, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_27, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

/// Average of `f` over `[a, b]`.
pub fn cell_average_1d(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    GAUSS4.iter().map(|&(x, w)| w * f(m + r * x)).sum::<f64>() * 0.5
}

/// Average of `f` over `[x0, x1] × [y0, y1]`, component-wise.
pub fn cell_average_2d<const K: usize>(x: (f64, f64), y: (f64, f64), f: impl Fn(f64, f64) -> [f64; K]) -> [f64; K] {
    let (mx, rx) = (0.5 * (x.0 + x.1), 0.5 * (x.1 - x.0));
    let (my, ry) = (0.5 * (y.0 + y.1), 0.5 * (y.1 - y.0));
    let mut out = [0.0; K];
    for &(qy, wy) in &GAUSS4 {
        for &(qx, wx) in &GAUSS4 {
            let v = f(mx + rx * qx, my + ry * qy);
            for k in 0..K {
                out[k] += 0.25 * wx * wy * v[k];
            }
        }
    }
    out
}

pub fn project_1d(g: &Grid1D, how: Projection, f: impl Fn(f64) -> f64) -> Vec<f64> {
    g.boundaries()
        .windows(2)
        .map(|w| match how {
            Projection::CellAverage => cell_average_1d(w[0], w[1], &f),
            Projection::Midpoint => f(0.5 * (w[0] + w[1])),
        })
        .collect()
}

/// Cell values in row-major order (x fastest).
pub fn project_2d<const K: usize>(
    g: &Grid2D,
    how: Projection,
    f: impl Fn(f64, f64) -> [f64; K] + Sync,
) -> Vec<[f64; K]> {
    let bx = g.gx.boundaries();
    let by = g.gy.boundaries();
    let mut out = Vec::with_capacity(g.nx() * g.ny());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            out.push(match how {
                Projection::CellAverage => cell_average_2d((bx[i], bx[i + 1]), (by[j], by[j + 1]), &f),
                Projection::Midpoint => f(0.5 * (bx[i] + bx[i + 1]), 0.5 * (by[j] + by[j + 1])),
            });
        }
    }
    out
}

/// Wraps `x` into `[lo, hi)`.
fn wrap(x: f64, d: Interval) -> f64 {
    let l = d.length();
    x - l * ((x - d.lo) / l).floor()
}

/// Linear advection of `sin(2πx)` on the periodic unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advection1d {
    pub domain: Interval,
    pub speed: f64,
    pub alpha: f64,
    pub t_end: f64,
    pub cfl: f64,
}

impl Advection1d {
    pub fn physics(&self) -> Advection {
        Advection::new(self.speed, 0.0)
    }

    pub fn initial(&self, x: f64) -> f64 {
        (2.0 * PI * x).sin()
    }

    pub fn exact(&self, x: f64, t: f64) -> f64 {
        self.initial(wrap(x - self.speed * t, self.domain))
    }
}

pub fn advection_1d() -> Advection1d {
    Advection1d { domain: Interval::new(0.0, 1.0), speed: 1.0, alpha: 4.0 * PI * PI, t_end: 1.0, cfl: 0.95 }
}

pub type PointFn<const K: usize> = Arc<dyn Fn(f64, f64) -> [f64; K] + Send + Sync>;
pub type ExactFn<const K: usize> = Arc<dyn Fn(f64, f64, f64) -> [f64; K] + Send + Sync>;

/// A 2D initial-boundary value problem.
#[derive(Clone)]
pub struct Scenario2d<P, const K: usize> {
    pub name: &'static str,
    pub physics: P,
    pub x: Interval,
    pub y: Interval,
    pub boundaries: Boundaries,
    pub alpha: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub initial: PointFn<K>,
    pub exact: Option<ExactFn<K>>,
}

impl<P: fmt::Debug, const K: usize> fmt::Debug for Scenario2d<P, K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario2d")
            .field("name", &self.name)
            .field("physics", &self.physics)
            .field("x", &self.x)
            .field("y", &self.y)
            .field("boundaries", &self.boundaries)
            .field("alpha", &self.alpha)
            .field("t_end", &self.t_end)
            .field("cfl", &self.cfl)
            .finish_non_exhaustive()
    }
}

impl<P, const K: usize> Scenario2d<P, K> {
    pub fn initial_at(&self, x: f64, y: f64) -> [f64; K] {
        (self.initial)(x, y)
    }

    pub fn project(&self, g: &Grid2D, how: Projection) -> Vec<[f64; K]> {
        let f = &self.initial;
        project_2d(g, how, |x, y| f(x, y))
    }
}

/// `u₀ = ½ sin(πx) sin(πy)` on the periodic square `[-1, 1]²`.
pub fn advection_2d(a: f64, b: f64) -> Scenario2d<Advection, 1> {
    let d = Interval::new(-1.0, 1.0);
    let u0 = |x: f64, y: f64| [0.5 * (PI * x).sin() * (PI * y).sin()];
    Scenario2d {
        name: "advection2d",
        physics: Advection::new(a, b),
        x: d,
        y: d,
        boundaries: Boundaries::periodic(),
        alpha: PI * PI,
        t_end: 2.0,
        cfl: 0.5,
        initial: Arc::new(u0),
        exact: Some(Arc::new(move |x, y, t| u0(wrap(x - a * t, d), wrap(y - b * t, d)))),
    }
}

/// Exponent used for the velocity perturbation of the vortex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VortexProfile {
    /// `exp(0.5 (1 - r²))`, the isentropic vortex.
    #[default]
    Isentropic,
    /// `exp(0.5 (1 - r))`, as printed in the original statement.
    Verbatim,
}

pub const VORTEX_STRENGTH: f64 = 5.0;

/// Temperature perturbation of the vortex at radius² `r2`.
pub fn vortex_temperature(gamma: f64, r2: f64) -> f64 {
    let s = VORTEX_STRENGTH;
    -((gamma - 1.0) * s * s / (8.0 * gamma * PI * PI)) * (1.0 - r2).exp()
}

/// Primitive vortex state at `(x, y)`.
pub fn vortex_state(gamma: f64, profile: VortexProfile, x: f64, y: f64) -> Primitive {
    let r2 = x * x + y * y;
    let dt = vortex_temperature(gamma, r2);
    let e = match profile {
        VortexProfile::Isentropic => (0.5 * (1.0 - r2)).exp(),
        VortexProfile::Verbatim => (0.5 * (1.0 - r2.sqrt())).exp(),
    };
    let k = VORTEX_STRENGTH / (2.0 * PI) * e;
    Primitive::new(
        (1.0 + dt).powf(1.0 / (gamma - 1.0)),
        1.0 - y * k,
        1.0 + x * k,
        (1.0 + dt).powf(gamma / (gamma - 1.0)),
    )
}

/// Isentropic vortex on the periodic square `[-7, 7]²`, advected diagonally
/// for one period.
pub fn vortex(profile: VortexProfile) -> Scenario2d<Euler, 4> {
    let gas = Euler::default();
    let d = Interval::new(-7.0, 7.0);
    let u0 = move |x: f64, y: f64| gas.to_conserved(vortex_state(gas.gamma, profile, x, y));
    Scenario2d {
        name: "vortex",
        physics: gas,
        x: d,
        y: d,
        boundaries: Boundaries::periodic(),
        alpha: 7.9,
        t_end: 14.0,
        cfl: 0.5,
        initial: Arc::new(u0),
        exact: Some(Arc::new(move |x, y, t| u0(wrap(x - t, d), wrap(y - t, d)))),
    }
}

/// Mach-10 shock state behind a shock running into gas at rest with
/// `(ρ, p) = (1.4, 1)`; returns `(ρ, normal velocity, p, shock speed)`.
pub fn normal_shock(gamma: f64, mach: f64) -> (f64, f64, f64, f64) {
    let (rho0, p0) = (1.4, 1.0);
    let c0 = (gamma * p0 / rho0).sqrt();
    let m2 = mach * mach;
    let rho = rho0 * (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0);
    let p = p0 * (2.0 * gamma * m2 - (gamma - 1.0)) / (gamma + 1.0);
    let speed = mach * c0;
    let u = speed * (1.0 - rho0 / rho);
    (rho, u, p, speed)
}

pub const DMR_FOOT: f64 = 1.0 / 6.0;

/// x-position of the undisturbed incident shock at height `y` and time `t`.
pub fn dmr_shock_x(y: f64, t: f64) -> f64 {
    let (_, _, _, speed) = normal_shock(1.4, 10.0);
    DMR_FOOT + (y + 2.0 * speed * t) / 3f64.sqrt()
}

/// Double Mach reflection on `[0, 3] × [0, 1]`.
pub fn double_mach() -> Scenario2d<Euler, 4> {
    let gas = Euler::default();
    let (rho, un, p, _) = normal_shock(gas.gamma, 10.0);
    let (sin, cos) = (PI / 6.0).sin_cos();
    let post = gas.to_conserved(Primitive::new(rho, un * cos, -un * sin, p));
    let pre = gas.to_conserved(Primitive::new(1.4, 0.0, 0.0, 1.0));
    let state = move |x: f64, y: f64, t: f64| if x < dmr_shock_x(y, t) { post } else { pre };
    let top: BoundaryFn = Arc::new(move |x, y, t| state(x, y, t).to_vec());
    Scenario2d {
        name: "double-mach",
        physics: gas,
        x: Interval::new(0.0, 3.0),
        y: Interval::new(0.0, 1.0),
        boundaries: Boundaries {
            left: Bc::Fixed(post.to_vec()),
            right: Bc::Outflow,
            bottom: Bc::Split {
                at: DMR_FOOT,
                before: Box::new(Bc::Fixed(post.to_vec())),
                after: Box::new(Bc::Reflect),
            },
            top: Bc::Function(top),
        },
        alpha: 0.0,
        t_end: 0.2,
        cfl: 0.5,
        initial: Arc::new(move |x, y| state(x, y, 0.0)),
        exact: None,
    }
}

/// Four interacting shocks on the unit square; states are `(ρ, p, u, v)`.
pub const RIEMANN_QUADRANTS: [[f64; 4]; 4] =
    [[1.5, 1.5, 0.0, 0.0], [0.5323, 0.3, 1.206, 0.0], [0.138, 0.029, 1.206, 1.206], [0.5323, 0.3, 0.0, 1.206]];

pub fn riemann_state(x: f64, y: f64) -> Primitive {
    let q = match (x > 0.5, y > 0.5) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    };
    let [rho, p, u, v] = RIEMANN_QUADRANTS[q];
    Primitive::new(rho, u, v, p)
}

pub fn riemann_2d() -> Scenario2d<Euler, 4> {
    let gas = Euler::default();
    Scenario2d {
        name: "riemann2d",
        physics: gas,
        x: Interval::new(0.0, 1.0),
        y: Interval::new(0.0, 1.0),
        boundaries: Boundaries::outflow(),
        alpha: 0.0,
        t_end: 0.3,
        cfl: 0.5,
        initial: Arc::new(move |x, y| gas.to_conserved(riemann_state(x, y))),
        exact: None,
    }
}
