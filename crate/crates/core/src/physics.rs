//! Flux functions for linear advection and the 2D Euler equations.

use crate::error::PhysicsError;

/// Coordinate direction of a flux or sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Threshold below which density and pressure count as unphysical at faces.
pub const POSITIVITY_EPS: f64 = 1e-10;

/// A hyperbolic system with `K` conserved components.
pub trait Physics<const K: usize>: Sync + Send {
    /// Physical flux in direction `axis`.
    fn flux(&self, q: &[f64; K], axis: Axis) -> [f64; K];

    /// Numerical flux between a left and a right state.
    fn numerical_flux(&self, ql: &[f64; K], qr: &[f64; K], axis: Axis) -> Result<[f64; K], PhysicsError>;

    /// Largest characteristic speed magnitude in direction `axis`.
    fn max_speed(&self, q: &[f64; K], axis: Axis) -> Result<f64, PhysicsError>;

    fn is_admissible(&self, _q: &[f64; K]) -> bool {
        true
    }

    /// Blends the reconstructed face values of one cell toward its mean so
    /// that every face is admissible. Returns the blend factor used.
    fn fix_faces(&self, _mean: &[f64; K], _faces: &mut [[f64; K]]) -> Result<f64, PhysicsError> {
        Ok(1.0)
    }

    /// Mirror image of `q` across a wall normal to `axis`.
    fn reflect(&self, q: &[f64; K], _axis: Axis) -> [f64; K] {
        *q
    }

    /// Component fed to the refinement indicator.
    fn indicator_component(&self) -> usize {
        0
    }
}

/// `u_t + a u_x + b u_y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advection {
    pub a: f64,
    pub b: f64,
}

impl Advection {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    #[inline]
    fn speed(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.a,
            Axis::Y => self.b,
        }
    }
}

impl Physics<1> for Advection {
    #[inline]
    fn flux(&self, q: &[f64; 1], axis: Axis) -> [f64; 1] {
        [self.speed(axis) * q[0]]
    }

    /// Exact upwinding.
    #[inline]
    fn numerical_flux(&self, ql: &[f64; 1], qr: &[f64; 1], axis: Axis) -> Result<[f64; 1], PhysicsError> {
        let s = self.speed(axis);
        Ok([if s >= 0.0 { s * ql[0] } else { s * qr[0] }])
    }

    #[inline]
    fn max_speed(&self, _q: &[f64; 1], axis: Axis) -> Result<f64, PhysicsError> {
        Ok(self.speed(axis).abs())
    }
}

/// Primitive Euler state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl Primitive {
    pub const fn new(rho: f64, u: f64, v: f64, p: f64) -> Self {
        Self { rho, u, v, p }
    }
}

/// Compressible Euler equations for an ideal gas; conserved state
/// `(ρ, ρu, ρv, E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Euler {
    pub gamma: f64,
}

impl Default for Euler {
    fn default() -> Self {
        Self { gamma: 1.4 }
    }
}

impl Euler {
    pub const fn new(gamma: f64) -> Self {
        Self { gamma }
    }

    #[inline]
    pub fn pressure(&self, q: &[f64; 4]) -> f64 {
        (self.gamma - 1.0) * (q[3] - 0.5 * (q[1] * q[1] + q[2] * q[2]) / q[0])
    }

    pub fn to_conserved(&self, w: Primitive) -> [f64; 4] {
        [w.rho, w.rho * w.u, w.rho * w.v, w.p / (self.gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v)]
    }

    pub fn to_primitive(&self, q: &[f64; 4]) -> Primitive {
        Primitive { rho: q[0], u: q[1] / q[0], v: q[2] / q[0], p: self.pressure(q) }
    }

    pub fn sound_speed(&self, rho: f64, p: f64) -> f64 {
        (self.gamma * p / rho).sqrt()
    }

    #[inline]
    fn checked(&self, q: &[f64; 4]) -> Result<(f64, f64, f64, f64), PhysicsError> {
        let rho = q[0];
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(PhysicsError::new(q));
        }
        let u = q[1] / rho;
        let v = q[2] / rho;
        let p = (self.gamma - 1.0) * (q[3] - 0.5 * rho * (u * u + v * v));
        if !(p > 0.0) || !p.is_finite() {
            return Err(PhysicsError::new(q));
        }
        Ok((rho, u, v, p))
    }

    /// Physical flux of an admissible state.
    pub fn flux_checked(&self, q: &[f64; 4], axis: Axis) -> Result<[f64; 4], PhysicsError> {
        self.checked(q)?;
        Ok(self.flux(q, axis))
    }
}

impl Physics<4> for Euler {
    #[inline]
    fn flux(&self, q: &[f64; 4], axis: Axis) -> [f64; 4] {
        let rho = q[0];
        let u = q[1] / rho;
        let v = q[2] / rho;
        let p = (self.gamma - 1.0) * (q[3] - 0.5 * rho * (u * u + v * v));
        match axis {
            Axis::X => [q[1], q[1] * u + p, q[2] * u, u * (q[3] + p)],
            Axis::Y => [q[2], q[1] * v, q[2] * v + p, v * (q[3] + p)],
        }
    }

    /// Rusanov (local Lax–Friedrichs) flux.
    #[inline]
    fn numerical_flux(&self, ql: &[f64; 4], qr: &[f64; 4], axis: Axis) -> Result<[f64; 4], PhysicsError> {
        let (rl, ul, vl, pl) = self.checked(ql)?;
        let (rr, ur, vr, pr) = self.checked(qr)?;
        let (unl, unr) = match axis {
            Axis::X => (ul, ur),
            Axis::Y => (vl, vr),
        };
        let sl = unl.abs() + (self.gamma * pl / rl).sqrt();
        let sr = unr.abs() + (self.gamma * pr / rr).sqrt();
        let s = sl.max(sr);
        let fl = phys_flux(ql, ul, vl, pl, axis);
        let fr = phys_flux(qr, ur, vr, pr, axis);
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * s * (qr[k] - ql[k]);
        }
        Ok(out)
    }

    #[inline]
    fn max_speed(&self, q: &[f64; 4], axis: Axis) -> Result<f64, PhysicsError> {
        let (rho, u, v, p) = self.checked(q)?;
        let un = match axis {
            Axis::X => u,
            Axis::Y => v,
        };
        Ok(un.abs() + (self.gamma * p / rho).sqrt())
    }

    fn is_admissible(&self, q: &[f64; 4]) -> bool {
        self.checked(q).is_ok()
    }

    /// Scales every face of a cell back toward the cell mean with one common
    /// factor `θ ∈ [0, 1]`, the largest keeping density and pressure at or
    /// above [`POSITIVITY_EPS`] on all faces.
    fn fix_faces(&self, mean: &[f64; 4], faces: &mut [[f64; 4]]) -> Result<f64, PhysicsError> {
        let (rho_m, _, _, p_m) = self.checked(mean)?;
        let eps_rho = POSITIVITY_EPS.min(0.5 * rho_m);
        let eps_p = POSITIVITY_EPS.min(0.5 * p_m);
        let ok = |q: &[f64; 4]| q[0] >= eps_rho && self.pressure(q) >= eps_p;
        if faces.iter().all(&ok) {
            return Ok(1.0);
        }
        let blend = |f: &[f64; 4], t: f64| {
            let mut b = [0.0; 4];
            for k in 0..4 {
                b[k] = mean[k] + t * (f[k] - mean[k]);
            }
            b
        };
        let mut theta = 1.0_f64;
        for f in faces.iter() {
            if ok(f) {
                continue;
            }
            // density is linear in θ
            let mut t = if f[0] < eps_rho { (rho_m - eps_rho) / (rho_m - f[0]) } else { 1.0 };
            if !ok(&blend(f, t)) {
                // pressure is concave along the segment: bisect on [0, t]
                let (mut lo, mut hi) = (0.0, t);
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    if ok(&blend(f, mid)) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                t = lo;
            }
            theta = theta.min(t);
        }
        for f in faces.iter_mut() {
            *f = blend(f, theta);
        }
        Ok(theta)
    }

    fn reflect(&self, q: &[f64; 4], axis: Axis) -> [f64; 4] {
        match axis {
            Axis::X => [q[0], -q[1], q[2], q[3]],
            Axis::Y => [q[0], q[1], -q[2], q[3]],
        }
    }
}

#[inline]
fn phys_flux(q: &[f64; 4], u: f64, v: f64, p: f64, axis: Axis) -> [f64; 4] {
    match axis {
        Axis::X => [q[1], q[1] * u + p, q[2] * u, u * (q[3] + p)],
        Axis::Y => [q[2], q[1] * v, q[2] * v + p, v * (q[3] + p)],
    }
}
