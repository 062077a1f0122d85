//! Dimension-split finite-volume scheme on tensor-product grids.
//!
//! One right-hand-side evaluation runs, per direction:
//!
//! 1. 1D reconstruction of face averages along every grid line,
//! 2. conversion of face averages to face-midpoint values,
//! 3. numerical flux at the face midpoints,
//! 4. conversion of the point fluxes back to face averages,
//!
//! and finally the flux difference. Steps 2 and 4 apply the fourth-order
//! transverse correction `∓ (a₋ - 2a₀ + a₊) / 24`; without them the scheme
//! is second order.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, PhysicsError, Result};
use crate::field::{extended_axis, Boundaries, BranchCounters, Patch, GHOST};
use crate::kernels::{BranchTally, LimiterKernel, Reconstructor, SwitchParams};
use crate::mesh::Grid2D;
use crate::physics::{Axis, Physics};
use crate::scheme1d::{reconstruct_line, FaceStates};
use crate::timeint::{dt_2d, ssp_rk3_step, StepControl, SSP_RK3_WEIGHTS};

/// Point value at the middle of three face averages.
#[inline]
pub fn average_to_point(lo: f64, mid: f64, hi: f64) -> f64 {
    mid - (lo - 2.0 * mid + hi) / 24.0
}

/// Face average from three point values.
#[inline]
pub fn point_to_average(lo: f64, mid: f64, hi: f64) -> f64 {
    mid + (lo - 2.0 * mid + hi) / 24.0
}

#[inline]
fn map3<const K: usize>(lo: &[f64; K], mid: &[f64; K], hi: &[f64; K], f: fn(f64, f64, f64) -> f64) -> [f64; K] {
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = f(lo[k], mid[k], hi[k]);
    }
    out
}

/// Cell widths of a patch along both axes, including [`GHOST`] cells on each
/// side (entry `k` belongs to cell `k - 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchAxes {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub uniform_x: bool,
    pub uniform_y: bool,
}

impl PatchAxes {
    pub fn uniform(nx: usize, ny: usize, hx: f64, hy: f64) -> Self {
        Self { dx: vec![hx; nx + 2 * GHOST], dy: vec![hy; ny + 2 * GHOST], uniform_x: true, uniform_y: true }
    }

    pub fn nx(&self) -> usize {
        self.dx.len() - 2 * GHOST
    }

    pub fn ny(&self) -> usize {
        self.dy.len() - 2 * GHOST
    }

    #[inline]
    pub fn width(&self, axis: Axis, i: usize) -> f64 {
        match axis {
            Axis::X => self.dx[i + GHOST],
            Axis::Y => self.dy[i + GHOST],
        }
    }
}

/// Face-averaged numerical fluxes of a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes<const K: usize> {
    nx: usize,
    ny: usize,
    /// `ny` rows of `nx + 1` x-face fluxes.
    x: Vec<[f64; K]>,
    /// `nx` columns of `ny + 1` y-face fluxes.
    y: Vec<[f64; K]>,
}

impl<const K: usize> FaceFluxes<K> {
    /// Flux through the x-face `f` (between cells `f-1` and `f`) of row `j`.
    #[inline]
    pub fn x_face(&self, f: usize, j: usize) -> &[f64; K] {
        &self.x[j * (self.nx + 1) + f]
    }

    /// Flux through the y-face `f` of column `i`.
    #[inline]
    pub fn y_face(&self, i: usize, f: usize) -> &[f64; K] {
        &self.y[i * (self.ny + 1) + f]
    }

    /// `-(F_{i+1/2} - F_{i-1/2}) / Δx_i - (G_{j+1/2} - G_{j-1/2}) / Δy_j`.
    pub fn divergence(&self, axes: &PatchAxes) -> Patch<K> {
        let mut out = Patch::zeros(self.nx, self.ny);
        for j in 0..self.ny {
            let dy = axes.width(Axis::Y, j);
            for i in 0..self.nx {
                let dx = axes.width(Axis::X, i);
                let (fl, fr) = (self.x_face(i, j), self.x_face(i + 1, j));
                let (gl, gr) = (self.y_face(i, j), self.y_face(i, j + 1));
                let o = out.get_mut(i as isize, j as isize);
                for k in 0..K {
                    o[k] = -(fr[k] - fl[k]) / dx - (gr[k] - gl[k]) / dy;
                }
            }
        }
        out
    }

    /// Net flux leaving the patch through its outer faces, weighted by face
    /// length: `d/dt Σ area·u = -outflow` for the semi-discrete scheme.
    pub fn outflow(&self, axes: &PatchAxes) -> [f64; K] {
        let mut out = [0.0; K];
        for j in 0..self.ny {
            let dy = axes.width(Axis::Y, j);
            let (l, r) = (self.x_face(0, j), self.x_face(self.nx, j));
            for k in 0..K {
                out[k] += dy * (r[k] - l[k]);
            }
        }
        for i in 0..self.nx {
            let dx = axes.width(Axis::X, i);
            let (b, t) = (self.y_face(i, 0), self.y_face(i, self.ny));
            for k in 0..K {
                out[k] += dx * (t[k] - b[k]);
            }
        }
        out
    }
}

/// Options of one flux evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub rx: Reconstructor,
    pub ry: Reconstructor,
    /// Apply the transverse point/average conversions.
    pub order_fix: bool,
}

/// Diagnostics gathered during a flux evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub branches: BranchTally,
    /// Face points whose corrected value was inadmissible and fell back to
    /// the face average.
    pub point_fallbacks: u64,
}

impl SweepStats {
    fn merge(&mut self, o: SweepStats) {
        self.branches.merge(o.branches);
        self.point_fallbacks += o.point_fallbacks;
    }
}

/// Face-averaged fluxes of a patch whose ghost cells (corners included) are
/// filled.
pub fn face_fluxes<P: Physics<K>, const K: usize>(
    u: &Patch<K>,
    axes: &PatchAxes,
    physics: &P,
    cfg: &SweepConfig,
) -> Result<(FaceFluxes<K>, SweepStats)> {
    let (nx, ny) = (u.nx(), u.ny());
    let (x, sx) = sweep(u, Axis::X, nx, ny, &axes.dx, axes.uniform_x, &cfg.rx, physics, cfg.order_fix)?;
    let (y, sy) = sweep(u, Axis::Y, ny, nx, &axes.dy, axes.uniform_y, &cfg.ry, physics, cfg.order_fix)?;
    let mut stats = sx;
    stats.merge(sy);
    Ok((FaceFluxes { nx, ny, x, y }, stats))
}

/// Fluxes through the faces normal to `axis`, as `m` lines of `n + 1` faces.
#[allow(clippy::too_many_arguments)]
fn sweep<P: Physics<K>, const K: usize>(
    u: &Patch<K>,
    axis: Axis,
    n: usize,
    m: usize,
    widths: &[f64],
    uniform: bool,
    recon: &Reconstructor,
    physics: &P,
    order_fix: bool,
) -> Result<(Vec<[f64; K]>, SweepStats)> {
    // (along, across) -> (i, j)
    let ij = |a: isize, t: isize| match axis {
        Axis::X => (a, t),
        Axis::Y => (t, a),
    };
    let cell_err = |a: isize, t: isize, e: PhysicsError| {
        let (i, j) = ij(a, t);
        Error::Physics(e.at(i, j))
    };
    let m = m as isize;
    let halo: isize = if order_fix { 2 } else { 0 };

    // 1. face averages on every line that a correction may touch
    let lines: Vec<(FaceStates<K>, BranchTally)> = (-halo..m + halo)
        .into_par_iter()
        .map(|t| {
            let mut tally = BranchTally::default();
            let cell = |a: isize| {
                let (i, j) = ij(a, t);
                *u.get(i, j)
            };
            reconstruct_line(cell, n, widths, uniform, recon, physics, &mut tally)
                .map(|f| (f, tally))
                .map_err(|(a, e)| cell_err(a, t, e))
        })
        .collect::<Result<_>>()?;
    let mut stats = SweepStats::default();
    for (_, t) in &lines {
        stats.branches.merge(*t);
    }
    let line = |t: isize| &lines[(t + halo) as usize].0;

    // 2.–3. point values and point fluxes
    let flux_halo = halo / 2;
    let fallbacks = AtomicU64::new(0);
    let point_flux: Vec<Vec<[f64; K]>> = (-flux_halo..m + flux_halo)
        .into_par_iter()
        .map(|t| {
            let mut out = Vec::with_capacity(n + 1);
            for f in 0..=n {
                let (qm, qp) = (&line(t).minus[f], &line(t).plus[f]);
                let mut point = None;
                if order_fix {
                    let (lo, hi) = (line(t - 1), line(t + 1));
                    let pm = map3(&lo.minus[f], qm, &hi.minus[f], average_to_point);
                    let pp = map3(&lo.plus[f], qp, &hi.plus[f], average_to_point);
                    // an inadmissible point state falls back to the face average
                    point = physics.numerical_flux(&pm, &pp, axis).ok();
                    if point.is_none() {
                        fallbacks.fetch_add(1, Ordering::Relaxed);
                    }
                }
                let fl = match point {
                    Some(fl) => fl,
                    None => physics.numerical_flux(qm, qp, axis).map_err(|e| cell_err(f as isize, t, e))?,
                };
                out.push(fl);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    stats.point_fallbacks = fallbacks.into_inner();

    // 4. face averages of the fluxes
    let pf = |t: isize| &point_flux[(t + flux_halo) as usize];
    let mut out = Vec::with_capacity(m as usize * (n + 1));
    for t in 0..m {
        if order_fix {
            let (lo, mid, hi) = (pf(t - 1), pf(t), pf(t + 1));
            out.extend((0..=n).map(|f| map3(&lo[f], &mid[f], &hi[f], point_to_average)));
        } else {
            out.extend_from_slice(pf(t));
        }
    }
    Ok((out, stats))
}

/// Largest signal speeds `(s_x, s_y)` over the interior of a patch.
pub fn max_speeds<P: Physics<K>, const K: usize>(u: &Patch<K>, physics: &P) -> Result<(f64, f64)> {
    let mut s = (0.0_f64, 0.0_f64);
    for (i, j, q) in u.interior() {
        let at = |e: PhysicsError| Error::Physics(e.at(i as isize, j as isize));
        s.0 = s.0.max(physics.max_speed(q, Axis::X).map_err(at)?);
        s.1 = s.1.max(physics.max_speed(q, Axis::Y).map_err(at)?);
    }
    Ok(s)
}

/// Summary of a completed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats<const K: usize> {
    pub steps: usize,
    /// Time-integrated outflow `∫ outflow dt` through the domain boundary.
    pub outflow: [f64; K],
}

/// The 2D scheme on a single tensor-product grid.
pub struct Scheme2d<'a, P, const K: usize> {
    grid: &'a Grid2D,
    physics: &'a P,
    bcs: Boundaries,
    cfg: SweepConfig,
    axes: PatchAxes,
    xc: Vec<f64>,
    yc: Vec<f64>,
    counters: BranchCounters,
    fallbacks: AtomicU64,
}

impl<'a, P: Physics<K>, const K: usize> Scheme2d<'a, P, K> {
    /// The switch of each direction uses that direction's mean width.
    pub fn new(grid: &'a Grid2D, physics: &'a P, kernel: LimiterKernel, alpha: f64, bcs: Boundaries) -> Result<Self> {
        let rx = Reconstructor::new(kernel, SwitchParams::new(alpha, grid.gx.mean_width())?);
        let ry = Reconstructor::new(kernel, SwitchParams::new(alpha, grid.gy.mean_width())?);
        let px = bcs.left.is_periodic() && bcs.right.is_periodic();
        let py = bcs.bottom.is_periodic() && bcs.top.is_periodic();
        let (xc, dx) = extended_axis(grid.gx.boundaries(), grid.gx.widths(), px);
        let (yc, dy) = extended_axis(grid.gy.boundaries(), grid.gy.widths(), py);
        Ok(Self {
            grid,
            physics,
            bcs,
            cfg: SweepConfig { rx, ry, order_fix: true },
            axes: PatchAxes { dx, dy, uniform_x: grid.gx.is_uniform(), uniform_y: grid.gy.is_uniform() },
            xc,
            yc,
            counters: BranchCounters::default(),
            fallbacks: AtomicU64::new(0),
        })
    }

    pub fn with_order_fix(mut self, on: bool) -> Self {
        self.cfg.order_fix = on;
        self
    }

    pub fn with_weno_eps(mut self, eps: f64) -> Self {
        self.cfg.rx.weno_eps = eps;
        self.cfg.ry.weno_eps = eps;
        self
    }

    pub fn grid(&self) -> &Grid2D {
        self.grid
    }

    pub fn axes(&self) -> &PatchAxes {
        &self.axes
    }

    pub fn branch_counts(&self) -> BranchTally {
        self.counters.snapshot()
    }

    pub fn point_fallbacks(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// Cell-average patch of a point function.
    pub fn patch_from(&self, values: &[[f64; K]]) -> Patch<K> {
        let nx = self.grid.nx();
        Patch::from_fn(nx, self.grid.ny(), |i, j| values[j * nx + i])
    }

    pub fn fill_ghosts(&self, u: &mut Patch<K>, t: f64) {
        u.fill_physical_ghosts(&self.bcs, self.physics, (&self.xc, &self.yc), t, [true; 4]);
    }

    /// Fluxes of a patch whose ghosts are filled.
    pub fn fluxes(&self, u: &Patch<K>) -> Result<FaceFluxes<K>> {
        let (f, stats) = face_fluxes(u, &self.axes, self.physics, &self.cfg)?;
        self.counters.add(stats.branches);
        self.fallbacks.fetch_add(stats.point_fallbacks, Ordering::Relaxed);
        Ok(f)
    }

    pub fn rhs(&self, u: &mut Patch<K>, t: f64) -> Result<Patch<K>> {
        self.fill_ghosts(u, t);
        Ok(self.fluxes(u)?.divergence(&self.axes))
    }

    pub fn compute_dt(&self, u: &Patch<K>, cfl: f64) -> Result<f64> {
        let (sx, sy) = max_speeds(u, self.physics)?;
        dt_2d(cfl, self.grid.gx.min_width(), self.grid.gy.min_width(), sx, sy)
    }

    /// One SSP-RK3 step; returns the new state and the outflow integrated
    /// over the step.
    pub fn step(&self, u: &Patch<K>, t: f64, dt: f64) -> Result<(Patch<K>, [f64; K])> {
        let mut stage = 0;
        let mut out = [0.0; K];
        let next = ssp_rk3_step(u, t, dt, |s, ts| {
            self.fill_ghosts(s, ts);
            let f = self.fluxes(s)?;
            let w = SSP_RK3_WEIGHTS[stage] * dt;
            for (o, v) in out.iter_mut().zip(f.outflow(&self.axes)) {
                *o += w * v;
            }
            stage += 1;
            Ok::<_, Error>(f.divergence(&self.axes))
        })?;
        Ok((next, out))
    }

    /// Advances `u` to `control.t_end`.
    pub fn run(&self, u: &mut Patch<K>, control: &mut StepControl) -> Result<RunStats<K>> {
        let mut stats = RunStats { steps: 0, outflow: [0.0; K] };
        while !control.finished() {
            let dt = control.clamp(self.compute_dt(u, control.cfl)?);
            let (next, out) = self.step(u, control.t, dt)?;
            *u = next;
            for (o, v) in stats.outflow.iter_mut().zip(out) {
                *o += v;
            }
            control.advance(dt);
            stats.steps += 1;
        }
        Ok(stats)
    }

    /// `Σ area·u` over the interior.
    pub fn total(&self, u: &Patch<K>) -> [f64; K] {
        let mut s = [0.0; K];
        for (i, j, q) in u.interior() {
            let a = self.grid.area(i, j);
            for k in 0..K {
                s[k] += a * q[k];
            }
        }
        s
    }
}
