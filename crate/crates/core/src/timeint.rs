//! Three-stage SSP Runge–Kutta stepping and CFL step control.

use crate::error::{invalid, Error, Result};
use crate::field::{Field1D, Patch};

/// A state that can be combined linearly by the Runge–Kutta stages.
pub trait RkState: Clone {
    /// `self = base + b·((u - base) + dt·rate)`, entry-wise.
    fn combine(&mut self, base: &Self, b: f64, u: &Self, dt: f64, rate: &Self);
}

#[inline]
fn combine_slices(out: &mut [f64], base: &[f64], b: f64, u: &[f64], dt: f64, rate: &[f64]) {
    debug_assert!(out.len() == base.len() && out.len() == u.len() && out.len() == rate.len());
    for (((o, x0), x), r) in out.iter_mut().zip(base).zip(u).zip(rate) {
        *o = x0 + b * ((x - x0) + dt * r);
    }
}

impl RkState for f64 {
    fn combine(&mut self, base: &Self, b: f64, u: &Self, dt: f64, rate: &Self) {
        *self = base + b * ((u - base) + dt * rate);
    }
}

impl<const K: usize> RkState for Field1D<K> {
    fn combine(&mut self, base: &Self, b: f64, u: &Self, dt: f64, rate: &Self) {
        combine_slices(
            self.raw_mut().as_flattened_mut(),
            base.raw().as_flattened(),
            b,
            u.raw().as_flattened(),
            dt,
            rate.raw().as_flattened(),
        );
    }
}

impl<const K: usize> RkState for Patch<K> {
    fn combine(&mut self, base: &Self, b: f64, u: &Self, dt: f64, rate: &Self) {
        combine_slices(
            self.raw_mut().as_flattened_mut(),
            base.raw().as_flattened(),
            b,
            u.raw().as_flattened(),
            dt,
            rate.raw().as_flattened(),
        );
    }
}

impl<T: RkState> RkState for Vec<T> {
    fn combine(&mut self, base: &Self, b: f64, u: &Self, dt: f64, rate: &Self) {
        for (((o, x0), x), r) in self.iter_mut().zip(base).zip(u).zip(rate) {
            o.combine(x0, b, x, dt, r);
        }
    }
}

/// Stage weights with which the three right-hand-side evaluations enter the
/// final SSP-RK3 update (`u^{n+1} = u^n + dt Σ w_s L_s` for linear data).
pub const SSP_RK3_WEIGHTS: [f64; 3] = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];

/// One step of the three-stage, third-order SSP Runge–Kutta method:
///
/// ```text
/// u1 = u + dt L(u)
/// u2 = 3/4 u + 1/4 (u1 + dt L(u1))
/// u' = 1/3 u + 2/3 (u2 + dt L(u2))
/// ```
///
/// The stages are evaluated in increment form (`u + b·(stage - u + dt L)`)
/// so a vanishing right-hand side reproduces `u` bit for bit.
///
/// `rhs` receives each stage state mutably (so it may refresh ghost cells)
/// and the stage time. The input state is left untouched on failure.
pub fn ssp_rk3_step<S, E>(
    u: &S,
    t: f64,
    dt: f64,
    mut rhs: impl FnMut(&mut S, f64) -> std::result::Result<S, E>,
) -> std::result::Result<S, E>
where
    S: RkState,
{
    let mut stage = u.clone();
    let l0 = rhs(&mut stage, t)?;
    let mut u1 = u.clone();
    u1.combine(u, 1.0, &stage, dt, &l0);

    let l1 = rhs(&mut u1, t + dt)?;
    let mut u2 = u.clone();
    u2.combine(u, 0.25, &u1, dt, &l1);

    let l2 = rhs(&mut u2, t + 0.5 * dt)?;
    let mut out = u2.clone();
    out.combine(u, 2.0 / 3.0, &u2, dt, &l2);
    Ok(out)
}

/// CFL number and the time window of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub cfl: f64,
    pub t: f64,
    pub t_end: f64,
}

impl StepControl {
    pub fn new(cfl: f64, t_end: f64) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(invalid(format!("cfl must lie in (0, 1], got {cfl}")));
        }
        if !(t_end > 0.0) {
            return Err(invalid(format!("t_end must be positive, got {t_end}")));
        }
        Ok(Self { cfl, t: 0.0, t_end })
    }

    pub fn finished(&self) -> bool {
        self.t >= self.t_end
    }

    /// Clamps a proposed step so the run lands exactly on `t_end`.
    pub fn clamp(&self, dt: f64) -> f64 {
        if self.t + dt >= self.t_end {
            self.t_end - self.t
        } else {
            dt
        }
    }

    /// Advances the clock by a step previously returned from [`clamp`],
    /// snapping to `t_end` on the final step.
    ///
    /// [`clamp`]: StepControl::clamp
    pub fn advance(&mut self, dt: f64) {
        let next = self.t + dt;
        self.t = if next >= self.t_end || self.t_end - next <= 1e-14 * self.t_end { self.t_end } else { next };
    }
}

/// `cfl · min Δx / s_max`.
pub fn dt_1d(cfl: f64, min_width: f64, max_speed: f64) -> Result<f64> {
    if !(max_speed > 0.0) {
        return Err(Error::UnboundedTimeStep);
    }
    Ok(cfl * min_width / max_speed)
}

/// `cfl / (s_x / Δx_min + s_y / Δy_min)`.
pub fn dt_2d(cfl: f64, min_dx: f64, min_dy: f64, sx: f64, sy: f64) -> Result<f64> {
    let rate = sx / min_dx + sy / min_dy;
    if !(rate > 0.0) {
        return Err(Error::UnboundedTimeStep);
    }
    Ok(cfl / rate)
}
