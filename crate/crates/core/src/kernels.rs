//! Pointwise reconstruction kernels.
//!
//! Every kernel maps a pair of undivided differences `(dm, dp)` around cell
//! `i`, with `dm = ū_i - ū_{i-1}` and `dp = ū_{i+1} - ū_i`, to a slope `H` such
//! that the right interface value is `ū_i + H/2`. The left interface value is
//! `ū_i - H(dp, dm)/2`, i.e. the same kernel with the arguments swapped.
//!
//! On non-uniform grids the differences are first rescaled by the neighboring
//! cell widths (see [`scale_slopes_right`] / [`scale_slopes_left`]); the
//! resulting limited slope is multiplied by [`WidthTriple::outer_factor`] to
//! obtain the interface increment. With all three widths equal every scaling
//! factor is exactly `1.0`, so the non-uniform path reproduces the uniform one
//! bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Undivided differences `(δ_{i-1/2}, δ_{i+1/2})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopePair {
    pub dm: f64,
    pub dp: f64,
}

impl SlopePair {
    #[inline]
    pub const fn new(dm: f64, dp: f64) -> Self {
        Self { dm, dp }
    }

    /// Differences of three consecutive cell values.
    #[inline]
    pub fn from_values(um: f64, ui: f64, up: f64) -> Self {
        Self::new(ui - um, up - ui)
    }

    #[inline]
    pub fn swapped(self) -> Self {
        Self::new(self.dp, self.dm)
    }

    #[inline]
    fn norm_sq(self) -> f64 {
        self.dm * self.dm + self.dp * self.dp
    }
}

/// Widths of cells `i-1`, `i`, `i+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthTriple {
    pub dxm: f64,
    pub dxi: f64,
    pub dxp: f64,
}

impl WidthTriple {
    #[inline]
    pub const fn new(dxm: f64, dxi: f64, dxp: f64) -> Self {
        Self { dxm, dxi, dxp }
    }

    pub const fn uniform(h: f64) -> Self {
        Self::new(h, h, h)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.dxm, self.dxi, self.dxp].iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(invalid(format!("widths must be positive, got {self:?}")))
        }
    }

    #[inline]
    pub fn reversed(self) -> Self {
        Self::new(self.dxp, self.dxi, self.dxm)
    }

    /// `Δ_i`, mean of the three widths.
    #[inline]
    pub fn mean(&self) -> f64 {
        (self.dxm + self.dxi + self.dxp) / 3.0
    }

    /// `Δ_{i-1/2}`
    #[inline]
    pub fn left_mean(&self) -> f64 {
        (self.dxm + self.dxi) / 2.0
    }

    /// `Δ_{i+1/2}`
    #[inline]
    pub fn right_mean(&self) -> f64 {
        (self.dxi + self.dxp) / 2.0
    }

    /// `Δx_i / Δ_i`, written as `3Δx_i / (Δx_{i-1} + Δx_i + Δx_{i+1})`.
    ///
    /// Both `3h` and `(h + h) + h` are a single rounding of the exact value, so
    /// equal widths give exactly `1.0`.
    #[inline]
    pub fn outer_factor(&self) -> f64 {
        (3.0 * self.dxi) / (self.dxm + self.dxi + self.dxp)
    }
}

/// Parameters of the smooth/non-smooth switch.
///
/// `tau = 5/2 (α dx²)²` is precomputed once; the switch selects the
/// unlimited branch when `dm² + dp² < tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    pub alpha: f64,
    pub dx: f64,
    pub tau: f64,
}

impl SwitchParams {
    pub fn new(alpha: f64, dx: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(invalid(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(invalid(format!("dx must be positive, got {dx}")));
        }
        let s = alpha * dx * dx;
        Ok(Self { alpha, dx, tau: 2.5 * s * s })
    }

    /// Switch that always selects the limited branch.
    pub fn limited_only(dx: f64) -> Self {
        Self { alpha: 0.0, dx, tau: 0.0 }
    }
}

/// `sgn` with `sgn(0) = +1`.
#[inline]
fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Unlimited third-order slope `(2 dp + dm) / 3`.
#[inline]
pub fn h3(s: SlopePair) -> f64 {
    (2.0 * s.dp + s.dm) / 3.0
}

/// Limited third-order slope based on the double-logarithmic ansatz.
#[inline]
pub fn h3l(s: SlopePair) -> f64 {
    let sg = sgn(s.dp);
    let h = sg * h3(s);
    let inner = (2.0 * sg * s.dm).min(h).min(1.5 * s.dp.abs());
    sg * h.min((-sg * s.dm).max(inner)).max(0.0)
}

/// Which branch the combined limiter took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Unlimited,
    Limited,
}

/// Combined limiter returning the selected branch as well.
#[inline]
pub fn h3lc_branch(s: SlopePair, p: &SwitchParams) -> (f64, Branch) {
    if s.norm_sq() < p.tau {
        (h3(s), Branch::Unlimited)
    } else {
        (h3l(s), Branch::Limited)
    }
}

/// Combined limiter: `h3` where `dm² + dp² < tau`, `h3l` otherwise.
#[inline]
pub fn h3lc(s: SlopePair, p: &SwitchParams) -> f64 {
    h3lc_branch(s, p).0
}

/// Unlimited third-order slope on a non-equidistant stencil. For the left
/// interface pass `(s.swapped(), w.reversed())`.
#[inline]
pub fn h3_neq(s: SlopePair, w: WidthTriple) -> f64 {
    w.outer_factor() * h3(scale_slopes_right(s, w))
}

/// Scaled differences for the right interface of cell `i`:
/// `(Δx_{i+1} dm / Δ_{i-1/2}, Δ_{i-1/2} dp / Δ_{i+1/2})`.
#[inline]
pub fn scale_slopes_right(s: SlopePair, w: WidthTriple) -> SlopePair {
    let lm = w.left_mean();
    let rm = w.right_mean();
    SlopePair::new((w.dxp / lm) * s.dm, (lm / rm) * s.dp)
}

/// Scaled differences for the left interface of cell `i`, in the order they
/// enter the limiter: `(Δx_{i-1} dp / Δ_{i+1/2}, Δ_{i+1/2} dm / Δ_{i-1/2})`.
#[inline]
pub fn scale_slopes_left(s: SlopePair, w: WidthTriple) -> SlopePair {
    scale_slopes_right(s.swapped(), w.reversed())
}

/// Interface side of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Combined limiter on the side-appropriately scaled differences. The switch
/// compares the scaled differences against `p.tau`, which must be built from
/// the grid's mean width.
///
/// The returned value is the limited slope itself; the interface increment is
/// `outer_factor * value / 2`.
#[inline]
pub fn h3lc_neq(s: SlopePair, w: WidthTriple, side: Side, p: &SwitchParams) -> f64 {
    let scaled = match side {
        Side::Right => scale_slopes_right(s, w),
        Side::Left => scale_slopes_left(s, w),
    };
    h3lc(scaled, p)
}

/// Third-order WENO variants used for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WenoVariant {
    /// Jiang–Shu smoothness weights.
    JS,
    /// Borges et al. weights with the global indicator `|β0 - β1|`.
    Z,
}

pub const DEFAULT_WENO_EPS: f64 = 1e-6;

/// Third-order WENO expressed as a slope: the right interface value is
/// `ū_i + H/2` with `H = w0 dm + w1 dp`, the candidate stencils `{i-1, i}`
/// and `{i, i+1}` and linear weights `(1/3, 2/3)`.
#[inline]
pub fn weno3(s: SlopePair, variant: WenoVariant, eps: f64) -> f64 {
    const D0: f64 = 1.0 / 3.0;
    const D1: f64 = 2.0 / 3.0;
    let b0 = s.dm * s.dm;
    let b1 = s.dp * s.dp;
    let (a0, a1) = match variant {
        WenoVariant::JS => (D0 / ((eps + b0) * (eps + b0)), D1 / ((eps + b1) * (eps + b1))),
        WenoVariant::Z => {
            let t = (b0 - b1).abs();
            (D0 * (1.0 + t / (b0 + eps)), D1 * (1.0 + t / (b1 + eps)))
        }
    };
    (a0 * s.dm + a1 * s.dp) / (a0 + a1)
}

/// Coefficients of `p(x) = a (x - x_i)² + b (x - x_i) + c`, the quadratic
/// whose averages over cells `i-1`, `i`, `i+1` equal `um`, `ui`, `up`.
///
/// `a` and `c` follow the usual closed forms; `b` is written as
/// `[(u_{i+1} - u_i) Δ_{i-1/2}(2Δ_{i-1/2} + Δx_{i-1})
///   + (u_i - u_{i-1}) Δ_{i+1/2}(2Δ_{i+1/2} + Δx_{i+1})] / (6 Δ_{i-1/2} Δ_{i+1/2} Δ_i)`.
pub fn quadratic_coefficients(um: f64, ui: f64, up: f64, w: WidthTriple) -> (f64, f64, f64) {
    let (hm, hi, hp) = (w.dxm, w.dxi, w.dxp);
    let lm = w.left_mean();
    let rm = w.right_mean();
    let mean = w.mean();
    let denom = lm * rm * mean;
    let a = 0.5 * (rm * (um - ui) + lm * (up - ui)) / denom;
    let b = ((up - ui) * lm * (2.0 * lm + hm) + (ui - um) * rm * (2.0 * rm + hp)) / (6.0 * denom);
    let s = hm + hp;
    let c = (ui * (hi * (6.0 * hi * hi + 9.0 * hi * s + 4.0 * s * s) + 4.0 * hi * hm * hp) + 4.0 * hm * hp * s * ui
        - hi * hi * (um * (hi + hp) + up * (hi + hm)))
        / (4.0 * (hi + hm) * (hi + hp) * 3.0 * mean);
    (a, b, c)
}

/// Selectable reconstruction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimiterKernel {
    H3,
    H3L,
    H3LC,
    Weno3JS,
    Weno3Z,
    /// No reconstruction: interface values are the cell means.
    FirstOrder,
}

impl LimiterKernel {
    pub const ALL: [LimiterKernel; 6] = [
        LimiterKernel::H3,
        LimiterKernel::H3L,
        LimiterKernel::H3LC,
        LimiterKernel::Weno3JS,
        LimiterKernel::Weno3Z,
        LimiterKernel::FirstOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LimiterKernel::H3 => "h3",
            LimiterKernel::H3L => "h3l",
            LimiterKernel::H3LC => "h3lc",
            LimiterKernel::Weno3JS => "weno3js",
            LimiterKernel::Weno3Z => "weno3z",
            LimiterKernel::FirstOrder => "first-order",
        }
    }
}

impl fmt::Display for LimiterKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LimiterKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|k| k.name() == key).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            invalid(format!("unknown kernel '{s}', expected one of: {}", names.join(", ")))
        })
    }
}

/// Count of combined-limiter evaluations per branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchTally {
    pub unlimited: u64,
    pub limited: u64,
}

impl BranchTally {
    pub fn merge(&mut self, other: BranchTally) {
        self.unlimited += other.unlimited;
        self.limited += other.limited;
    }
}

/// A kernel bound to its switch parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstructor {
    pub kernel: LimiterKernel,
    pub params: SwitchParams,
    pub weno_eps: f64,
}

impl Reconstructor {
    pub fn new(kernel: LimiterKernel, params: SwitchParams) -> Self {
        Self { kernel, params, weno_eps: DEFAULT_WENO_EPS }
    }

    /// Slope for the right interface from (possibly pre-scaled) differences.
    #[inline]
    pub fn slope(&self, s: SlopePair, tally: &mut BranchTally) -> f64 {
        match self.kernel {
            LimiterKernel::H3 => h3(s),
            LimiterKernel::H3L => h3l(s),
            LimiterKernel::H3LC => {
                let (v, b) = h3lc_branch(s, &self.params);
                match b {
                    Branch::Unlimited => tally.unlimited += 1,
                    Branch::Limited => tally.limited += 1,
                }
                v
            }
            LimiterKernel::Weno3JS => weno3(s, WenoVariant::JS, self.weno_eps),
            LimiterKernel::Weno3Z => weno3(s, WenoVariant::Z, self.weno_eps),
            LimiterKernel::FirstOrder => 0.0,
        }
    }

    /// `(u⁺_{i-1/2}, u⁻_{i+1/2})` of a cell on an equidistant stencil.
    #[inline]
    pub fn faces(&self, um: f64, ui: f64, up: f64, tally: &mut BranchTally) -> (f64, f64) {
        let s = SlopePair::from_values(um, ui, up);
        let right = ui + 0.5 * self.slope(s, tally);
        let left = ui - 0.5 * self.slope(s.swapped(), tally);
        (left, right)
    }

    /// `(u⁺_{i-1/2}, u⁻_{i+1/2})` of a cell on a non-equidistant stencil.
    #[inline]
    pub fn faces_neq(&self, um: f64, ui: f64, up: f64, w: WidthTriple, tally: &mut BranchTally) -> (f64, f64) {
        let s = SlopePair::from_values(um, ui, up);
        let f = w.outer_factor();
        let right = ui + 0.5 * (f * self.slope(scale_slopes_right(s, w), tally));
        let left = ui - 0.5 * (f * self.slope(scale_slopes_left(s, w), tally));
        (left, right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sp(dm: f64, dp: f64) -> SlopePair {
        SlopePair::new(dm, dp)
    }

    #[test]
    fn h3_values() {
        assert_eq!(h3(sp(1.0, 1.0)), 1.0);
        assert_eq!(h3(sp(0.0, 0.0)), 0.0);
        assert_eq!(h3(sp(1.0, 4.0)), 3.0);
    }

    #[test]
    fn h3l_values() {
        assert_eq!(h3l(sp(1.0, 1.0)), 1.0);
        assert_eq!(h3l(sp(0.0, 0.0)), 0.0);
        assert_eq!(h3l(sp(4.0, 1.0)), 1.5);
        assert_relative_eq!(h3l(sp(-1.0, 1.0)), 1.0 / 3.0, max_relative = 1e-15);
        // zero right difference forces a zero slope regardless of sgn(0)
        assert_eq!(h3l(sp(3.0, 0.0)), 0.0);
        assert_eq!(h3l(sp(-3.0, 0.0)), 0.0);
    }

    #[test]
    fn h3lc_switch() {
        let s = sp(0.3, -0.7);
        assert_eq!(h3lc(s, &SwitchParams::new(0.0, 0.1).unwrap()), h3l(s));

        let p = SwitchParams::new(1.0, 0.1).unwrap();
        assert_relative_eq!(p.tau, 2.5e-4, max_relative = 1e-14);
        let (v, b) = h3lc_branch(sp(1e-6, 1e-6), &p);
        assert_eq!(b, Branch::Unlimited);
        assert_relative_eq!(v, 1e-6, max_relative = 1e-15);
        let (v, b) = h3lc_branch(sp(1.0, 1.0), &p);
        assert_eq!(b, Branch::Limited);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn switch_params_validation() {
        assert!(SwitchParams::new(-1.0, 0.1).is_err());
        assert!(SwitchParams::new(1.0, 0.0).is_err());
        let p = SwitchParams::new(0.0, 0.5).unwrap();
        assert_eq!(p.tau, 0.0);
    }

    #[test]
    fn switch_has_single_boundary() {
        let s = sp(0.2, -0.1);
        let r = s.norm_sq();
        for k in 0..200 {
            let tau = r * (k as f64 / 100.0);
            let p = SwitchParams { alpha: 1.0, dx: 1.0, tau };
            let (_, b) = h3lc_branch(s, &p);
            let want = if tau > r { Branch::Unlimited } else { Branch::Limited };
            assert_eq!(b, want, "tau = {tau}");
        }
    }

    #[test]
    fn h3_neq_values() {
        let w = WidthTriple::new(1.0, 2.0, 1.0);
        assert_relative_eq!(h3_neq(sp(1.0, 1.0), w), 4.0 / 3.0, max_relative = 1e-15);
        assert_eq!(h3_neq(sp(0.0, 0.0), WidthTriple::new(0.3, 1.0, 2.0)), 0.0);
        for h in [0.1, 0.04, 1.0 / 3.0, 14.0 / 64.0] {
            let s = sp(0.37, -1.3);
            assert_eq!(h3_neq(s, WidthTriple::uniform(h)), h3(s));
        }
    }

    #[test]
    fn scaled_slopes() {
        let w = WidthTriple::new(1.0, 2.0, 1.0);
        let r = scale_slopes_right(sp(1.0, 1.0), w);
        assert_relative_eq!(r.dm, 2.0 / 3.0, max_relative = 1e-15);
        assert_eq!(r.dp, 1.0);
        let l = scale_slopes_left(sp(1.0, 1.0), w);
        assert_relative_eq!(l.dm, 2.0 / 3.0, max_relative = 1e-15);
        assert_eq!(l.dp, 1.0);
        assert_eq!(scale_slopes_right(sp(0.0, 0.0), w), sp(0.0, 0.0));
        assert_eq!(scale_slopes_left(sp(0.0, 0.0), w), sp(0.0, 0.0));

        let u = WidthTriple::uniform(0.1);
        assert_eq!(scale_slopes_right(sp(0.5, -2.0), u), sp(0.5, -2.0));
        assert_eq!(scale_slopes_left(sp(0.5, -2.0), u), sp(-2.0, 0.5));
    }

    #[test]
    fn h3lc_neq_values() {
        let p = SwitchParams::new(3.0, 0.1).unwrap();
        let s = sp(0.01, 0.02);
        assert_eq!(h3lc_neq(s, WidthTriple::uniform(0.1), Side::Right, &p), h3lc(s, &p));

        let w = WidthTriple::new(0.8, 1.3, 0.9);
        let zero = SwitchParams::new(0.0, 1.0).unwrap();
        assert_eq!(h3lc_neq(s, w, Side::Left, &zero), h3l(scale_slopes_left(s, w)));

        let big = SwitchParams::new(1e6, 1.0).unwrap();
        let w = WidthTriple::new(1.0, 2.0, 1.0);
        let v = h3lc_neq(sp(1.0, 1.0), w, Side::Right, &big);
        assert_relative_eq!(v, 8.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(w.outer_factor() * v, h3_neq(sp(1.0, 1.0), w), max_relative = 1e-15);
    }

    #[test]
    fn weno_values() {
        for v in [WenoVariant::JS, WenoVariant::Z] {
            assert_relative_eq!(weno3(sp(1.0, 1.0), v, 1e-6), 1.0, max_relative = 1e-15);
            assert_eq!(weno3(sp(0.0, 0.0), v, 1e-6), 0.0);
        }
        // JS on (1, 0): a0 = (1/3)/(1+eps)², a1 = (2/3)/eps², H = a0 / (a0 + a1)
        let eps = 1e-6;
        let a0 = (1.0 / 3.0) / ((1.0 + eps) * (1.0 + eps));
        let a1 = (2.0 / 3.0) / (eps * eps);
        let want = a0 / (a0 + a1);
        let got = weno3(sp(1.0, 0.0), WenoVariant::JS, eps);
        assert_relative_eq!(got, want, max_relative = 1e-14);
        assert!((0.0..=1.0 / 3.0).contains(&got));
    }

    #[test]
    fn quadratic_examples() {
        let (a, b, c) = quadratic_coefficients(2.5, 2.5, 2.5, WidthTriple::new(0.3, 1.1, 0.7));
        assert_relative_eq!(a, 0.0, epsilon = 1e-15);
        assert_relative_eq!(b, 0.0, epsilon = 1e-15);
        assert_relative_eq!(c, 2.5, max_relative = 1e-15);

        let (a, b, c) = quadratic_coefficients(1.0, 3.0, 5.0, WidthTriple::uniform(1.0));
        assert_relative_eq!(a, 0.0, epsilon = 1e-15);
        assert_relative_eq!(b, 2.0, max_relative = 1e-15);
        assert_relative_eq!(c, 3.0, max_relative = 1e-15);

        let (a, b, c) = quadratic_coefficients(0.0, 1.0, 4.0, WidthTriple::uniform(1.0));
        assert_relative_eq!(a, 1.0, max_relative = 1e-15);
        assert_relative_eq!(b, 2.0, max_relative = 1e-15);
        assert_relative_eq!(c, 11.0 / 12.0, max_relative = 1e-15);
    }

    #[test]
    fn reconstructor_faces_on_uniform_and_neq_paths_agree() {
        let p = SwitchParams::new(4.0, 0.1).unwrap();
        for kernel in LimiterKernel::ALL {
            let r = Reconstructor::new(kernel, p);
            let mut t = BranchTally::default();
            let a = r.faces(0.3, 0.5, 0.45, &mut t);
            let b = r.faces_neq(0.3, 0.5, 0.45, WidthTriple::uniform(0.1), &mut t);
            assert_eq!(a, b, "{kernel}");
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in LimiterKernel::ALL {
            assert_eq!(k.name().parse::<LimiterKernel>().unwrap(), k);
        }
        let err = "h3lz".parse::<LimiterKernel>().unwrap_err().to_string();
        assert!(err.contains("h3lc") && err.contains("weno3z"), "{err}");
    }
}
