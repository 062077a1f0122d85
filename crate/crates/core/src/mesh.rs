//! Tensor-product grids in one and two dimensions.
//!
//! A [`Grid1D`] stores cell boundaries, widths and centers. Uniform grids keep
//! every width at exactly `(x_R - x_L) / N` so that code paths specialised for
//! equal widths see bit-identical numbers; perturbed grids compute widths as
//! differences of consecutive boundaries.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Smallest number of cells a grid may have (one three-cell stencil).
pub const MIN_CELLS: usize = 3;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    boundaries: Vec<f64>,
    widths: Vec<f64>,
    centers: Vec<f64>,
    domain: Interval,
    uniform: bool,
}

impl Grid1D {
    /// Equidistant partition of `domain` into `n` cells.
    pub fn uniform(domain: Interval, n: usize) -> Result<Self> {
        check_domain(domain, n)?;
        let h = domain.length() / n as f64;
        let mut boundaries: Vec<f64> = (0..=n).map(|k| domain.lo + domain.length() * (k as f64 / n as f64)).collect();
        boundaries[n] = domain.hi;
        let centers = boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { boundaries, widths: vec![h; n], centers, domain, uniform: true })
    }

    /// Uniform grid whose interior boundaries are shifted by
    /// `c1 * sin(c2 * 2π * x_{i+1/2})`. The domain endpoints stay fixed.
    pub fn perturbed(domain: Interval, n: usize, c1: f64, c2: f64) -> Result<Self> {
        let base = Self::uniform(domain, n)?;
        if c1 == 0.0 {
            return Ok(base);
        }
        let mut b = base.boundaries;
        for x in &mut b[1..n] {
            *x += c1 * (c2 * 2.0 * PI * *x).sin();
        }
        Self::from_boundaries_in(domain, b)
    }

    /// Uniform grid with interior boundaries jittered by independent offsets
    /// drawn uniformly from `[-amplitude·h, amplitude·h)`, `h` the uniform width.
    ///
    /// The generator is ChaCha8 seeded with `seed`; boundary `k` (for
    /// `k = 1..n-1`, in order) receives `amplitude * h * (2r - 1)` where `r` is
    /// the k-th `f64` drawn from `[0, 1)`.
    pub fn random(domain: Interval, n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&amplitude) {
            return Err(invalid(format!("random grid amplitude must lie in [0, 0.5), got {amplitude}")));
        }
        let base = Self::uniform(domain, n)?;
        if amplitude == 0.0 {
            return Ok(base);
        }
        let h = domain.length() / n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = base.boundaries;
        for x in &mut b[1..n] {
            let r: f64 = rng.gen();
            *x += amplitude * h * (2.0 * r - 1.0);
        }
        Self::from_boundaries_in(domain, b)
    }

    /// Uniform grid with interior boundaries mapped by `x -> x + δ sin(c π x)`.
    pub fn sine_mapped(domain: Interval, n: usize, delta: f64, c: f64) -> Result<Self> {
        let base = Self::uniform(domain, n)?;
        if delta == 0.0 {
            return Ok(base);
        }
        let mut b = base.boundaries;
        for x in &mut b[1..n] {
            *x += delta * (c * PI * *x).sin();
        }
        Self::from_boundaries_in(domain, b)
    }

    /// Builds a grid from explicit boundaries. The first and last entries
    /// define the domain.
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < MIN_CELLS + 1 {
            return Err(invalid(format!("need at least {} boundaries, got {}", MIN_CELLS + 1, boundaries.len())));
        }
        let domain = Interval::new(boundaries[0], boundaries[boundaries.len() - 1]);
        Self::from_boundaries_in(domain, boundaries)
    }

    fn from_boundaries_in(domain: Interval, boundaries: Vec<f64>) -> Result<Self> {
        if let Some(k) = boundaries.windows(2).position(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite()) {
            return Err(invalid(format!(
                "boundaries not strictly increasing at index {}: {} >= {}",
                k + 1,
                boundaries[k],
                boundaries[k + 1]
            )));
        }
        let widths = boundaries.windows(2).map(|w| w[1] - w[0]).collect();
        let centers = boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { boundaries, widths, centers, domain, uniform: false })
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// True when the grid was built equidistant, in which case every width is
    /// bit-identical.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Average mesh size, `(x_R - x_L) / N`.
    pub fn mean_width(&self) -> f64 {
        self.domain.length() / self.len() as f64
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// One boundary coordinate per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.boundaries.len() * 24);
        for b in &self.boundaries {
            let _ = writeln!(out, "{b:.17e}");
        }
        out
    }
}

fn check_domain(domain: Interval, n: usize) -> Result<()> {
    if n < MIN_CELLS {
        return Err(invalid(format!("grid needs at least {MIN_CELLS} cells, got {n}")));
    }
    if !(domain.lo < domain.hi) || !domain.lo.is_finite() || !domain.hi.is_finite() {
        return Err(invalid(format!("degenerate domain [{}, {}]", domain.lo, domain.hi)));
    }
    Ok(())
}

/// Tensor product of two 1D grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub gx: Grid1D,
    pub gy: Grid1D,
}

impl Grid2D {
    pub fn new(gx: Grid1D, gy: Grid1D) -> Self {
        Self { gx, gy }
    }

    pub fn uniform(dx: Interval, dy: Interval, nx: usize, ny: usize) -> Result<Self> {
        Ok(Self::new(Grid1D::uniform(dx, nx)?, Grid1D::uniform(dy, ny)?))
    }

    /// Axis-aligned non-uniform grid: each axis' interior boundaries are
    /// mapped by `x -> x + δx sin(cx π x)` and `y -> y + δy sin(cy π y)`.
    #[allow(clippy::too_many_arguments)]
    pub fn sine_mapped(
        dx: Interval,
        dy: Interval,
        nx: usize,
        ny: usize,
        delta_x: f64,
        cx: f64,
        delta_y: f64,
        cy: f64,
    ) -> Result<Self> {
        Ok(Self::new(Grid1D::sine_mapped(dx, nx, delta_x, cx)?, Grid1D::sine_mapped(dy, ny, delta_y, cy)?))
    }

    pub fn nx(&self) -> usize {
        self.gx.len()
    }

    pub fn ny(&self) -> usize {
        self.gy.len()
    }

    pub fn area(&self, i: usize, j: usize) -> f64 {
        self.gx.widths()[i] * self.gy.widths()[j]
    }

    pub fn is_uniform(&self) -> bool {
        self.gx.is_uniform() && self.gy.is_uniform()
    }

    /// Both axes' boundaries, `axis,index,coordinate` per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,index,coordinate\n");
        for (axis, g) in [("x", &self.gx), ("y", &self.gy)] {
            for (k, b) in g.boundaries().iter().enumerate() {
                let _ = writeln!(out, "{axis},{k},{b:.17e}");
            }
        }
        out
    }
}
