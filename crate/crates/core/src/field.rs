//! Cell storage with ghost layers and physical boundary conditions.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::kernels::BranchTally;
use crate::physics::{Axis, Physics};

/// Ghost layers on every side of a field or block.
pub const GHOST: usize = 2;
const G: isize = GHOST as isize;

/// State supplied by a boundary function at `(x, y, t)`.
pub type BoundaryFn = Arc<dyn Fn(f64, f64, f64) -> Vec<f64> + Send + Sync>;

/// Boundary condition on one side of the domain.
#[derive(Clone)]
pub enum Bc {
    Periodic,
    /// Zero-gradient copy of the nearest interior cell.
    Outflow,
    /// Mirror with the wall-normal momentum flipped.
    Reflect,
    /// Constant state.
    Fixed(Vec<f64>),
    /// Ghost cells whose tangential coordinate is below `at` use `before`,
    /// the others `after`.
    Split {
        at: f64,
        before: Box<Bc>,
        after: Box<Bc>,
    },
    /// State evaluated at the ghost cell center and current time.
    Function(BoundaryFn),
}

impl fmt::Debug for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bc::Periodic => f.write_str("Periodic"),
            Bc::Outflow => f.write_str("Outflow"),
            Bc::Reflect => f.write_str("Reflect"),
            Bc::Fixed(s) => f.debug_tuple("Fixed").field(s).finish(),
            Bc::Split { at, before, after } => {
                f.debug_struct("Split").field("at", at).field("before", before).field("after", after).finish()
            }
            Bc::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Bc {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Bc::Periodic)
    }
}

/// Boundary conditions of a rectangle.
#[derive(Debug, Clone)]
pub struct Boundaries {
    pub left: Bc,
    pub right: Bc,
    pub bottom: Bc,
    pub top: Bc,
}

impl Boundaries {
    pub fn all(bc: Bc) -> Self {
        Self { left: bc.clone(), right: bc.clone(), bottom: bc.clone(), top: bc }
    }

    pub fn periodic() -> Self {
        Self::all(Bc::Periodic)
    }

    pub fn outflow() -> Self {
        Self::all(Bc::Outflow)
    }
}

pub(crate) fn to_state<const K: usize>(v: &[f64]) -> [f64; K] {
    let mut out = [0.0; K];
    for (o, x) in out.iter_mut().zip(v) {
        *o = *x;
    }
    out
}

/// Thread-safe accumulator for limiter branch counts.
#[derive(Debug, Default)]
pub struct BranchCounters {
    unlimited: AtomicU64,
    limited: AtomicU64,
}

impl BranchCounters {
    pub fn add(&self, t: BranchTally) {
        if t.unlimited > 0 {
            self.unlimited.fetch_add(t.unlimited, Ordering::Relaxed);
        }
        if t.limited > 0 {
            self.limited.fetch_add(t.limited, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> BranchTally {
        BranchTally { unlimited: self.unlimited.load(Ordering::Relaxed), limited: self.limited.load(Ordering::Relaxed) }
    }

    pub fn reset(&self) {
        self.unlimited.store(0, Ordering::Relaxed);
        self.limited.store(0, Ordering::Relaxed);
    }
}

/// 1D cell averages with [`GHOST`] ghost cells on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D<const K: usize> {
    n: usize,
    data: Vec<[f64; K]>,
}

impl<const K: usize> Field1D<K> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![[0.0; K]; n + 2 * GHOST] }
    }

    pub fn from_interior(values: &[[f64; K]]) -> Self {
        let mut f = Self::zeros(values.len());
        f.interior_mut().copy_from_slice(values);
        f
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: isize) -> &[f64; K] {
        &self.data[(i + G) as usize]
    }

    #[inline]
    pub fn get_mut(&mut self, i: isize) -> &mut [f64; K] {
        &mut self.data[(i + G) as usize]
    }

    pub fn interior(&self) -> &[[f64; K]] {
        &self.data[GHOST..GHOST + self.n]
    }

    pub fn interior_mut(&mut self) -> &mut [[f64; K]] {
        let n = self.n;
        &mut self.data[GHOST..GHOST + n]
    }

    /// All entries including ghosts.
    pub fn raw(&self) -> &[[f64; K]] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [[f64; K]] {
        &mut self.data
    }

    /// Fills both ghost layers. `centers` are the cell centers of the ghost
    /// cells `[-2, -1, n, n+1]` (needed by [`Bc::Function`]).
    pub fn fill_ghosts<P: Physics<K>>(&mut self, left: &Bc, right: &Bc, physics: &P, ghost_centers: [f64; 4], t: f64) {
        let n = self.n as isize;
        for k in 0..G {
            let ghost = -1 - k;
            let x = ghost_centers[(1 - k) as usize];
            let v = ghost_value(
                left,
                physics,
                Axis::X,
                x,
                0.0,
                t,
                || *self.get(k),
                || *self.get(n - 1 - k),
                || *self.get(0),
            );
            *self.get_mut(ghost) = v;

            let ghost = n + k;
            let x = ghost_centers[(2 + k) as usize];
            let v = ghost_value(
                right,
                physics,
                Axis::X,
                x,
                0.0,
                t,
                || *self.get(n - 1 - k),
                || *self.get(k),
                || *self.get(n - 1),
            );
            *self.get_mut(ghost) = v;
        }
    }
}

/// Value of one ghost cell. `mirror` is the interior cell at the reflected
/// position, `wrap` the periodic image and `edge` the nearest interior cell.
#[allow(clippy::too_many_arguments)]
#[inline]
fn ghost_value<const K: usize, P: Physics<K>>(
    bc: &Bc,
    physics: &P,
    normal: Axis,
    x: f64,
    y: f64,
    t: f64,
    mirror: impl Fn() -> [f64; K],
    wrap: impl Fn() -> [f64; K],
    edge: impl Fn() -> [f64; K],
) -> [f64; K] {
    match bc {
        Bc::Periodic => wrap(),
        Bc::Outflow => edge(),
        Bc::Reflect => physics.reflect(&mirror(), normal),
        Bc::Fixed(s) => to_state(s),
        Bc::Function(f) => to_state(&f(x, y, t)),
        Bc::Split { at, before, after } => {
            let tangential = match normal {
                Axis::X => y,
                Axis::Y => x,
            };
            let side = if tangential < *at { before } else { after };
            ghost_value(side, physics, normal, x, y, t, mirror, wrap, edge)
        }
    }
}

/// A rectangular array of cells with [`GHOST`] ghost layers on every side,
/// stored row-major (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<const K: usize> {
    nx: usize,
    ny: usize,
    data: Vec<[f64; K]>,
}

impl<const K: usize> Patch<K> {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self { nx, ny, data: vec![[0.0; K]; (nx + 2 * GHOST) * (ny + 2 * GHOST)] }
    }

    pub fn filled(nx: usize, ny: usize, value: [f64; K]) -> Self {
        Self { nx, ny, data: vec![value; (nx + 2 * GHOST) * (ny + 2 * GHOST)] }
    }

    /// Builds a patch whose interior cell `(i, j)` is `f(i, j)`.
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> [f64; K]) -> Self {
        let mut p = Self::zeros(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                *p.get_mut(i as isize, j as isize) = f(i, j);
            }
        }
        p
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Row stride of the underlying storage.
    #[inline]
    pub fn stride(&self) -> usize {
        self.nx + 2 * GHOST
    }

    #[inline]
    pub fn index(&self, i: isize, j: isize) -> usize {
        debug_assert!(i >= -G && i < self.nx as isize + G, "i = {i}");
        debug_assert!(j >= -G && j < self.ny as isize + G, "j = {j}");
        (j + G) as usize * self.stride() + (i + G) as usize
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize) -> &[f64; K] {
        &self.data[self.index(i, j)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: isize, j: isize) -> &mut [f64; K] {
        let k = self.index(i, j);
        &mut self.data[k]
    }

    pub fn raw(&self) -> &[[f64; K]] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [[f64; K]] {
        &mut self.data
    }

    /// Interior values in row-major order.
    pub fn interior(&self) -> impl Iterator<Item = (usize, usize, &[f64; K])> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j, self.get(i as isize, j as isize))))
    }

    /// Copy with rows and columns exchanged.
    pub fn transposed(&self) -> Self {
        let mut t = Self::zeros(self.ny, self.nx);
        for j in -G..self.ny as isize + G {
            for i in -G..self.nx as isize + G {
                *t.get_mut(j, i) = *self.get(i, j);
            }
        }
        t
    }

    /// Fills ghost cells on the sides selected by `sides` (left, right,
    /// bottom, top) from the boundary conditions. Periodic sides wrap within
    /// this patch. The x-sides are filled over the full ghost height first,
    /// so the y-pass fills the corners from already valid columns.
    pub fn fill_physical_ghosts<P: Physics<K>>(
        &mut self,
        bcs: &Boundaries,
        physics: &P,
        centers: (&[f64], &[f64]),
        t: f64,
        sides: [bool; 4],
    ) {
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        let (xc, yc) = centers;
        let cx = |i: isize| xc[(i + G) as usize];
        let cy = |j: isize| yc[(j + G) as usize];
        for j in -G..ny + G {
            for k in 0..G {
                if sides[0] {
                    let g = -1 - k;
                    let v = ghost_value(
                        &bcs.left,
                        physics,
                        Axis::X,
                        cx(g),
                        cy(j),
                        t,
                        || *self.get(k, j),
                        || *self.get(nx - 1 - k, j),
                        || *self.get(0, j),
                    );
                    *self.get_mut(g, j) = v;
                }
                if sides[1] {
                    let g = nx + k;
                    let v = ghost_value(
                        &bcs.right,
                        physics,
                        Axis::X,
                        cx(g),
                        cy(j),
                        t,
                        || *self.get(nx - 1 - k, j),
                        || *self.get(k, j),
                        || *self.get(nx - 1, j),
                    );
                    *self.get_mut(g, j) = v;
                }
            }
        }
        for i in -G..nx + G {
            for k in 0..G {
                if sides[2] {
                    let g = -1 - k;
                    let v = ghost_value(
                        &bcs.bottom,
                        physics,
                        Axis::Y,
                        cx(i),
                        cy(g),
                        t,
                        || *self.get(i, k),
                        || *self.get(i, ny - 1 - k),
                        || *self.get(i, 0),
                    );
                    *self.get_mut(i, g) = v;
                }
                if sides[3] {
                    let g = ny + k;
                    let v = ghost_value(
                        &bcs.top,
                        physics,
                        Axis::Y,
                        cx(i),
                        cy(g),
                        t,
                        || *self.get(i, ny - 1 - k),
                        || *self.get(i, k),
                        || *self.get(i, ny - 1),
                    );
                    *self.get_mut(i, g) = v;
                }
            }
        }
    }
}

/// Cell centers of a 1D axis extended by [`GHOST`] mirrored cells on each
/// side, together with the matching widths. Periodic axes wrap the widths.
pub fn extended_axis(boundaries: &[f64], widths: &[f64], periodic: bool) -> (Vec<f64>, Vec<f64>) {
    let n = widths.len();
    let mut w = Vec::with_capacity(n + 2 * GHOST);
    for k in (0..GHOST).rev() {
        w.push(if periodic { widths[n - 1 - k] } else { widths[k] });
    }
    w.extend_from_slice(widths);
    for k in 0..GHOST {
        w.push(if periodic { widths[k] } else { widths[n - 1 - k] });
    }
    let mut c = Vec::with_capacity(n + 2 * GHOST);
    let lo = boundaries[0];
    let hi = boundaries[n];
    c.push(lo - w[1] - 0.5 * w[0]);
    c.push(lo - 0.5 * w[1]);
    for k in 0..n {
        c.push(0.5 * (boundaries[k] + boundaries[k + 1]));
    }
    c.push(hi + 0.5 * w[n + GHOST]);
    c.push(hi + w[n + GHOST] + 0.5 * w[n + GHOST + 1]);
    (c, w)
}
