//! Semi-discrete finite-volume scheme in one dimension.

use crate::error::{Error, PhysicsError, Result};
use crate::field::{extended_axis, Bc, BranchCounters, Field1D, GHOST};
use crate::kernels::{BranchTally, Reconstructor, WidthTriple};
use crate::mesh::Grid1D;
use crate::physics::{Axis, Physics};
use crate::timeint::{dt_1d, ssp_rk3_step, StepControl};

/// Interface states at faces `0..=n`; face `f` separates cells `f-1` and `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceStates<const K: usize> {
    /// `u⁻`, reconstructed from the cell on the left.
    pub minus: Vec<[f64; K]>,
    /// `u⁺`, reconstructed from the cell on the right.
    pub plus: Vec<[f64; K]>,
}

/// Reconstructs the interface states of one line of `n` cells.
///
/// `cell(i)` must be valid for `i` in `-2..n+2`; `widths` holds the widths of
/// those cells (entry `k` belongs to cell `k - 2`). Each cell's two face
/// values are made admissible by [`Physics::fix_faces`]. On failure the index
/// of the offending cell is returned with the error.
pub fn reconstruct_line<const K: usize, P: Physics<K>>(
    cell: impl Fn(isize) -> [f64; K],
    n: usize,
    widths: &[f64],
    uniform: bool,
    recon: &Reconstructor,
    physics: &P,
    tally: &mut BranchTally,
) -> std::result::Result<FaceStates<K>, (isize, PhysicsError)> {
    debug_assert_eq!(widths.len(), n + 2 * GHOST);
    let mut minus = vec![[0.0; K]; n + 1];
    let mut plus = vec![[0.0; K]; n + 1];
    let (mut um, mut ui) = (cell(-2), cell(-1));
    for i in -1..=n as isize {
        let up = cell(i + 1);
        let mut faces = [[0.0; K]; 2];
        if uniform {
            for k in 0..K {
                (faces[0][k], faces[1][k]) = recon.faces(um[k], ui[k], up[k], tally);
            }
        } else {
            let c = (i + GHOST as isize) as usize;
            let w = WidthTriple::new(widths[c - 1], widths[c], widths[c + 1]);
            for k in 0..K {
                (faces[0][k], faces[1][k]) = recon.faces_neq(um[k], ui[k], up[k], w, tally);
            }
        }
        physics.fix_faces(&ui, &mut faces).map_err(|e| (i, e))?;
        if i >= 0 {
            plus[i as usize] = faces[0];
        }
        if i < n as isize {
            minus[(i + 1) as usize] = faces[1];
        }
        (um, ui) = (ui, up);
    }
    Ok(FaceStates { minus, plus })
}

pub struct Scheme1d<'a, P, const K: usize> {
    grid: &'a Grid1D,
    physics: &'a P,
    recon: Reconstructor,
    left: Bc,
    right: Bc,
    widths: Vec<f64>,
    ghost_centers: [f64; 4],
    counters: BranchCounters,
}

impl<'a, P: Physics<K>, const K: usize> Scheme1d<'a, P, K> {
    pub fn new(grid: &'a Grid1D, physics: &'a P, recon: Reconstructor, left: Bc, right: Bc) -> Self {
        let periodic = left.is_periodic() && right.is_periodic();
        let (centers, widths) = extended_axis(grid.boundaries(), grid.widths(), periodic);
        let n = grid.len();
        let ghost_centers = [centers[0], centers[1], centers[n + GHOST], centers[n + GHOST + 1]];
        Self { grid, physics, recon, left, right, widths, ghost_centers, counters: BranchCounters::default() }
    }

    pub fn grid(&self) -> &Grid1D {
        self.grid
    }

    pub fn branch_counts(&self) -> BranchTally {
        self.counters.snapshot()
    }

    pub fn fill_ghosts(&self, u: &mut Field1D<K>, t: f64) {
        u.fill_ghosts(&self.left, &self.right, self.physics, self.ghost_centers, t);
    }

    /// Reconstructs interface states from a field whose ghosts are filled.
    pub fn reconstruct(&self, u: &Field1D<K>) -> Result<FaceStates<K>> {
        let mut tally = BranchTally::default();
        let faces = reconstruct_line(
            |i| *u.get(i),
            u.len(),
            &self.widths,
            self.grid.is_uniform(),
            &self.recon,
            self.physics,
            &mut tally,
        )
        .map_err(|(i, e)| Error::Physics(e.at(i, 0)))?;
        self.counters.add(tally);
        Ok(faces)
    }

    /// `dū_i/dt = -(f̂_{i+1/2} - f̂_{i-1/2}) / Δx_i` for a field whose ghosts
    /// are filled.
    pub fn rhs_filled(&self, u: &Field1D<K>) -> Result<Field1D<K>> {
        let faces = self.reconstruct(u)?;
        let n = u.len();
        let mut flux = Vec::with_capacity(n + 1);
        for f in 0..=n {
            let fl = self
                .physics
                .numerical_flux(&faces.minus[f], &faces.plus[f], Axis::X)
                .map_err(|e| Error::Physics(e.at(f as isize, 0)))?;
            flux.push(fl);
        }
        let mut out = Field1D::zeros(n);
        for (i, (o, dx)) in out.interior_mut().iter_mut().zip(self.grid.widths()).enumerate() {
            for k in 0..K {
                o[k] = -(flux[i + 1][k] - flux[i][k]) / dx;
            }
        }
        Ok(out)
    }

    pub fn rhs(&self, u: &mut Field1D<K>, t: f64) -> Result<Field1D<K>> {
        self.fill_ghosts(u, t);
        self.rhs_filled(u)
    }

    pub fn max_speed(&self, u: &Field1D<K>) -> Result<f64> {
        let mut s = 0.0_f64;
        for (i, q) in u.interior().iter().enumerate() {
            let c = self.physics.max_speed(q, Axis::X).map_err(|e| Error::Physics(e.at(i as isize, 0)))?;
            s = s.max(c);
        }
        Ok(s)
    }

    pub fn compute_dt(&self, u: &Field1D<K>, cfl: f64) -> Result<f64> {
        dt_1d(cfl, self.grid.min_width(), self.max_speed(u)?)
    }

    /// Advances `u` from `control.t` to `control.t_end`; returns the number of
    /// steps taken.
    pub fn run(&self, u: &mut Field1D<K>, control: &mut StepControl) -> Result<usize> {
        let mut steps = 0;
        while !control.finished() {
            let dt = control.clamp(self.compute_dt(u, control.cfl)?);
            *u = ssp_rk3_step(u, control.t, dt, |s, t| self.rhs(s, t))?;
            control.advance(dt);
            steps += 1;
        }
        Ok(steps)
    }
}
