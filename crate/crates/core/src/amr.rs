//! Block-structured adaptive refinement on a quadtree of fixed-size blocks.
//!
//! A level-`ℓ` grid is tiled by `root.0·2^ℓ × root.1·2^ℓ` blocks of
//! `bx × by` cells. Only leaves carry data; a refined block is replaced by
//! its four children. All leaves advance with one global time step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{extended_axis, Boundaries, BranchCounters, Patch, GHOST};
use crate::kernels::{BranchTally, LimiterKernel, Reconstructor, SwitchParams};
use crate::mesh::{Grid1D, Interval};
use crate::physics::Physics;
use crate::problems::cell_average_2d;
use crate::scheme2d::{face_fluxes, max_speeds, PatchAxes, SweepConfig};
use crate::timeint::{dt_2d, ssp_rk3_step, StepControl};

const G: isize = GHOST as isize;

/// Position of a block: its level and block indices within that level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockKey {
    pub level: u32,
    pub bi: i64,
    pub bj: i64,
}

impl BlockKey {
    pub fn new(level: u32, bi: i64, bj: i64) -> Self {
        Self { level, bi, bj }
    }

    pub fn parent(&self) -> Self {
        Self::new(self.level - 1, self.bi >> 1, self.bj >> 1)
    }

    /// Children in the order (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [Self; 4] {
        let (i, j, l) = (2 * self.bi, 2 * self.bj, self.level + 1);
        [Self::new(l, i, j), Self::new(l, i + 1, j), Self::new(l, i, j + 1), Self::new(l, i + 1, j + 1)]
    }
}

/// Block shape, level range and refinement controls.
#[derive(Debug, Clone, PartialEq)]
pub struct AmrConfig {
    /// Interior cells per block.
    pub block: (usize, usize),
    /// Blocks per direction on level 0.
    pub root_blocks: (usize, usize),
    pub min_level: u32,
    pub max_level: u32,
    /// Cells with an indicator above this value are refined.
    pub threshold: f64,
    /// Siblings merge when all their indicators are below
    /// `threshold / coarsen_factor`.
    pub coarsen_factor: f64,
    /// Steps between regrids.
    pub regrid_every: usize,
}

impl AmrConfig {
    pub fn new(
        block: (usize, usize),
        root_blocks: (usize, usize),
        min_level: u32,
        max_level: u32,
        threshold: f64,
    ) -> Result<Self> {
        let c = Self { block, root_blocks, min_level, max_level, threshold, coarsen_factor: 4.0, regrid_every: 4 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (bx, by) = self.block;
        if bx < 2 * GHOST || by < 2 * GHOST || bx % 2 != 0 || by % 2 != 0 {
            return Err(invalid(format!("block dimensions must be even and at least {}, got {bx}x{by}", 2 * GHOST)));
        }
        if self.root_blocks.0 == 0 || self.root_blocks.1 == 0 {
            return Err(invalid("at least one root block per direction is required"));
        }
        if self.min_level > self.max_level || self.max_level > 20 {
            return Err(invalid(format!("bad level range {}..={}", self.min_level, self.max_level)));
        }
        if !(self.threshold > 0.0) {
            return Err(invalid(format!("refinement threshold must be positive, got {}", self.threshold)));
        }
        if !(self.coarsen_factor >= 1.0) {
            return Err(invalid("coarsen factor must be at least 1"));
        }
        if self.regrid_every == 0 {
            return Err(invalid("regrid interval must be at least one step"));
        }
        Ok(())
    }
}

/// Normalized second-difference indicator of one cell: the sum of the
/// absolute second differences along both axes over `|mid|·Δx·Δy`.
/// Infinite when `mid` is zero.
pub fn refinement_indicator(x: (f64, f64), mid: f64, y: (f64, f64), dx: f64, dy: f64) -> f64 {
    if mid == 0.0 {
        return f64::INFINITY;
    }
    ((x.0 - 2.0 * mid + x.1).abs() + (y.0 - 2.0 * mid + y.1).abs()) / (mid.abs() * dx * dy)
}

/// Averages of the tensor-product quadratic through the 3×3 neighborhood
/// of cell `(i, j)` over its four quarters, in the order
/// (−,−), (+,−), (−,+), (+,+). If any quarter is inadmissible all four take
/// the cell mean.
pub fn prolong_cell<P: Physics<K>, const K: usize>(c: &Patch<K>, i: isize, j: isize, physics: &P) -> [[f64; K]; 4] {
    let u = c.get(i, j);
    let (w, e) = (c.get(i - 1, j), c.get(i + 1, j));
    let (s, n) = (c.get(i, j - 1), c.get(i, j + 1));
    let (sw, se) = (c.get(i - 1, j - 1), c.get(i + 1, j - 1));
    let (nw, ne) = (c.get(i - 1, j + 1), c.get(i + 1, j + 1));
    let mut out = [[0.0; K]; 4];
    for k in 0..K {
        let ax = (e[k] - w[k]) / 8.0;
        let ay = (n[k] - s[k]) / 8.0;
        let axy = ((ne[k] - se[k]) - (nw[k] - sw[k])) / 64.0;
        out[0][k] = u[k] - ax - ay + axy;
        out[1][k] = u[k] + ax - ay - axy;
        out[2][k] = u[k] - ax + ay - axy;
        out[3][k] = u[k] + ax + ay + axy;
    }
    if out.iter().any(|q| !physics.is_admissible(q)) {
        return [*u; 4];
    }
    out
}

/// Mean of four fine values.
#[inline]
pub fn restrict_cell<const K: usize>(q: [&[f64; K]; 4]) -> [f64; K] {
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = 0.25 * ((q[0][k] + q[1][k]) + (q[2][k] + q[3][k]));
    }
    out
}

fn quarter(si: isize, sj: isize) -> usize {
    (si + 2 * sj) as usize
}

/// The four children of a block whose ghost cells are filled, including
/// their ghost layers.
pub fn prolong_block<P: Physics<K>, const K: usize>(p: &Patch<K>, physics: &P) -> [Patch<K>; 4] {
    let (bx, by) = (p.nx(), p.ny());
    let (hx, hy) = ((bx / 2) as isize, (by / 2) as isize);
    let mut cache: BTreeMap<(isize, isize), [[f64; K]; 4]> = BTreeMap::new();
    let mut quads = |i: isize, j: isize| *cache.entry((i, j)).or_insert_with(|| prolong_cell(p, i, j, physics));
    std::array::from_fn(|c| {
        let (ci, cj) = ((c % 2) as isize, (c / 2) as isize);
        let mut child = Patch::zeros(bx, by);
        for j in -G..by as isize + G {
            for i in -G..bx as isize + G {
                let (fi, fj) = (ci * 2 * hx + i, cj * 2 * hy + j);
                let q = quads(fi.div_euclid(2), fj.div_euclid(2));
                *child.get_mut(i, j) = q[quarter(fi.rem_euclid(2), fj.rem_euclid(2))];
            }
        }
        child
    })
}

/// Interior of the parent of four children (ghosts zero).
pub fn restrict_block<const K: usize>(children: [&Patch<K>; 4]) -> Patch<K> {
    let (bx, by) = (children[0].nx(), children[0].ny());
    let (hx, hy) = (bx / 2, by / 2);
    Patch::from_fn(bx, by, |i, j| {
        let c = children[(i / hx) + 2 * (j / hy)];
        let (fi, fj) = ((2 * (i % hx)) as isize, (2 * (j % hy)) as isize);
        restrict_cell([c.get(fi, fj), c.get(fi + 1, fj), c.get(fi, fj + 1), c.get(fi + 1, fj + 1)])
    })
}

#[derive(Debug, Clone)]
struct Level {
    hx: f64,
    hy: f64,
    nx: i64,
    ny: i64,
    xb: Vec<f64>,
    yb: Vec<f64>,
    xc: Vec<f64>,
    yc: Vec<f64>,
    axes: PatchAxes,
    cfg: SweepConfig,
}

enum Cover {
    Leaf(BlockKey),
    Finer,
}

/// Refinement requirement: the region of block `key` must be covered by
/// leaves of at least level `need`.
#[derive(Debug, Clone, Copy)]
struct Need {
    key: BlockKey,
    need: u32,
}

/// Counts from one regrid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegridStats {
    pub refined: usize,
    pub coarsened: usize,
}

/// Summary of an adaptive run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AmrRunStats {
    pub steps: usize,
    pub regrids: usize,
    pub refined: usize,
    pub coarsened: usize,
}

/// Leaves of an adaptive quadtree with their data.
pub struct AmrForest<'a, P, const K: usize> {
    physics: &'a P,
    bcs: Boundaries,
    x: Interval,
    y: Interval,
    config: AmrConfig,
    periodic: (bool, bool),
    levels: Vec<Level>,
    keys: Vec<BlockKey>,
    index: BTreeMap<BlockKey, usize>,
    blocks: Vec<Patch<K>>,
    counters: BranchCounters,
    fallbacks: AtomicU64,
}

impl<'a, P: Physics<K>, const K: usize> AmrForest<'a, P, K> {
    /// A forest covering the domain with zero-valued blocks on `min_level`.
    pub fn new(
        physics: &'a P,
        x: Interval,
        y: Interval,
        bcs: Boundaries,
        kernel: LimiterKernel,
        alpha: f64,
        config: AmrConfig,
    ) -> Result<Self> {
        config.validate()?;
        let px = bcs.left.is_periodic() && bcs.right.is_periodic();
        let py = bcs.bottom.is_periodic() && bcs.top.is_periodic();
        if px != (bcs.left.is_periodic() || bcs.right.is_periodic())
            || py != (bcs.bottom.is_periodic() || bcs.top.is_periodic())
        {
            return Err(invalid("periodic boundaries must be paired"));
        }
        let (bx, by) = config.block;
        let mut levels = Vec::new();
        for l in 0..=config.max_level {
            let nx = (config.root_blocks.0 * bx) << l;
            let ny = (config.root_blocks.1 * by) << l;
            let gx = Grid1D::uniform(x, nx)?;
            let gy = Grid1D::uniform(y, ny)?;
            let (hx, hy) = (gx.widths()[0], gy.widths()[0]);
            let (xc, _) = extended_axis(gx.boundaries(), gx.widths(), px);
            let (yc, _) = extended_axis(gy.boundaries(), gy.widths(), py);
            let rx = Reconstructor::new(kernel, SwitchParams::new(alpha, gx.mean_width())?);
            let ry = Reconstructor::new(kernel, SwitchParams::new(alpha, gy.mean_width())?);
            levels.push(Level {
                hx,
                hy,
                nx: nx as i64,
                ny: ny as i64,
                xb: gx.boundaries().to_vec(),
                yb: gy.boundaries().to_vec(),
                xc,
                yc,
                axes: PatchAxes::uniform(bx, by, hx, hy),
                cfg: SweepConfig { rx, ry, order_fix: true },
            });
        }
        let l = config.min_level;
        let mut map = BTreeMap::new();
        for bj in 0..(config.root_blocks.1 << l) as i64 {
            for bi in 0..(config.root_blocks.0 << l) as i64 {
                map.insert(BlockKey::new(l, bi, bj), Patch::zeros(bx, by));
            }
        }
        let mut forest = Self {
            physics,
            bcs,
            x,
            y,
            config,
            periodic: (px, py),
            levels,
            keys: Vec::new(),
            index: BTreeMap::new(),
            blocks: Vec::new(),
            counters: BranchCounters::default(),
            fallbacks: AtomicU64::new(0),
        };
        forest.install(map);
        Ok(forest)
    }

    pub fn with_order_fix(mut self, on: bool) -> Self {
        for l in &mut self.levels {
            l.cfg.order_fix = on;
        }
        self
    }

    pub fn with_weno_eps(mut self, eps: f64) -> Self {
        for l in &mut self.levels {
            l.cfg.rx.weno_eps = eps;
            l.cfg.ry.weno_eps = eps;
        }
        self
    }

    pub fn config(&self) -> &AmrConfig {
        &self.config
    }

    pub fn keys(&self) -> &[BlockKey] {
        &self.keys
    }

    pub fn blocks(&self) -> &[Patch<K>] {
        &self.blocks
    }

    pub fn block(&self, key: &BlockKey) -> Option<&Patch<K>> {
        self.index.get(key).map(|&b| &self.blocks[b])
    }

    pub fn branch_counts(&self) -> BranchTally {
        self.counters.snapshot()
    }

    pub fn point_fallbacks(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// Cell widths on `level`.
    pub fn cell_size(&self, level: u32) -> (f64, f64) {
        let l = &self.levels[level as usize];
        (l.hx, l.hy)
    }

    /// `(x0, x1, y0, y1)` of a block.
    pub fn bounds(&self, key: &BlockKey) -> (f64, f64, f64, f64) {
        let l = &self.levels[key.level as usize];
        let (bx, by) = (self.config.block.0 as i64, self.config.block.1 as i64);
        let (i0, j0) = ((key.bi * bx) as usize, (key.bj * by) as usize);
        (l.xb[i0], l.xb[i0 + bx as usize], l.yb[j0], l.yb[j0 + by as usize])
    }

    /// Cell rectangle `(x0, x1, y0, y1)` of interior cell `(i, j)` of a block.
    pub fn cell_bounds(&self, key: &BlockKey, i: usize, j: usize) -> (f64, f64, f64, f64) {
        let l = &self.levels[key.level as usize];
        let gi = key.bi as usize * self.config.block.0 + i;
        let gj = key.bj as usize * self.config.block.1 + j;
        (l.xb[gi], l.xb[gi + 1], l.yb[gj], l.yb[gj + 1])
    }

    /// Number of leaves per level, from `min_level` to `max_level`.
    pub fn level_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; (self.config.max_level - self.config.min_level + 1) as usize];
        for k in &self.keys {
            h[(k.level - self.config.min_level) as usize] += 1;
        }
        h
    }

    fn install(&mut self, map: BTreeMap<BlockKey, Patch<K>>) {
        self.keys.clear();
        self.blocks.clear();
        self.index.clear();
        for (k, p) in map {
            self.index.insert(k, self.keys.len());
            self.keys.push(k);
            self.blocks.push(p);
        }
    }

    fn take_map(&mut self) -> BTreeMap<BlockKey, Patch<K>> {
        let keys = std::mem::take(&mut self.keys);
        let blocks = std::mem::take(&mut self.blocks);
        self.index.clear();
        keys.into_iter().zip(blocks).collect()
    }

    /// Maps block indices into the level, wrapping periodic directions.
    fn wrap(&self, level: u32, bi: i64, bj: i64) -> Option<(i64, i64)> {
        let nbx = (self.config.root_blocks.0 as i64) << level;
        let nby = (self.config.root_blocks.1 as i64) << level;
        let bi = if self.periodic.0 {
            bi.rem_euclid(nbx)
        } else if (0..nbx).contains(&bi) {
            bi
        } else {
            return None;
        };
        let bj = if self.periodic.1 {
            bj.rem_euclid(nby)
        } else if (0..nby).contains(&bj) {
            bj
        } else {
            return None;
        };
        Some((bi, bj))
    }

    fn cover(&self, level: u32, bi: i64, bj: i64, has: &impl Fn(&BlockKey) -> bool) -> Option<Cover> {
        let (bi, bj) = self.wrap(level, bi, bj)?;
        for m in (self.config.min_level..=level).rev() {
            let s = level - m;
            let k = BlockKey::new(m, bi >> s, bj >> s);
            if has(&k) {
                return Some(Cover::Leaf(k));
            }
        }
        Some(Cover::Finer)
    }

    /// Value of ghost cell `(i, j)` of the block `key` from the other leaves,
    /// or `None` outside a non-periodic domain edge.
    fn ghost_value(&self, data: &[Patch<K>], key: BlockKey, i: isize, j: isize) -> Result<Option<[f64; K]>> {
        let (bx, by) = (self.config.block.0 as i64, self.config.block.1 as i64);
        let lvl = &self.levels[key.level as usize];
        let mut gi = key.bi * bx + i as i64;
        let mut gj = key.bj * by + j as i64;
        if !(0..lvl.nx).contains(&gi) {
            if !self.periodic.0 {
                return Ok(None);
            }
            gi = gi.rem_euclid(lvl.nx);
        }
        if !(0..lvl.ny).contains(&gj) {
            if !self.periodic.1 {
                return Ok(None);
            }
            gj = gj.rem_euclid(lvl.ny);
        }
        let has = |k: &BlockKey| self.index.contains_key(k);
        let local = |g: i64, b: i64, n: i64| (g - b * n) as isize;
        match self.cover(key.level, gi.div_euclid(bx), gj.div_euclid(by), &has) {
            None => Ok(None),
            Some(Cover::Leaf(k)) if k.level == key.level => {
                let p = &data[self.index[&k]];
                Ok(Some(*p.get(local(gi, k.bi, bx), local(gj, k.bj, by))))
            }
            Some(Cover::Leaf(k)) if k.level + 1 == key.level => {
                let p = &data[self.index[&k]];
                let (ci, cj) = (gi >> 1, gj >> 1);
                let q = prolong_cell(p, local(ci, k.bi, bx), local(cj, k.bj, by), self.physics);
                Ok(Some(q[quarter((gi & 1) as isize, (gj & 1) as isize)]))
            }
            Some(Cover::Finer) => {
                let (fi, fj) = (2 * gi, 2 * gj);
                let k = BlockKey::new(key.level + 1, fi.div_euclid(bx), fj.div_euclid(by));
                let b = self
                    .index
                    .get(&k)
                    .ok_or_else(|| Error::Structural(format!("ghost of {key:?} overlaps blocks finer than {k:?}")))?;
                let p = &data[*b];
                let (li, lj) = (local(fi, k.bi, bx), local(fj, k.bj, by));
                Ok(Some(restrict_cell([p.get(li, lj), p.get(li + 1, lj), p.get(li, lj + 1), p.get(li + 1, lj + 1)])))
            }
            Some(Cover::Leaf(k)) => {
                Err(Error::Structural(format!("{key:?} borders {k:?}: levels differ by more than one")))
            }
        }
    }

    /// Fills every ghost cell: copies from same-level neighbors, restriction
    /// from finer and prolongation from coarser ones (levels ascending, so
    /// coarse blocks are complete before they are sampled), then the
    /// physical boundary conditions of each level.
    pub fn fill_ghosts_of(&self, data: &mut [Patch<K>], t: f64) -> Result<()> {
        let (bx, by) = (self.config.block.0 as isize, self.config.block.1 as isize);
        let ghosts: Vec<(isize, isize)> = (-G..by + G)
            .flat_map(|j| (-G..bx + G).map(move |i| (i, j)))
            .filter(|&(i, j)| !(0..bx).contains(&i) || !(0..by).contains(&j))
            .collect();
        for level in self.config.min_level..=self.config.max_level {
            let ids: Vec<usize> = (0..self.keys.len()).filter(|&b| self.keys[b].level == level).collect();
            if ids.is_empty() {
                continue;
            }
            let shared: &[Patch<K>] = data;
            let values: Vec<Vec<Option<[f64; K]>>> = ids
                .par_iter()
                .map(|&b| {
                    ghosts
                        .iter()
                        .map(|&(i, j)| self.ghost_value(shared, self.keys[b], i, j))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            let lvl = &self.levels[level as usize];
            for (&b, vals) in ids.iter().zip(values) {
                let p = &mut data[b];
                for (&(i, j), v) in ghosts.iter().zip(vals) {
                    if let Some(v) = v {
                        *p.get_mut(i, j) = v;
                    }
                }
                let k = self.keys[b];
                let nbx = (self.config.root_blocks.0 as i64) << level;
                let nby = (self.config.root_blocks.1 as i64) << level;
                let sides = [
                    !self.periodic.0 && k.bi == 0,
                    !self.periodic.0 && k.bi == nbx - 1,
                    !self.periodic.1 && k.bj == 0,
                    !self.periodic.1 && k.bj == nby - 1,
                ];
                if sides.iter().any(|&s| s) {
                    let (i0, j0) = ((k.bi * bx as i64) as usize, (k.bj * by as i64) as usize);
                    let xc = &lvl.xc[i0..i0 + bx as usize + 2 * GHOST];
                    let yc = &lvl.yc[j0..j0 + by as usize + 2 * GHOST];
                    p.fill_physical_ghosts(&self.bcs, self.physics, (xc, yc), t, sides);
                }
            }
        }
        Ok(())
    }

    pub fn fill_ghosts(&mut self, t: f64) -> Result<()> {
        let mut data = std::mem::take(&mut self.blocks);
        let r = self.fill_ghosts_of(&mut data, t);
        self.blocks = data;
        r
    }

    /// Sets every leaf to cell averages of `f`.
    pub fn project(&mut self, f: impl Fn(f64, f64) -> [f64; K] + Sync) {
        let (bx, by) = self.config.block;
        let keys = &self.keys;
        let levels = &self.levels;
        self.blocks.par_iter_mut().zip(keys.par_iter()).for_each(|(p, k)| {
            let l = &levels[k.level as usize];
            let (i0, j0) = (k.bi as usize * bx, k.bj as usize * by);
            *p = Patch::from_fn(bx, by, |i, j| {
                cell_average_2d((l.xb[i0 + i], l.xb[i0 + i + 1]), (l.yb[j0 + j], l.yb[j0 + j + 1]), &f)
            });
        });
    }

    /// Projects `f`, then alternately regrids and re-projects until the
    /// hierarchy can reach `max_level`.
    pub fn initialize(&mut self, f: impl Fn(f64, f64) -> [f64; K] + Sync, t: f64) -> Result<()> {
        self.project(&f);
        for _ in self.config.min_level..self.config.max_level {
            let s = self.regrid(t)?;
            self.project(&f);
            if s.refined == 0 {
                break;
            }
        }
        self.fill_ghosts(t)
    }

    /// Indicator values of the interior cells of block `b` (ghosts filled).
    fn indicators(&self, b: usize) -> Vec<f64> {
        let p = &self.blocks[b];
        let (hx, hy) = self.cell_size(self.keys[b].level);
        let c = self.physics.indicator_component();
        p.interior()
            .map(|(i, j, q)| {
                let (i, j) = (i as isize, j as isize);
                refinement_indicator(
                    (p.get(i - 1, j)[c], p.get(i + 1, j)[c]),
                    q[c],
                    (p.get(i, j - 1)[c], p.get(i, j + 1)[c]),
                    hx,
                    hy,
                )
            })
            .collect()
    }

    /// Refines flagged blocks and the neighbors next to each flagged cell's
    /// quadrant, restores proper nesting, then merges quiet siblings.
    pub fn regrid(&mut self, t: f64) -> Result<RegridStats> {
        self.fill_ghosts(t)?;
        let (bx, by) = self.config.block;
        let max = self.config.max_level;
        let thr = self.config.threshold;
        let quiet = thr / self.config.coarsen_factor;

        let ind: Vec<Vec<f64>> = (0..self.keys.len()).into_par_iter().map(|b| self.indicators(b)).collect();
        let mut peak = BTreeMap::new();
        let mut needs: BTreeMap<BlockKey, u32> = BTreeMap::new();
        for (b, vals) in ind.iter().enumerate() {
            let key = self.keys[b];
            peak.insert(key, vals.iter().cloned().fold(0.0_f64, f64::max));
            let need = (key.level + 1).min(max);
            let mut quads = [false; 4];
            for (c, &d) in vals.iter().enumerate() {
                if d > thr {
                    let (i, j) = (c % bx, c / bx);
                    quads[usize::from(i >= bx / 2) + 2 * usize::from(j >= by / 2)] = true;
                }
            }
            if !quads.iter().any(|&q| q) {
                continue;
            }
            let mut add = |di: i64, dj: i64| {
                if let Some((bi, bj)) = self.wrap(key.level, key.bi + di, key.bj + dj) {
                    let e = needs.entry(BlockKey::new(key.level, bi, bj)).or_insert(0);
                    *e = (*e).max(need);
                }
            };
            add(0, 0);
            for (q, &on) in quads.iter().enumerate() {
                if on {
                    let sx = if q % 2 == 1 { 1 } else { -1 };
                    let sy = if q / 2 == 1 { 1 } else { -1 };
                    add(sx, 0);
                    add(0, sy);
                    add(sx, sy);
                }
            }
        }
        let needs: Vec<Need> = needs.into_iter().map(|(key, need)| Need { key, need }).collect();

        let mut map = self.take_map();
        let mut created = BTreeSet::new();
        let mut stats = RegridStats::default();
        loop {
            let has = |k: &BlockKey| map.contains_key(k);
            let mut split = BTreeSet::new();
            for n in &needs {
                if let Some(Cover::Leaf(k)) = self.cover(n.key.level, n.key.bi, n.key.bj, &has) {
                    if k.level < n.need {
                        split.insert(k);
                    }
                }
            }
            for k in map.keys() {
                for (di, dj) in NEIGHBORS {
                    if let Some(Cover::Leaf(n)) = self.cover(k.level, k.bi + di, k.bj + dj, &has) {
                        if n.level + 1 < k.level {
                            split.insert(n);
                        }
                    }
                }
            }
            if split.is_empty() {
                break;
            }
            for k in split {
                let p = map.remove(&k).expect("split key is a leaf");
                for (c, child) in k.children().into_iter().zip(prolong_block(&p, self.physics)) {
                    created.insert(c);
                    map.insert(c, child);
                }
                stats.refined += 1;
            }
        }

        let mut parents: Vec<BlockKey> = map
            .keys()
            .filter(|k| k.level > self.config.min_level)
            .map(|k| k.parent())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        // Finest first, so merged parents can merge again next regrid.
        parents.sort_by(|a, b| b.level.cmp(&a.level).then(a.cmp(b)));
        for parent in parents {
            let kids = parent.children();
            let mergeable = kids
                .iter()
                .all(|c| map.contains_key(c) && !created.contains(c) && peak.get(c).is_some_and(|&d| d < quiet));
            if !mergeable || needs.iter().any(|n| n.need > parent.level && overlaps(&n.key, &parent)) {
                continue;
            }
            if !self.merge_keeps_nesting(&parent, &map) {
                continue;
            }
            let children = kids.map(|c| map.remove(&c).expect("child is a leaf"));
            map.insert(parent, restrict_block([&children[0], &children[1], &children[2], &children[3]]));
            stats.coarsened += 1;
        }

        self.install(map);
        self.check_nesting()?;
        self.fill_ghosts(t)?;
        Ok(stats)
    }

    fn merge_keeps_nesting(&self, parent: &BlockKey, map: &BTreeMap<BlockKey, Patch<K>>) -> bool {
        let has = |k: &BlockKey| map.contains_key(k);
        for (di, dj) in NEIGHBORS {
            match self.cover(parent.level, parent.bi + di, parent.bj + dj, &has) {
                None => {}
                Some(Cover::Leaf(k)) => {
                    if k.level + 1 < parent.level {
                        return false;
                    }
                }
                Some(Cover::Finer) => {
                    let Some((bi, bj)) = self.wrap(parent.level, parent.bi + di, parent.bj + dj) else {
                        continue;
                    };
                    let region = BlockKey::new(parent.level, bi, bj);
                    if region.children().iter().any(|c| !map.contains_key(c)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Checks that the leaves tile the domain exactly and that leaves
    /// touching each other (diagonally included) differ by at most one level.
    pub fn check_nesting(&self) -> Result<()> {
        let has = |k: &BlockKey| self.index.contains_key(k);
        let max = self.config.max_level;
        let mut area: u128 = 0;
        for k in &self.keys {
            if k.level < self.config.min_level || k.level > max {
                return Err(Error::Structural(format!("{k:?} outside the level range")));
            }
            let mut a = *k;
            while a.level > self.config.min_level {
                a = a.parent();
                if has(&a) {
                    return Err(Error::Structural(format!("{k:?} overlaps its ancestor {a:?}")));
                }
            }
            area += 1u128 << (2 * (max - k.level));
            for (di, dj) in NEIGHBORS {
                if let Some(Cover::Leaf(n)) = self.cover(k.level, k.bi + di, k.bj + dj, &has) {
                    if n.level + 1 < k.level {
                        return Err(Error::Structural(format!("{k:?} borders {n:?}")));
                    }
                }
            }
        }
        let full = (self.config.root_blocks.0 * self.config.root_blocks.1) as u128 * (1u128 << (2 * max));
        if area != full {
            return Err(Error::Structural(format!("leaves cover {area} of {full} finest-block units")));
        }
        Ok(())
    }

    /// Right-hand side of every leaf; ghosts must be filled.
    fn rates(&self, data: &[Patch<K>]) -> Result<Vec<Patch<K>>> {
        data.par_iter()
            .zip(self.keys.par_iter())
            .map(|(p, k)| {
                let lvl = &self.levels[k.level as usize];
                let (f, stats) = face_fluxes(p, &lvl.axes, self.physics, &lvl.cfg)?;
                self.counters.add(stats.branches);
                self.fallbacks.fetch_add(stats.point_fallbacks, Ordering::Relaxed);
                Ok(f.divergence(&lvl.axes))
            })
            .collect()
    }

    /// Global step: the smallest CFL step over the occupied levels.
    pub fn compute_dt(&self, cfl: f64) -> Result<f64> {
        let mut speeds: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        let per_block: Vec<(f64, f64)> =
            self.blocks.par_iter().map(|p| max_speeds(p, self.physics)).collect::<Result<_>>()?;
        for (k, s) in self.keys.iter().zip(per_block) {
            let e = speeds.entry(k.level).or_insert((0.0, 0.0));
            e.0 = e.0.max(s.0);
            e.1 = e.1.max(s.1);
        }
        let mut dt = f64::INFINITY;
        for (l, (sx, sy)) in speeds {
            let lvl = &self.levels[l as usize];
            dt = dt.min(dt_2d(cfl, lvl.hx, lvl.hy, sx, sy)?);
        }
        Ok(dt)
    }

    /// One SSP-RK3 step of all leaves.
    pub fn step(&mut self, t: f64, dt: f64) -> Result<()> {
        let next = ssp_rk3_step(&self.blocks, t, dt, |s: &mut Vec<Patch<K>>, ts| {
            self.fill_ghosts_of(s, ts)?;
            self.rates(s)
        })?;
        self.blocks = next;
        Ok(())
    }

    /// Advances to `control.t_end`, regridding every `regrid_every` steps.
    /// `after_regrid` sees the forest after each regrid.
    pub fn run(&mut self, control: &mut StepControl, mut after_regrid: impl FnMut(&Self)) -> Result<AmrRunStats> {
        let mut stats = AmrRunStats::default();
        while !control.finished() {
            if stats.steps > 0 && stats.steps.is_multiple_of(self.config.regrid_every) {
                let r = self.regrid(control.t)?;
                stats.regrids += 1;
                stats.refined += r.refined;
                stats.coarsened += r.coarsened;
                after_regrid(self);
            }
            let dt = control.clamp(self.compute_dt(control.cfl)?);
            self.step(control.t, dt)?;
            control.advance(dt);
            stats.steps += 1;
        }
        Ok(stats)
    }

    /// `Σ area·u` over all leaves.
    pub fn total(&self) -> [f64; K] {
        let mut s = [0.0; K];
        for (k, p) in self.keys.iter().zip(&self.blocks) {
            let (hx, hy) = self.cell_size(k.level);
            for (_, _, q) in p.interior() {
                for c in 0..K {
                    s[c] += hx * hy * q[c];
                }
            }
        }
        s
    }

    /// Cells whose indicator exceeds the threshold: `(on max-level leaves,
    /// everywhere)`. Fills ghosts at time `t` first.
    pub fn flagged_cells(&mut self, t: f64) -> Result<(usize, usize)> {
        self.fill_ghosts(t)?;
        let thr = self.config.threshold;
        let max = self.config.max_level;
        let counts: Vec<(usize, usize)> = (0..self.keys.len())
            .into_par_iter()
            .map(|b| {
                let n = self.indicators(b).iter().filter(|&&d| d > thr).count();
                (if self.keys[b].level == max { n } else { 0 }, n)
            })
            .collect();
        Ok(counts.into_iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1)))
    }

    /// One line per leaf: `level,bi,bj,x0,x1,y0,y1`.
    pub fn layout_csv(&self) -> String {
        let mut s = String::from("level,bi,bj,x0,x1,y0,y1\n");
        for k in &self.keys {
            let (x0, x1, y0, y1) = self.bounds(k);
            let _ = writeln!(s, "{},{},{},{x0},{x1},{y0},{y1}", k.level, k.bi, k.bj);
        }
        s
    }

    pub fn domain(&self) -> (Interval, Interval) {
        (self.x, self.y)
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Whether the regions of two blocks intersect.
fn overlaps(a: &BlockKey, b: &BlockKey) -> bool {
    let l = a.level.max(b.level);
    let span = |k: &BlockKey, v: i64| {
        let s = l - k.level;
        (v << s, (v + 1) << s)
    };
    let (ax, bx) = (span(a, a.bi), span(b, b.bi));
    let (ay, by) = (span(a, a.bj), span(b, b.bj));
    ax.0 < bx.1 && bx.0 < ax.1 && ay.0 < by.1 && by.0 < ay.1
}
