//! Run orchestration: builds the scenario and grid from a [`RunConfig`],
//! advances it, and writes snapshots, error reports and the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fv3_core::amr::{AmrConfig, AmrForest};
use fv3_core::analysis::{
    advection_1d_errors, convergence_ladder, error_norms_1d, error_norms_2d, scenario_2d_errors, ErrorReport, Norms,
};
use fv3_core::field::{Bc, Field1D, Patch};
use fv3_core::kernels::{Reconstructor, SwitchParams};
use fv3_core::mesh::{Grid1D, Grid2D, Interval};
use fv3_core::physics::Physics;
use fv3_core::problems::{
    advection_1d, advection_2d, double_mach, riemann_2d, vortex, Advection1d, Projection, Scenario2d, VortexProfile,
};
use fv3_core::scheme1d::Scheme1d;
use fv3_core::scheme2d::Scheme2d;
use fv3_core::timeint::{ssp_rk3_step, StepControl};
use fv3_core::Error;
use serde_json::{json, Value};

use crate::config::{Format, GridSpec, Profile, RunConfig, Scenario};
use crate::output::{line_csv, write_file, GridDump};

pub type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub time: f64,
    pub cell: Option<(isize, isize)>,
    pub message: String,
}

impl Failure {
    fn new(time: f64, e: &Error) -> Self {
        let cell = match e {
            Error::Physics(p) => p.cell,
            _ => None,
        };
        Self { time, cell, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub steps: usize,
    pub t: f64,
    pub failure: Option<Failure>,
    pub norms: Option<Norms>,
    pub diagnostics: Value,
}

fn vortex_profile(p: Profile) -> VortexProfile {
    match p {
        Profile::Isentropic => VortexProfile::Isentropic,
        Profile::Verbatim => VortexProfile::Verbatim,
    }
}

fn apply_overrides<P, const K: usize>(mut sc: Scenario2d<P, K>, cfg: &RunConfig) -> Scenario2d<P, K> {
    if let Some(c) = cfg.cfl {
        sc.cfl = c;
    }
    if let Some(t) = cfg.t_end {
        sc.t_end = t;
    }
    if let Some(a) = cfg.alpha {
        sc.alpha = a;
    }
    sc
}

fn scenario_1d(cfg: &RunConfig) -> Advection1d {
    let mut sc = advection_1d();
    if let Some(c) = cfg.cfl {
        sc.cfl = c;
    }
    if let Some(t) = cfg.t_end {
        sc.t_end = t;
    }
    if let Some(a) = cfg.alpha {
        sc.alpha = a;
    }
    sc
}

fn grid_1d(spec: &GridSpec, domain: Interval) -> fv3_core::Result<Grid1D> {
    match *spec {
        GridSpec::Uniform { n } => Grid1D::uniform(domain, n),
        GridSpec::Perturbed { n, c1, c2 } => Grid1D::perturbed(domain, n, c1, c2),
        GridSpec::Random { n, seed, amplitude } => Grid1D::random(domain, n, amplitude, seed),
        _ => Err(Error::InvalidArgument("not a 1D grid".into())),
    }
}

fn grid_2d(spec: &GridSpec, x: Interval, y: Interval) -> fv3_core::Result<Grid2D> {
    match *spec {
        GridSpec::Uniform { n } => Grid2D::uniform(x, y, n, n),
        GridSpec::Nonuniform { n, delta_x, c_x, delta_y, c_y } => {
            Grid2D::sine_mapped(x, y, n, n, delta_x, c_x, delta_y, c_y)
        }
        _ => Err(Error::InvalidArgument("not a fixed 2D grid".into())),
    }
}

/// Resolved scenario parameters for the manifest.
fn resolved(cfl: f64, t_end: f64, alpha: f64, x: Interval, y: Option<Interval>) -> Value {
    let mut v = json!({ "cfl": cfl, "t_end": t_end, "alpha": alpha, "x": [x.lo, x.hi] });
    if let Some(y) = y {
        v["y"] = json!([y.lo, y.hi]);
    }
    v
}

struct Snapshots<'a> {
    dir: &'a Path,
    format: Format,
    every: usize,
    count: usize,
    files: Vec<String>,
}

impl<'a> Snapshots<'a> {
    fn new(cfg: &RunConfig, dir: &'a Path) -> Self {
        Self { dir, format: cfg.format, every: cfg.every, count: 0, files: Vec::new() }
    }

    fn due(&self, step: usize) -> bool {
        self.every > 0 && step.is_multiple_of(self.every)
    }

    fn next_name(&mut self, ext: &str) -> String {
        let name = format!("snap_{:05}{ext}", self.count);
        self.count += 1;
        name
    }

    fn write_line<const K: usize>(&mut self, g: &Grid1D, u: &Field1D<K>) -> CliResult<()> {
        let name = self.next_name(".csv");
        write_file(&self.dir.join(&name), line_csv(g.boundaries(), u.interior()).as_bytes())?;
        self.files.push(name);
        Ok(())
    }

    fn write_patch<const K: usize>(&mut self, xb: &[f64], yb: &[f64], u: &Patch<K>, t: f64) -> CliResult<()> {
        let ext = match self.format {
            Format::Binary => ".bin",
            Format::Csv => ".csv",
        };
        let name = self.next_name(ext);
        write_file(&self.dir.join(&name), &encode(xb, yb, u, t, self.format))?;
        self.files.push(name);
        Ok(())
    }

    fn write_forest<P: Physics<K>, const K: usize>(&mut self, f: &AmrForest<'_, P, K>, t: f64) -> CliResult<()> {
        let name = self.next_name("");
        let dir = self.dir.join(&name);
        write_file(&dir.join("forest.csv"), f.layout_csv().as_bytes())?;
        for (key, p) in f.keys().iter().zip(f.blocks()) {
            let (x0, x1, y0, y1) = f.bounds(key);
            let xb = even_split(x0, x1, p.nx());
            let yb = even_split(y0, y1, p.ny());
            let ext = match self.format {
                Format::Binary => "bin",
                Format::Csv => "csv",
            };
            let file = format!("block_{}_{}_{}.{ext}", key.level, key.bi, key.bj);
            write_file(&dir.join(file), &encode(&xb, &yb, p, t, self.format))?;
        }
        self.files.push(name);
        Ok(())
    }
}

fn even_split(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

fn encode<const K: usize>(xb: &[f64], yb: &[f64], u: &Patch<K>, t: f64, format: Format) -> Vec<u8> {
    let d = GridDump {
        nx: u.nx(),
        ny: u.ny(),
        k: K,
        t,
        xb: xb.to_vec(),
        yb: yb.to_vec(),
        values: u.interior().flat_map(|(_, _, q)| q.iter().copied()).collect(),
    };
    match format {
        Format::Binary => d.encode(),
        Format::Csv => d.to_csv().into_bytes(),
    }
}

fn run_1d(cfg: &RunConfig, dir: &Path) -> CliResult<(Outcome, Value)> {
    let sc = scenario_1d(cfg);
    let grid = grid_1d(&cfg.grid, sc.domain)?;
    let physics = sc.physics();
    let recon = Reconstructor::new(cfg.kernel, SwitchParams::new(sc.alpha, grid.mean_width())?);
    let scheme = Scheme1d::new(&grid, &physics, recon, Bc::Periodic, Bc::Periodic);
    let init: Vec<[f64; 1]> = fv3_core::problems::project_1d(&grid, Projection::CellAverage, |x| sc.initial(x))
        .into_iter()
        .map(|v| [v])
        .collect();
    let mut u = Field1D::from_interior(&init);
    let mut control = StepControl::new(sc.cfl, sc.t_end)?;
    let mut snaps = Snapshots::new(cfg, dir);
    let mut steps = 0;
    let mut failure = None;
    while !control.finished() {
        if snaps.due(steps) {
            snaps.write_line(&grid, &u)?;
        }
        let r = scheme.compute_dt(&u, control.cfl).and_then(|dt| {
            let dt = control.clamp(dt);
            ssp_rk3_step(&u, control.t, dt, |s, t| scheme.rhs(s, t)).map(|n| (n, dt))
        });
        match r {
            Ok((next, dt)) => {
                u = next;
                control.advance(dt);
                steps += 1;
            }
            Err(e) => {
                failure = Some(Failure::new(control.t, &e));
                break;
            }
        }
    }
    snaps.write_line(&grid, &u)?;
    let norms = failure.is_none().then(|| {
        let vals: Vec<f64> = u.interior().iter().map(|v| v[0]).collect();
        error_norms_1d(&vals, &grid, Projection::CellAverage, |x| sc.exact(x, control.t))
    });
    let b = scheme.branch_counts();
    let outcome = Outcome {
        steps,
        t: control.t,
        failure,
        norms,
        diagnostics: json!({
            "cells": grid.len(),
            "branches": { "unlimited": b.unlimited, "limited": b.limited },
            "snapshots": snaps.files,
        }),
    };
    Ok((outcome, resolved(sc.cfl, sc.t_end, sc.alpha, sc.domain, None)))
}

fn run_fixed_2d<P: Physics<K>, const K: usize>(
    sc: &Scenario2d<P, K>,
    cfg: &RunConfig,
    dir: &Path,
) -> CliResult<Outcome> {
    let grid = grid_2d(&cfg.grid, sc.x, sc.y)?;
    let scheme =
        Scheme2d::new(&grid, &sc.physics, cfg.kernel, sc.alpha, sc.boundaries.clone())?.with_order_fix(cfg.order_fix);
    let mut u = scheme.patch_from(&sc.project(&grid, Projection::CellAverage));
    let mut control = StepControl::new(sc.cfl, sc.t_end)?;
    let mut snaps = Snapshots::new(cfg, dir);
    let (xb, yb) = (grid.gx.boundaries(), grid.gy.boundaries());
    let initial_total = scheme.total(&u);
    let mut outflow = [0.0; K];
    let mut steps = 0;
    let mut failure = None;
    while !control.finished() {
        if snaps.due(steps) {
            snaps.write_patch(xb, yb, &u, control.t)?;
        }
        let r = scheme.compute_dt(&u, control.cfl).and_then(|dt| {
            let dt = control.clamp(dt);
            scheme.step(&u, control.t, dt).map(|s| (s, dt))
        });
        match r {
            Ok(((next, out), dt)) => {
                u = next;
                for (o, v) in outflow.iter_mut().zip(out) {
                    *o += v;
                }
                control.advance(dt);
                steps += 1;
            }
            Err(e) => {
                failure = Some(Failure::new(control.t, &e));
                break;
            }
        }
    }
    snaps.write_patch(xb, yb, &u, control.t)?;
    let norms = match (&sc.exact, &failure) {
        (Some(exact), None) => {
            let vals: Vec<f64> = u.interior().map(|(_, _, q)| q[0]).collect();
            let t = control.t;
            Some(error_norms_2d(&vals, &grid, Projection::CellAverage, |x, y| exact(x, y, t)[0]))
        }
        _ => None,
    };
    let b = scheme.branch_counts();
    Ok(Outcome {
        steps,
        t: control.t,
        failure,
        norms,
        diagnostics: json!({
            "cells": [grid.nx(), grid.ny()],
            "branches": { "unlimited": b.unlimited, "limited": b.limited },
            "point_fallbacks": scheme.point_fallbacks(),
            "initial_total": initial_total.to_vec(),
            "final_total": scheme.total(&u).to_vec(),
            "outflow": outflow.to_vec(),
            "snapshots": snaps.files,
        }),
    })
}

fn run_amr<P: Physics<K>, const K: usize>(sc: &Scenario2d<P, K>, cfg: &RunConfig, dir: &Path) -> CliResult<Outcome> {
    let GridSpec::Amr { min_level, max_level, delta0, block, regrid_every } = cfg.grid else {
        return Err("not an adaptive grid".into());
    };
    let config = AmrConfig {
        block,
        root_blocks: (1, 1),
        min_level,
        max_level,
        threshold: delta0,
        coarsen_factor: 4.0,
        regrid_every,
    };
    let mut forest = AmrForest::new(&sc.physics, sc.x, sc.y, sc.boundaries.clone(), cfg.kernel, sc.alpha, config)?
        .with_order_fix(cfg.order_fix);
    let init = sc.initial.clone();
    forest.initialize(|x, y| init(x, y), 0.0)?;
    let initial_total = forest.total();
    let mut control = StepControl::new(sc.cfl, sc.t_end)?;
    let mut snaps = Snapshots::new(cfg, dir);
    let (mut steps, mut regrids, mut refined, mut coarsened) = (0usize, 0usize, 0usize, 0usize);
    let mut failure = None;
    while !control.finished() {
        if snaps.due(steps) {
            snaps.write_forest(&forest, control.t)?;
        }
        let r = (|| -> fv3_core::Result<()> {
            if steps > 0 && steps.is_multiple_of(regrid_every) {
                let s = forest.regrid(control.t)?;
                forest.check_nesting()?;
                regrids += 1;
                refined += s.refined;
                coarsened += s.coarsened;
            }
            let dt = control.clamp(forest.compute_dt(control.cfl)?);
            forest.step(control.t, dt)?;
            control.advance(dt);
            Ok(())
        })();
        if let Err(e) = r {
            failure = Some(Failure::new(control.t, &e));
            break;
        }
        steps += 1;
    }
    snaps.write_forest(&forest, control.t)?;
    let norms = match (&sc.exact, &failure) {
        (Some(exact), None) => {
            let t = control.t;
            let (mut l1, mut linf) = (0.0_f64, 0.0_f64);
            for (key, p) in forest.keys().iter().zip(forest.blocks()) {
                for (i, j, q) in p.interior() {
                    let (x0, x1, y0, y1) = forest.cell_bounds(key, i, j);
                    let ex = fv3_core::problems::cell_average_2d((x0, x1), (y0, y1), |x, y| exact(x, y, t))[0];
                    let e = (q[0] - ex).abs();
                    l1 += (x1 - x0) * (y1 - y0) * e;
                    linf = linf.max(e);
                }
            }
            Some(Norms { l1, linf })
        }
        _ => None,
    };
    let b = forest.branch_counts();
    let flagged = forest.flagged_cells(control.t).ok();
    Ok(Outcome {
        steps,
        t: control.t,
        failure,
        norms,
        diagnostics: json!({
            "levels": forest.level_histogram(),
            "regrids": regrids,
            "refined": refined,
            "coarsened": coarsened,
            "flagged_cells": flagged.map(|(on_max, total)| json!({ "on_max_level": on_max, "total": total })),
            "branches": { "unlimited": b.unlimited, "limited": b.limited },
            "point_fallbacks": forest.point_fallbacks(),
            "initial_total": initial_total.to_vec(),
            "final_total": forest.total().to_vec(),
            "snapshots": snaps.files,
        }),
    })
}

fn run_2d<P: Physics<K>, const K: usize>(
    sc: Scenario2d<P, K>,
    cfg: &RunConfig,
    dir: &Path,
) -> CliResult<(Outcome, Value)> {
    let sc = apply_overrides(sc, cfg);
    let outcome = match cfg.grid {
        GridSpec::Amr { .. } => run_amr(&sc, cfg, dir)?,
        _ => run_fixed_2d(&sc, cfg, dir)?,
    };
    Ok((outcome, resolved(sc.cfl, sc.t_end, sc.alpha, sc.x, Some(sc.y))))
}

fn dispatch(cfg: &RunConfig, dir: &Path) -> CliResult<(Outcome, Value)> {
    match cfg.scenario {
        Scenario::Advection1d => run_1d(cfg, dir),
        Scenario::Advection2dX => run_2d(advection_2d(1.0, 0.0), cfg, dir),
        Scenario::Advection2dDiag => run_2d(advection_2d(1.0, 1.0), cfg, dir),
        Scenario::Vortex => run_2d(vortex(vortex_profile(cfg.vortex_profile)), cfg, dir),
        Scenario::DoubleMach => run_2d(double_mach(), cfg, dir),
        Scenario::Riemann2d => run_2d(riemann_2d(), cfg, dir),
    }
}

fn grid_label(cfg: &RunConfig, n: usize) -> String {
    if cfg.scenario.is_1d() {
        n.to_string()
    } else {
        format!("{n}x{n}")
    }
}

fn grid_n(spec: &GridSpec) -> usize {
    match *spec {
        GridSpec::Uniform { n }
        | GridSpec::Perturbed { n, .. }
        | GridSpec::Random { n, .. }
        | GridSpec::Nonuniform { n, .. } => n,
        GridSpec::Amr { max_level, block, .. } => block.0 << max_level,
    }
}

fn write_report(dir: &Path, report: &ErrorReport, title: &str) -> CliResult<()> {
    write_file(&dir.join("errors.csv"), report.to_csv().as_bytes())?;
    write_file(&dir.join("errors.dat"), report.to_plot_data().as_bytes())?;
    write_file(&dir.join("errors.gp"), report.gnuplot_script("errors.dat", title).as_bytes())?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_file(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(())
}

/// Output directory of a run: `--out` wins over `[output] dir`.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| cfg.out_dir.clone(), Path::to_path_buf)
}

/// Runs one configuration and writes its artifacts; the outcome records a
/// solver failure instead of returning it as an error.
pub fn run(cfg: &RunConfig, dir: &Path) -> CliResult<Outcome> {
    std::fs::create_dir_all(dir)?;
    let start = Instant::now();
    let (outcome, params) = dispatch(cfg, dir)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(n) = outcome.norms {
        let report = ErrorReport::from_runs(vec![(grid_label(cfg, grid_n(&cfg.grid)), grid_n(&cfg.grid), Ok(n))]);
        write_report(dir, &report, cfg.scenario.name())?;
    }
    let manifest = json!({
        "command": "run",
        "config": cfg,
        "resolved": params,
        "status": if outcome.failure.is_some() { "failed" } else { "ok" },
        "steps": outcome.steps,
        "t_final": outcome.t,
        "wall_time_s": wall,
        "failure": outcome.failure.as_ref().map(|f| json!({ "time": f.time, "cell": f.cell, "message": f.message })),
        "errors": outcome.norms.map(|n| json!({ "l1": n.l1, "linf": n.linf })),
        "diagnostics": outcome.diagnostics,
    });
    write_manifest(dir, &manifest)?;
    Ok(outcome)
}

fn study_errors(cfg: &RunConfig, n: usize) -> fv3_core::Result<Norms> {
    let spec = cfg.grid.with_n(n);
    let fixed = |sc| -> fv3_core::Result<Norms> {
        let sc = apply_overrides(sc, cfg);
        scenario_2d_errors(&sc, &grid_2d(&spec, sc.x, sc.y)?, cfg.kernel, cfg.order_fix)
    };
    match cfg.scenario {
        Scenario::Advection1d => {
            let sc = scenario_1d(cfg);
            advection_1d_errors(&sc, &grid_1d(&spec, sc.domain)?, cfg.kernel, Projection::CellAverage)
        }
        Scenario::Advection2dX => fixed(advection_2d(1.0, 0.0)),
        Scenario::Advection2dDiag => fixed(advection_2d(1.0, 1.0)),
        Scenario::Vortex => {
            let sc = apply_overrides(vortex(vortex_profile(cfg.vortex_profile)), cfg);
            scenario_2d_errors(&sc, &grid_2d(&spec, sc.x, sc.y)?, cfg.kernel, cfg.order_fix)
        }
        Scenario::DoubleMach | Scenario::Riemann2d => {
            Err(Error::InvalidArgument(format!("scenario {} has no exact solution", cfg.scenario.name())))
        }
    }
}

/// Runs the `[convergence] sizes` ladder and writes the error report.
pub fn convergence(cfg: &RunConfig, dir: &Path) -> CliResult<ErrorReport> {
    if cfg.sizes.is_empty() {
        return Err("convergence needs '[convergence] sizes'".into());
    }
    if !cfg.scenario.has_exact() {
        return Err(format!("scenario {} has no exact solution", cfg.scenario.name()).into());
    }
    std::fs::create_dir_all(dir)?;
    let start = Instant::now();
    let sizes: Vec<(String, usize)> = cfg.sizes.iter().map(|&n| (grid_label(cfg, n), n)).collect();
    let report = convergence_ladder(&sizes, |n| study_errors(cfg, n))?;
    write_report(dir, &report, cfg.scenario.name())?;
    let manifest = json!({
        "command": "convergence",
        "config": cfg,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "rows": report.rows.iter().map(|r| json!({
            "label": r.label,
            "l1": r.norms.map(|n| n.l1),
            "linf": r.norms.map(|n| n.linf),
            "eoc_l1": r.eoc_l1,
            "eoc_linf": r.eoc_linf,
            "failure": r.failure,
        })).collect::<Vec<_>>(),
    });
    write_manifest(dir, &manifest)?;
    Ok(report)
}
