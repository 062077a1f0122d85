//! Error norms, empirical orders of convergence and convergence ladders.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::Bc;
use crate::field::Field1D;
use crate::kernels::{LimiterKernel, Reconstructor, SwitchParams};
use crate::mesh::{Grid1D, Grid2D};
use crate::physics::Physics;
use crate::problems::{cell_average_1d, cell_average_2d, Advection1d, Projection, Scenario2d};
use crate::scheme1d::Scheme1d;
use crate::scheme2d::Scheme2d;
use crate::timeint::StepControl;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub linf: f64,
}

/// `Σ Δx_i |u_i - u_ex(x_i)|` and `max |u_i - u_ex(x_i)|`, where `u_ex(x_i)`
/// is the exact solution at the midpoint or its cell average.
pub fn error_norms_1d(values: &[f64], g: &Grid1D, how: Projection, exact: impl Fn(f64) -> f64) -> Norms {
    let mut n = Norms { l1: 0.0, linf: 0.0 };
    for ((v, w), dx) in values.iter().zip(g.boundaries().windows(2)).zip(g.widths()) {
        let ex = match how {
            Projection::Midpoint => exact(0.5 * (w[0] + w[1])),
            Projection::CellAverage => cell_average_1d(w[0], w[1], &exact),
        };
        let e = (v - ex).abs();
        n.l1 += dx * e;
        n.linf = n.linf.max(e);
    }
    n
}

/// 2D analogue of [`error_norms_1d`] with cell-area weights; `values` are
/// row-major (x fastest).
pub fn error_norms_2d(values: &[f64], g: &Grid2D, how: Projection, exact: impl Fn(f64, f64) -> f64) -> Norms {
    let (bx, by) = (g.gx.boundaries(), g.gy.boundaries());
    let mut n = Norms { l1: 0.0, linf: 0.0 };
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let ex = match how {
                Projection::Midpoint => exact(0.5 * (bx[i] + bx[i + 1]), 0.5 * (by[j] + by[j + 1])),
                Projection::CellAverage => {
                    cell_average_2d((bx[i], bx[i + 1]), (by[j], by[j + 1]), |x, y| [exact(x, y)])[0]
                }
            };
            let e = (values[j * g.nx() + i] - ex).abs();
            n.l1 += g.area(i, j) * e;
            n.linf = n.linf.max(e);
        }
    }
    n
}

/// `log(e1 / e0) / log(n0 / n1)`.
pub fn eoc(e0: f64, e1: f64, n0: f64, n1: f64) -> Result<f64> {
    if !(e0 > 0.0 && e1 > 0.0 && n0 > 0.0 && n1 > 0.0) || n0 == n1 {
        return Err(Error::UndefinedEoc(e0, e1));
    }
    Ok((e1 / e0).ln() / (n0 / n1).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Grid label, e.g. `200` or `50x50`.
    pub label: String,
    /// Cells per direction, used for the order estimate.
    pub n: usize,
    pub norms: Option<Norms>,
    pub eoc_l1: Option<f64>,
    pub eoc_linf: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
}

impl ErrorReport {
    /// Builds the report; orders are computed between consecutive rows that
    /// both succeeded.
    pub fn from_runs(runs: Vec<(String, usize, Result<Norms>)>) -> Self {
        let mut rows: Vec<ReportRow> = Vec::with_capacity(runs.len());
        for (label, n, r) in runs {
            let (norms, failure) = match r {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let prev = rows.last().and_then(|p| p.norms.map(|v| (v, p.n)));
            let (eoc_l1, eoc_linf) = match (prev, norms) {
                (Some((a, na)), Some(b)) => {
                    (eoc(a.l1, b.l1, na as f64, n as f64).ok(), eoc(a.linf, b.linf, na as f64, n as f64).ok())
                }
                _ => (None, None),
            };
            rows.push(ReportRow { label, n, norms, eoc_l1, eoc_linf, failure });
        }
        Self { rows }
    }

    /// `N,L1,EOC1,Linf,EOCinf`; missing entries are left empty and failed
    /// rows carry the error after a `#`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,L1,EOC1,Linf,EOCinf\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for r in &self.rows {
            match r.norms {
                Some(n) => {
                    let _ =
                        writeln!(s, "{},{:.6e},{},{:.6e},{}", r.label, n.l1, opt(r.eoc_l1), n.linf, opt(r.eoc_linf));
                }
                None => {
                    let msg = r.failure.as_deref().unwrap_or("failed").replace('\n', " ");
                    let _ = writeln!(s, "{},,,, # {msg}", r.label);
                }
            }
        }
        s
    }

    /// Whitespace-separated `N L1 Linf` columns for log-log plotting.
    pub fn to_plot_data(&self) -> String {
        let mut s = String::from("# N L1 Linf\n");
        for r in &self.rows {
            if let Some(n) = r.norms {
                let _ = writeln!(s, "{} {:.6e} {:.6e}", r.n, n.l1, n.linf);
            }
        }
        s
    }

    /// A gnuplot script plotting `data_file` with a third-order guide line.
    pub fn gnuplot_script(&self, data_file: &str, title: &str) -> String {
        let anchor = self.rows.iter().find_map(|r| r.norms.map(|n| (r.n as f64, n.l1))).unwrap_or((1.0, 1.0));
        format!(
            "set logscale xy\nset xlabel 'N'\nset ylabel 'error'\nset title '{title}'\nset key bottom left\n\
             plot '{data_file}' using 1:2 with linespoints title 'L1', \\\n     \
             '{data_file}' using 1:3 with linespoints title 'Linf', \\\n     \
             {:e}*({}/x)**3 with lines dashtype 2 title 'order 3'\n",
            anchor.1, anchor.0
        )
    }

    pub fn last_eoc_l1(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.eoc_l1)
    }
}

/// Runs `run` for every grid size and collects the report. A failing rung is
/// recorded and the ladder continues.
pub fn convergence_ladder(
    sizes: &[(String, usize)],
    run: impl Fn(usize) -> Result<Norms> + Sync,
) -> Result<ErrorReport> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a convergence ladder needs at least 2 grids, got {}",
            sizes.len()
        )));
    }
    use rayon::prelude::*;
    let results: Vec<_> = sizes.par_iter().map(|(_, n)| run(*n)).collect();
    Ok(ErrorReport::from_runs(sizes.iter().cloned().zip(results).map(|((l, n), r)| (l, n, r)).collect()))
}

/// `25·2^j` for `j = 0..count`.
pub fn doubling_sizes(base: usize, count: usize) -> Vec<(String, usize)> {
    (0..count).map(|j| base << j).map(|n| (n.to_string(), n)).collect()
}

/// Runs the 1D advection scenario on `grid` and returns the error norms at
/// the end time. Initial data and the reference use the same projection.
pub fn advection_1d_errors(
    scenario: &Advection1d,
    grid: &Grid1D,
    kernel: LimiterKernel,
    how: Projection,
) -> Result<Norms> {
    let physics = scenario.physics();
    let recon = Reconstructor::new(kernel, SwitchParams::new(scenario.alpha, grid.mean_width())?);
    let scheme = Scheme1d::new(grid, &physics, recon, Bc::Periodic, Bc::Periodic);
    let init: Vec<[f64; 1]> =
        crate::problems::project_1d(grid, how, |x| scenario.initial(x)).into_iter().map(|v| [v]).collect();
    let mut u = Field1D::from_interior(&init);
    let mut control = StepControl::new(scenario.cfl, scenario.t_end)?;
    scheme.run(&mut u, &mut control)?;
    let vals: Vec<f64> = u.interior().iter().map(|v| v[0]).collect();
    Ok(error_norms_1d(&vals, grid, how, |x| scenario.exact(x, scenario.t_end)))
}

/// Runs a 2D scenario with an exact solution on `grid` and returns the
/// norms of the first component (density for Euler) at the end time.
pub fn scenario_2d_errors<P: Physics<K>, const K: usize>(
    scenario: &Scenario2d<P, K>,
    grid: &Grid2D,
    kernel: LimiterKernel,
    order_fix: bool,
) -> Result<Norms> {
    let exact = scenario
        .exact
        .clone()
        .ok_or_else(|| Error::InvalidArgument(format!("scenario {} has no exact solution", scenario.name)))?;
    let scheme = Scheme2d::new(grid, &scenario.physics, kernel, scenario.alpha, scenario.boundaries.clone())?
        .with_order_fix(order_fix);
    let mut u = scheme.patch_from(&scenario.project(grid, Projection::CellAverage));
    let mut control = StepControl::new(scenario.cfl, scenario.t_end)?;
    scheme.run(&mut u, &mut control)?;
    let vals: Vec<f64> = u.interior().map(|(_, _, q)| q[0]).collect();
    let t = scenario.t_end;
    Ok(error_norms_2d(&vals, grid, Projection::CellAverage, |x, y| exact(x, y, t)[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Interval;
    use approx::assert_relative_eq;

    #[test]
    fn eoc_values() {
        assert_relative_eq!(eoc(8e-3, 1e-3, 25.0, 50.0).unwrap(), 3.0, epsilon = 1e-12);
        assert!((eoc(8.322e-3, 1.347e-3, 25.0, 50.0).unwrap() - 2.63).abs() < 5e-3);
        assert_eq!(eoc(0.1, 0.1, 10.0, 20.0).unwrap(), 0.0);
        assert!(matches!(eoc(0.0, 1.0, 10.0, 20.0), Err(Error::UndefinedEoc(..))));
        assert!(eoc(1.0, -1.0, 10.0, 20.0).is_err());
    }

    #[test]
    fn norms_of_offsets() {
        let g = Grid1D::random(Interval::new(0.0, 1.0), 37, 0.3, 1).unwrap();
        let vals: Vec<f64> = g.centers().iter().map(|&x| x * x).collect();
        let n = error_norms_1d(&vals, &g, Projection::Midpoint, |x| x * x);
        assert_eq!(n, Norms { l1: 0.0, linf: 0.0 });
        let shifted: Vec<f64> = vals.iter().map(|v| v + 0.01).collect();
        let n = error_norms_1d(&shifted, &g, Projection::Midpoint, |x| x * x);
        assert_relative_eq!(n.l1, 0.01, epsilon = 1e-14);
        assert_relative_eq!(n.linf, 0.01, epsilon = 1e-14);

        let g2 = Grid2D::uniform(Interval::new(0.0, 2.0), Interval::new(0.0, 1.0), 4, 3).unwrap();
        let n = error_norms_2d(&[0.5; 12], &g2, Projection::CellAverage, |_, _| 0.0);
        assert_relative_eq!(n.l1, 1.0, epsilon = 1e-14);
        assert_relative_eq!(n.linf, 0.5);
    }

    #[test]
    fn ladder_needs_two_grids() {
        let r = convergence_ladder(&doubling_sizes(25, 1), |_| Ok(Norms { l1: 1.0, linf: 1.0 }));
        assert!(r.is_err());
    }

    #[test]
    fn ladder_records_failures_and_continues() {
        let sizes = doubling_sizes(10, 4);
        let r = convergence_ladder(&sizes, |n| {
            if n == 20 {
                Err(Error::UnboundedTimeStep)
            } else {
                let e = (n as f64).powi(-3);
                Ok(Norms { l1: e, linf: 2.0 * e })
            }
        })
        .unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows[1].failure.is_some());
        assert_eq!(r.rows[2].eoc_l1, None);
        assert_relative_eq!(r.rows[3].eoc_l1.unwrap(), 3.0, epsilon = 1e-12);
        let csv = r.to_csv();
        assert!(csv.starts_with("N,L1,EOC1,Linf,EOCinf\n10,1.000000e-3,,2.000000e-3,\n"));
        assert!(csv.contains("20,,,, #"));
    }

    #[test]
    fn first_order_sanity_anchor() {
        let s = advection_1d_scenario();
        let sizes = doubling_sizes(50, 4);
        let g = |n| Grid1D::uniform(s.domain, n).unwrap();
        let r = convergence_ladder(&sizes, |n| {
            advection_1d_errors(&s, &g(n), LimiterKernel::FirstOrder, Projection::CellAverage)
        })
        .unwrap();
        let e = r.last_eoc_l1().unwrap();
        assert!((e - 1.0).abs() < 0.1, "{}", r.to_csv());
    }

    fn advection_1d_scenario() -> Advection1d {
        crate::problems::advection_1d()
    }
}
