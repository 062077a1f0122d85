//! Worked kernel examples and randomized kernel properties, shared by the
//! kernel test target and the acceptance target.

use fv3_core::kernels::{
    h3, h3_neq, h3l, h3lc, h3lc_branch, h3lc_neq, quadratic_coefficients, scale_slopes_left, scale_slopes_right, weno3,
    Branch, Side, SlopePair, SwitchParams, WenoVariant, WidthTriple,
};
use fv3_core::scheme2d::{average_to_point, point_to_average};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub type Check = Result<(), String>;

fn close(what: &str, got: f64, want: f64, tol: f64) -> Check {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got:e}, want {want:e} (tol {tol:e})"))
    }
}

fn same(what: &str, got: f64, want: f64) -> Check {
    close(what, got, want, 0.0)
}

fn s(dm: f64, dp: f64) -> SlopePair {
    SlopePair::new(dm, dp)
}

/// Every worked example of the kernel layer.
pub fn examples() -> Check {
    let w121 = WidthTriple::new(1.0, 2.0, 1.0);
    same("h3(1,1)", h3(s(1.0, 1.0)), 1.0)?;
    same("h3(0,0)", h3(s(0.0, 0.0)), 0.0)?;
    same("h3(1,4)", h3(s(1.0, 4.0)), 3.0)?;

    same("h3l(1,1)", h3l(s(1.0, 1.0)), 1.0)?;
    same("h3l(0,0)", h3l(s(0.0, 0.0)), 0.0)?;
    same("h3l(4,1)", h3l(s(4.0, 1.0)), 1.5)?;
    close("h3l(-1,1)", h3l(s(-1.0, 1.0)), 1.0 / 3.0, 1e-15)?;

    let forced = SwitchParams::new(0.0, 0.1).map_err(|e| e.to_string())?;
    for (dm, dp) in [(1.0, 4.0), (-3.0, 0.5), (0.0, 2.0), (1e-9, -1e-9)] {
        same("tau = 0 selects the limited branch", h3lc(s(dm, dp), &forced), h3l(s(dm, dp)))?;
    }
    let p = SwitchParams::new(1.0, 0.1).map_err(|e| e.to_string())?;
    close("tau(alpha=1, dx=0.1)", p.tau, 2.5e-4, 1e-18)?;
    let (v, b) = h3lc_branch(s(1e-6, 1e-6), &p);
    if b != Branch::Unlimited {
        return Err("small differences must take the unlimited branch".into());
    }
    close("h3lc(1e-6,1e-6)", v, 1e-6, 1e-21)?;
    let (v, b) = h3lc_branch(s(1.0, 1.0), &p);
    if b != Branch::Limited {
        return Err("unit differences must take the limited branch".into());
    }
    same("h3lc(1,1)", v, 1.0)?;

    for (dm, dp) in [(1.0, 4.0), (-2.0, 0.3)] {
        same("h3_neq on equal widths", h3_neq(s(dm, dp), WidthTriple::uniform(0.7)), h3(s(dm, dp)))?;
    }
    close("h3_neq(1,1; 1,2,1)", h3_neq(s(1.0, 1.0), w121), 4.0 / 3.0, 1e-15)?;
    same("h3_neq(0,0)", h3_neq(s(0.0, 0.0), w121), 0.0)?;

    let r = scale_slopes_right(s(1.0, 1.0), w121);
    close("right scaling dm", r.dm, 2.0 / 3.0, 1e-15)?;
    close("right scaling dp", r.dp, 1.0, 1e-15)?;
    let l = scale_slopes_left(s(1.0, 1.0), w121);
    close("left scaling first", l.dm, 2.0 / 3.0, 1e-15)?;
    close("left scaling second", l.dp, 1.0, 1e-15)?;
    let e = scale_slopes_right(s(0.3, -2.0), WidthTriple::uniform(0.25));
    if e != s(0.3, -2.0) {
        return Err("equal widths must leave the right differences unchanged".into());
    }
    let e = scale_slopes_left(s(0.3, -2.0), WidthTriple::uniform(0.25));
    if e != s(-2.0, 0.3) {
        return Err("equal widths must swap the left differences".into());
    }
    if scale_slopes_right(s(0.0, 0.0), w121) != s(0.0, 0.0) || scale_slopes_left(s(0.0, 0.0), w121) != s(0.0, 0.0) {
        return Err("zero differences must stay zero".into());
    }

    same(
        "h3lc_neq on equal widths",
        h3lc_neq(s(0.2, 0.9), WidthTriple::uniform(0.1), Side::Right, &p),
        h3lc(s(0.2, 0.9), &p),
    )?;
    same(
        "h3lc_neq with alpha = 0",
        h3lc_neq(s(1.0, 3.0), w121, Side::Right, &forced),
        h3l(scale_slopes_right(s(1.0, 3.0), w121)),
    )?;
    let wide = SwitchParams::new(1e6, 1.0).map_err(|e| e.to_string())?;
    close("h3lc_neq unlimited on (1,2,1)", h3lc_neq(s(1.0, 1.0), w121, Side::Right, &wide), 8.0 / 9.0, 1e-15)?;
    close(
        "outer factor links h3lc_neq and h3_neq",
        w121.outer_factor() * h3lc_neq(s(1.0, 1.0), w121, Side::Right, &wide),
        h3_neq(s(1.0, 1.0), w121),
        1e-15,
    )?;

    for v in [WenoVariant::JS, WenoVariant::Z] {
        close("weno3(1,1)", weno3(s(1.0, 1.0), v, 1e-6), 1.0, 1e-15)?;
        same("weno3(0,0)", weno3(s(0.0, 0.0), v, 1e-6), 0.0)?;
    }
    let eps: f64 = 1e-6;
    let a0 = (1.0 / 3.0) / ((eps + 1.0) * (eps + 1.0));
    let a1 = (2.0 / 3.0) / (eps * eps);
    let js = weno3(s(1.0, 0.0), WenoVariant::JS, eps);
    close("weno3-js(1,0)", js, a0 / (a0 + a1), 1e-15)?;
    if !(0.0..=1.0 / 3.0).contains(&js) {
        return Err(format!("weno3-js(1,0) = {js} outside [0, 1/3]"));
    }

    let (a, b, c) = quadratic_coefficients(2.5, 2.5, 2.5, w121);
    if (a, b, c) != (0.0, 0.0, 2.5) {
        return Err(format!("constant data gave ({a}, {b}, {c})"));
    }
    let (a, b, c) = quadratic_coefficients(1.0, 3.0, 5.0, WidthTriple::uniform(0.5));
    close("linear a", a, 0.0, 1e-14)?;
    close("linear b", b, 4.0, 1e-14)?;
    close("linear c", c, 3.0, 1e-14)?;
    let (a, b, c) = quadratic_coefficients(0.0, 1.0, 4.0, WidthTriple::uniform(1.0));
    close("(0,1,4) a", a, 1.0, 1e-14)?;
    close("(0,1,4) b", b, 2.0, 1e-14)?;
    close("(0,1,4) c", c, 11.0 / 12.0, 1e-14)?;
    Ok(())
}

/// Mean of `p(x) = a x² + b x + c` over `[l, r]`.
fn poly_average((a, b, c): (f64, f64, f64), l: f64, r: f64) -> f64 {
    let prim = |x: f64| a * x * x * x / 3.0 + b * x * x / 2.0 + c * x;
    (prim(r) - prim(l)) / (r - l)
}

fn eval((a, b, c): (f64, f64, f64), x: f64) -> f64 {
    (a * x + b) * x + c
}

fn value() -> impl Strategy<Value = f64> {
    -10.0..10.0f64
}

fn width() -> impl Strategy<Value = f64> {
    0.2..5.0f64
}

fn widths() -> impl Strategy<Value = WidthTriple> {
    (width(), width(), width()).prop_map(|(a, b, c)| WidthTriple::new(a, b, c))
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn rel_tol(scale: f64) -> f64 {
    1e-10 * scale.max(1.0)
}

/// The quadratic's averages over the three cells reproduce the data.
pub fn cell_average_oracle(cases: u32) -> Check {
    run(cases, (value(), value(), value(), widths()), |(um, ui, up, w)| {
        let q = quadratic_coefficients(um, ui, up, w);
        let h = w.dxi / 2.0;
        let scale = um.abs().max(ui.abs()).max(up.abs());
        for (got, want) in
            [(poly_average(q, -h - w.dxm, -h), um), (poly_average(q, -h, h), ui), (poly_average(q, h, h + w.dxp), up)]
        {
            prop_assert!((got - want).abs() <= rel_tol(scale), "{got} vs {want}");
        }
        Ok(())
    })
}

/// Interface values of the non-equidistant unlimited slope agree with the
/// quadratic on both sides.
pub fn interface_oracle(cases: u32) -> Check {
    run(cases, (value(), value(), value(), widths()), |(um, ui, up, w)| {
        let q = quadratic_coefficients(um, ui, up, w);
        let h = w.dxi / 2.0;
        let sp = SlopePair::from_values(um, ui, up);
        let scale = um.abs().max(ui.abs()).max(up.abs());
        let right = ui + h3_neq(sp, w) / 2.0;
        let left = ui - h3_neq(sp.swapped(), w.reversed()) / 2.0;
        prop_assert!((right - eval(q, h)).abs() <= rel_tol(scale), "right {right} vs {}", eval(q, h));
        prop_assert!((left - eval(q, -h)).abs() <= rel_tol(scale), "left {left} vs {}", eval(q, -h));
        Ok(())
    })
}

/// Equal widths reduce every non-equidistant kernel to its uniform form.
pub fn uniform_limit(cases: u32) -> Check {
    run(cases, (value(), value(), 1e-3..10.0f64, 0.0..50.0f64), |(dm, dp, h, alpha)| {
        let sp = s(dm, dp);
        let w = WidthTriple::uniform(h);
        let p = SwitchParams::new(alpha, h).unwrap();
        prop_assert_eq!(w.outer_factor(), 1.0);
        prop_assert_eq!(h3_neq(sp, w), h3(sp));
        prop_assert_eq!(scale_slopes_right(sp, w), sp);
        prop_assert_eq!(scale_slopes_left(sp, w), sp.swapped());
        prop_assert_eq!(h3lc_neq(sp, w, Side::Right, &p), h3lc(sp, &p));
        prop_assert_eq!(h3lc_neq(sp, w, Side::Left, &p), h3lc(sp.swapped(), &p));
        Ok(())
    })
}

/// `H3L(-dm, -dp) = -H3L(dm, dp)` whenever `dp ≠ 0`.
pub fn h3l_antisymmetry(cases: u32) -> Check {
    run(cases, (value(), value()), |(dm, dp)| {
        prop_assume!(dp != 0.0);
        prop_assert_eq!(h3l(s(-dm, -dp)), -h3l(s(dm, dp)));
        Ok(())
    })
}

/// The 1/24 conversions are exact on quadratics in both directions, and the
/// unlimited slope recovers the interface value of quadratic averages.
pub fn order_fix_quadratics(cases: u32) -> Check {
    run(cases, (value(), value(), value(), -5.0..5.0f64, 0.01..2.0f64), |(a, b, c, x0, h)| {
        let q = (a, b, c);
        let avg = |k: f64| poly_average(q, x0 + (k - 0.5) * h, x0 + (k + 0.5) * h);
        let pt = |k: f64| eval(q, x0 + k * h);
        let scale = a.abs() * (x0.abs() + 2.0 * h).powi(2) + b.abs() * (x0.abs() + 2.0 * h) + c.abs();
        let tol = rel_tol(scale);
        let p = average_to_point(avg(-1.0), avg(0.0), avg(1.0));
        prop_assert!((p - pt(0.0)).abs() <= tol, "point {p} vs {}", pt(0.0));
        let m = point_to_average(pt(-1.0), pt(0.0), pt(1.0));
        prop_assert!((m - avg(0.0)).abs() <= tol, "average {m} vs {}", avg(0.0));
        let face = avg(0.0) + h3(SlopePair::from_values(avg(-1.0), avg(0.0), avg(1.0))) / 2.0;
        prop_assert!((face - pt(0.5)).abs() <= tol, "face {face} vs {}", pt(0.5));
        Ok(())
    })
}

/// For fixed differences the switch has exactly one boundary in `tau`.
pub fn switch_monotonicity(cases: u32) -> Check {
    run(cases, (value(), value(), 0.0..400.0f64), |(dm, dp, tau)| {
        let sp = s(dm, dp);
        let p = SwitchParams { alpha: 1.0, dx: 1.0, tau };
        let (_, b) = h3lc_branch(sp, &p);
        let expect = if dm * dm + dp * dp < tau { Branch::Unlimited } else { Branch::Limited };
        prop_assert_eq!(b, expect);
        Ok(())
    })
}

/// Every randomized property with `cases` draws each.
#[allow(dead_code)]
pub fn all_properties(cases: u32) -> Vec<(&'static str, Check)> {
    vec![
        ("cell-average oracle", cell_average_oracle(cases)),
        ("interface oracle", interface_oracle(cases)),
        ("uniform-limit collapse", uniform_limit(cases)),
        ("H3L antisymmetry", h3l_antisymmetry(cases)),
        ("order-fix exactness on quadratics", order_fix_quadratics(cases)),
        ("switch monotonicity", switch_monotonicity(cases)),
    ]
}
