#[path = "common/kernel_suite.rs"]
mod kernel_suite;

const CASES: u32 = 100_000;

#[test]
fn worked_examples() {
    kernel_suite::examples().unwrap();
}

#[test]
fn quadratic_reproduces_cell_averages() {
    kernel_suite::cell_average_oracle(CASES).unwrap();
}

#[test]
fn non_equidistant_slope_matches_quadratic_at_interfaces() {
    kernel_suite::interface_oracle(CASES).unwrap();
}

#[test]
fn equal_widths_collapse_to_uniform_kernels() {
    kernel_suite::uniform_limit(CASES).unwrap();
}

#[test]
fn limited_slope_is_odd() {
    kernel_suite::h3l_antisymmetry(CASES).unwrap();
}

#[test]
fn point_average_conversions_exact_on_quadratics() {
    kernel_suite::order_fix_quadratics(CASES).unwrap();
}

#[test]
fn switch_has_one_boundary() {
    kernel_suite::switch_monotonicity(CASES).unwrap();
}
