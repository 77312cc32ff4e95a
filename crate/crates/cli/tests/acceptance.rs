//! End-to-end acceptance tests, one per check in the suite. Each test
//! prints its summary line and fails with the detail message if the
//! check did not pass.

use tflg::check::{self, CheckSummary};

fn expect_pass(summary: CheckSummary) {
    println!("{summary}");
    assert!(summary.passed, "{}: {}", summary.name, summary.detail);
}

#[test]
fn lattice_counts() {
    expect_pass(check::lattice_counts());
}

#[test]
fn exactness_suite() {
    expect_pass(check::exactness());
}

#[test]
fn truncation_error_trend() {
    expect_pass(check::truncation_trend());
}

#[test]
fn reconstruction_convergence() {
    expect_pass(check::reconstruction());
}

#[test]
fn concentration_certificate() {
    expect_pass(check::certificate_equivalence());
}

#[test]
fn projection_energy_bound() {
    expect_pass(check::projection_energy_bound());
}

#[test]
fn bound_suite() {
    expect_pass(check::bound_suite());
}

#[test]
fn local_frame_bounds() {
    expect_pass(check::local_frame_invariance());
}

#[test]
fn quilted_frame_trends() {
    expect_pass(check::quilted_frame_trends());
}

#[test]
fn overlap_sweep_trends() {
    expect_pass(check::overlap_sweep_trends());
}

#[test]
fn deterministic_outputs() {
    expect_pass(check::deterministic_outputs());
}
