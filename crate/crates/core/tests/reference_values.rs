use bilbt::campaign::worked_example;
use bilbt::equations::{lmi_block_report, solve_type2_riccati, RiccatiInequalityProblem};
use bilbt::gramians::{type1_gramians, type2_gramians};
use bilbt::{BilinearSystem, Options};
use nalgebra::DMatrix;

fn scalar(a: f64, b: f64, n: f64, c: f64) -> BilinearSystem {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    BilinearSystem::new(s(a), s(b), vec![s(n)], s(c)).unwrap()
}

// max tr X subject to the reachability LMI at k = 1, solved with an
// interior-point SDP solver (Clarabel through cvxpy)
const WORKED_MAX_TRACE_X: [f64; 4] = [0.58277873, -1.87461674, -1.87461674, 19.11045456];

#[test]
fn worked_example_matches_sdp_maximum() {
    let sys = worked_example();
    let sol = solve_type2_riccati(&RiccatiInequalityProblem::new(&sys, 1.0, Some(1e-9)), &Options::default()).unwrap();
    let reference = DMatrix::from_row_slice(2, 2, &WORKED_MAX_TRACE_X);
    let rel = (&sol.x - &reference).norm() / reference.norm();
    assert!(rel < 1e-5, "relative distance {rel}");
    assert!(lmi_block_report(&sys, 1.0, &sol.x).max_eigenvalue <= 1e-8);
}

#[test]
fn scalar_type1_gramians_are_closed_form() {
    let (a, b, n, c) = (-2.0, 1.5, 0.7, 0.8);
    let g = type1_gramians(&scalar(a, b, n, c), &Options::default()).unwrap();
    let den = -(2.0 * a + n * n);
    assert!((g.p[(0, 0)] - b * b / den).abs() < 1e-14);
    assert!((g.q[(0, 0)] - c * c / den).abs() < 1e-14);
}

#[test]
fn scalar_type2_reachability_is_closed_form() {
    // b²X² + (2a + k² + n²)X + δ = 0, larger root
    let (a, b, n, c, k, delta) = (-2.0, 1.0, 0.5, 1.0, 1.0, 1e-10);
    let g = type2_gramians(&scalar(a, b, n, c), k, Some(delta), &Options::default()).unwrap();
    let lin = 2.0 * a + k * k + n * n;
    let x = (-lin + (lin * lin - 4.0 * b * b * delta).sqrt()) / (2.0 * b * b);
    assert!((g.p[(0, 0)] - 1.0 / x).abs() < 1e-9, "{} vs {}", g.p[(0, 0)], 1.0 / x);
    // observability: 2(a + k²/2)Q + n²Q + c² = 0
    assert!((g.q[(0, 0)] + c * c / lin).abs() < 1e-12);
}
