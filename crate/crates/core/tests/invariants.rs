use bilbt::balancing::{distinct_sum, order_selector, square_root_balance, truncate, ReducedModel};
use bilbt::campaign::random_system;
use bilbt::equations::{lmi_block_report, LMI_TOLERANCE};
use bilbt::gramians::{type1_gramians, type2_gramians};
use bilbt::linalg::min_sym_eigenvalue;
use bilbt::simulation::{simulate, ControlSignal, L2Of};
use bilbt::system::stability_report;
use bilbt::{BilinearSystem, Options};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(seed: u64, linear: bool) -> BilinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let m = rng.random_range(1..=2);
    let p = rng.random_range(1..=2);
    random_system(&mut rng, n, m, p, linear).unwrap()
}

fn well_conditioned(seed: u64, n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / a[0]).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>()) {
        let sys = sample(seed, false);
        let back = BilinearSystem::from_json_str(&sys.to_json_string()).unwrap();
        prop_assert_eq!(back, sys);
    }

    #[test]
    fn type1_hsv_survive_state_changes(seed in any::<u64>()) {
        let opts = Options::default();
        let sys = sample(seed, false);
        let t = well_conditioned(seed, sys.states());
        let moved = sys.transform(&t, &opts).unwrap();
        let g = type1_gramians(&sys, &opts).unwrap();
        let h = type1_gramians(&moved, &opts).unwrap();
        let a = square_root_balance(&sys, &g, &opts).unwrap().hsv;
        let b = square_root_balance(&moved, &h, &opts).unwrap().hsv;
        prop_assert!(rel_diff(&a, &b) < 1e-8, "{a:?} vs {b:?}");
    }

    #[test]
    fn type1_gramians_are_semidefinite_solutions(seed in any::<u64>()) {
        let g = type1_gramians(&sample(seed, false), &Options::default()).unwrap();
        prop_assert!(g.p_diagnostics.residual_norm < 1e-10);
        prop_assert!(g.q_diagnostics.residual_norm < 1e-10);
        prop_assert!(min_sym_eigenvalue(&g.p) > -1e-12 * g.p.norm());
        prop_assert!(min_sym_eigenvalue(&g.q) > -1e-12 * g.q.norm());
    }

    #[test]
    fn balanced_gramians_are_diagonal(seed in any::<u64>()) {
        let opts = Options::default();
        let sys = sample(seed, false);
        let g = type1_gramians(&sys, &opts).unwrap();
        let bal = square_root_balance(&sys, &g, &opts).unwrap();
        let (rp, rq) = bal.balancing_residuals(&g);
        prop_assert!(rp < 1e-8 && rq < 1e-8, "{rp} {rq}");
        prop_assert!(bal.hsv.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn type2_reachability_certifies(seed in any::<u64>(), frac in 0.1f64..0.9) {
        let opts = Options::default();
        let sys = sample(seed, false);
        let k = frac * stability_report(&sys, 0.0, &opts).unwrap().k_max_estimate;
        let g = type2_gramians(&sys, k, None, &opts).unwrap();
        let x = g.p.clone().try_inverse().unwrap();
        let lmi = lmi_block_report(&sys, k, &x);
        prop_assert!(lmi.max_eigenvalue <= LMI_TOLERANCE, "{}", lmi.max_eigenvalue);
        prop_assert!(min_sym_eigenvalue(&g.p) > 0.0);
    }

    #[test]
    fn order_selector_returns_smallest_admissible_order(
        mut hsv in prop::collection::vec(1e-6f64..1.0, 1..12),
        tol in 1e-6f64..2.0,
    ) {
        hsv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let r = order_selector(&hsv, tol);
        let bound = |r: usize| 2.0 * hsv[r..].iter().sum::<f64>();
        prop_assert!(r == hsv.len() || bound(r) <= tol);
        prop_assert!(r >= 1);
        prop_assert!(r == 1 || bound(r - 1) > tol);
    }

    #[test]
    fn distinct_sum_never_exceeds_total(mut v in prop::collection::vec(0.0f64..1.0, 0..10)) {
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let doubled: Vec<f64> = v.iter().flat_map(|&x| [x, x]).collect();
        let (once, _) = distinct_sum(&v, 0.0);
        let (twice, repeated) = distinct_sum(&doubled, 0.0);
        prop_assert!(once <= v.iter().sum::<f64>() + 1e-15);
        prop_assert!((once - twice).abs() <= 1e-12);
        prop_assert_eq!(repeated, !v.is_empty());
    }

    #[test]
    fn linear_outputs_scale_with_the_input(seed in any::<u64>(), gain in 0.1f64..3.0) {
        let sys = sample(seed, true);
        let zero = DVector::zeros(sys.states());
        let u = ControlSignal::constant(&vec![0.5; sys.inputs()]);
        let y1 = simulate(&sys, &zero, &u, 1.0, 1e-2).unwrap();
        let y2 = simulate(&sys, &zero, &u.scaled(gain, "scaled"), 1.0, 1e-2).unwrap();
        let a = y1.l2_norm(L2Of::Output).unwrap();
        let b = y2.l2_norm(L2Of::Output).unwrap();
        prop_assert!((b - gain * a).abs() <= 1e-10 * (1.0 + b));
    }
}

#[test]
fn zero_input_keeps_the_origin() {
    let sys = sample(3, false);
    let traj = simulate(&sys, &DVector::zeros(sys.states()), &ControlSignal::zero(sys.inputs()), 2.0, 1e-2).unwrap();
    assert_eq!(traj.l2_norm(L2Of::Output).unwrap(), 0.0);
}

#[test]
fn truncation_orders_are_proper() {
    let opts = Options::default();
    let sys = sample(11, false);
    let g = type1_gramians(&sys, &opts).unwrap();
    let bal = square_root_balance(&sys, &g, &opts).unwrap();
    assert!(truncate(&bal, 0).is_err());
    assert!(truncate(&bal, sys.states()).is_err());
    let full = ReducedModel::untruncated(&bal);
    assert_eq!(full.bound_all, 0.0);
    assert!(full.tail_hsv.is_empty());
}
