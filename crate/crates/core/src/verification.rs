//! Trajectory-level checks of the error bound and the energy inequalities.
//!
//! Every check compares `lhs ≤ rhs` with a tolerance `ε_q` from
//! [`crate::simulation::check_tolerance`]. A check passes when
//! `lhs ≤ rhs + ε_q`; it is a hard failure only when `rhs − lhs < −10·ε_q`.
//! Informational checks (no certified inequality behind them) never fail hard.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::balancing::{BalancedRealization, ReducedModel};
use crate::error::{Error, Result};
use crate::gramians::{GramianKind, GramianPair};
use crate::linalg::{spd_inverse, SymEigen};
use crate::simulation::{check_tolerance, simulate, ControlSignal, L2Of, Trajectory, HARD_FAILURE_FACTOR};
use crate::system::BilinearSystem;

/// Slack on the control-bound hypothesis `‖u(t)‖₂ ≤ k`.
pub const CONTROL_BOUND_SLACK: f64 = 1e-12;

/// Relative size of accumulated state round-off assumed for pointwise checks.
const STATE_ROUNDOFF: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    ErrorBoundThm,
    ErrorBoundCor,
    ReachEnergy,
    ObservEnergy,
    GronwallP2,
    MixedSideConditions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct CheckContext {
    pub system_id: String,
    pub gramian_kind: Option<GramianKind>,
    pub k: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub control_id: String,
    pub r: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckReport {
    pub check: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub tolerance_used: f64,
    pub pass: bool,
    /// `lhs > rhs` but within the tolerance.
    pub within_tolerance: bool,
    pub hard_failure: bool,
    /// No certified inequality applies; reported for comparison only.
    pub informational: bool,
    /// `lhs / rhs`, absent when `rhs = 0`.
    pub ratio: Option<f64>,
    pub context: CheckContext,
}

impl BoundCheckReport {
    pub fn new(check: CheckKind, lhs: f64, rhs: f64, tolerance: f64, informational: bool, context: CheckContext) -> Self {
        let slack = rhs - lhs;
        let pass = lhs <= rhs + tolerance;
        BoundCheckReport {
            check,
            lhs,
            rhs,
            slack,
            tolerance_used: tolerance,
            pass,
            within_tolerance: pass && lhs > rhs,
            hard_failure: !informational && slack < -HARD_FAILURE_FACTOR * tolerance,
            informational,
            ratio: (rhs > 0.0).then(|| lhs / rhs),
            context,
        }
    }

    /// Counts against the certified inequality.
    pub fn violated(&self) -> bool {
        !self.informational && !self.pass
    }

    pub fn with_system_id(mut self, id: impl Into<String>) -> Self {
        self.context.system_id = id.into();
        self
    }
}

fn require_bounded(u: &ControlSignal, k: f64) -> Result<()> {
    if u.k_bound > k + CONTROL_BOUND_SLACK {
        return Err(Error::Precondition(format!(
            "control '{}' has sup-norm bound {} above the Gramian bound k = {k}",
            u.id, u.k_bound
        )));
    }
    Ok(())
}

fn zeros(n: usize) -> DVector<f64> {
    DVector::zeros(n)
}

/// Theorem (distinct tail values) and corollary (all tail values) forms of the
/// output-error bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBoundChecks {
    /// Present only when the tail has repeated values, since otherwise it
    /// coincides with the corollary.
    pub theorem: Option<BoundCheckReport>,
    pub corollary: BoundCheckReport,
}

impl ErrorBoundChecks {
    pub fn reports(&self) -> impl Iterator<Item = &BoundCheckReport> {
        self.theorem.iter().chain(std::iter::once(&self.corollary))
    }
}

/// `‖y − y_r‖_{L²_T} ≤ 2(Σ tail)·‖u‖_{L²_T}` with `x(0) = x_r(0) = 0`.
///
/// For Gramian kinds without a certified bound (type I, the `(P₂, Q₁)`
/// pairs) the check is informational and the control bound is not required.
pub fn check_error_bound(
    full: &BilinearSystem,
    rom: &ReducedModel,
    u: &ControlSignal,
    t_final: f64,
    h: f64,
) -> Result<ErrorBoundChecks> {
    let certified = rom.gramian_kind.certified_bound();
    if certified {
        require_bounded(u, rom.k)?;
    }
    let y = simulate(full, &zeros(full.states()), u, t_final, h)?;
    check_error_bound_on(&y, rom, u)
}

/// As [`check_error_bound`], reusing a zero-initial-state trajectory of the full system.
pub fn check_error_bound_on(full_traj: &Trajectory, rom: &ReducedModel, u: &ControlSignal) -> Result<ErrorBoundChecks> {
    let certified = rom.gramian_kind.certified_bound();
    if certified {
        require_bounded(u, rom.k)?;
    }
    let t_final = full_traj.t_final();
    let yr = simulate(&rom.system, &zeros(rom.system.states()), u, t_final, full_traj.h)?;
    let err = full_traj.l2_estimate(L2Of::OutputDifference(&yr))?;
    let un = full_traj.l2_estimate(L2Of::Input)?;
    let y_norm = full_traj.y_l2[full_traj.steps()];
    let yr_norm = yr.y_l2[yr.steps()];
    let context = CheckContext {
        gramian_kind: Some(rom.gramian_kind),
        k: rom.k,
        t_final,
        control_id: u.id.clone(),
        r: Some(rom.r),
        ..CheckContext::default()
    };
    let build = |check, bound: f64| {
        let rhs = bound * un.value;
        let tol = check_tolerance(err.error + bound * un.error, err.value + rhs + y_norm + yr_norm);
        BoundCheckReport::new(check, err.value, rhs, tol, !certified, context.clone())
    };
    Ok(ErrorBoundChecks {
        theorem: rom.has_multiplicities.then(|| build(CheckKind::ErrorBoundThm, rom.bound_distinct)),
        corollary: build(CheckKind::ErrorBoundCor, rom.bound_all),
    })
}

/// `λⱼ^{-1/2}·sup_t |⟨x(t, 0, u), pⱼ⟩| ≤ ‖u‖_{L²_T}` over the eigenpairs of the
/// type II reachability Gramian; the worst `j` is reported.
pub fn check_reach_energy(sys: &BilinearSystem, g: &GramianPair, u: &ControlSignal, t_final: f64, h: f64) -> Result<BoundCheckReport> {
    require_type2(g)?;
    require_bounded(u, g.k)?;
    let traj = simulate(sys, &zeros(sys.states()), u, t_final, h)?;
    check_reach_energy_on(&traj, g, u)
}

fn require_type2(g: &GramianPair) -> Result<()> {
    if g.kind != GramianKind::Type2Bilinear {
        return Err(Error::Precondition(format!("needs a type II Gramian pair, got {}", g.kind.label())));
    }
    Ok(())
}

/// As [`check_reach_energy`], on a zero-initial-state trajectory.
pub fn check_reach_energy_on(traj: &Trajectory, g: &GramianPair, u: &ControlSignal) -> Result<BoundCheckReport> {
    require_type2(g)?;
    require_bounded(u, g.k)?;
    let eig = SymEigen::new(&g.p);
    if !(eig.min() > 0.0) {
        return Err(Error::Singular(format!("reachability Gramian has eigenvalue {:e}", eig.min())));
    }
    let un = traj.l2_estimate(L2Of::Input)?;
    let sup_state = traj.states.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    // projections of every state onto every eigenvector: n × (K+1)
    let proj = eig.vectors.transpose() * &traj.states;
    let mut worst: Option<(f64, f64, f64)> = None;
    for (j, &lambda) in eig.values.iter().enumerate() {
        let sup = proj.row(j).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let scale = lambda.sqrt();
        let lhs = sup / scale;
        let tol = check_tolerance(un.error + STATE_ROUNDOFF * sup_state / scale, lhs + un.value);
        let margin = un.value + tol - lhs;
        if worst.is_none_or(|(m, _, _)| margin < m) {
            worst = Some((margin, lhs, tol));
        }
    }
    let (_, lhs, tol) = worst.expect("at least one state");
    let context = CheckContext {
        gramian_kind: Some(g.kind),
        k: g.k,
        t_final: traj.t_final(),
        control_id: u.id.clone(),
        ..CheckContext::default()
    };
    Ok(BoundCheckReport::new(CheckKind::ReachEnergy, lhs, un.value, tol, false, context))
}

/// `∫₀ᵀ ‖y(t, x₀, u)‖² dt ≤ x₀ᵀQx₀` for `B = 0`. With `B ≠ 0` the general form
/// `x₀ᵀQx₀ + 2∫ xᵀQBu` is evaluated and reported informationally.
pub fn check_observ_energy(
    sys: &BilinearSystem,
    q: &DMatrix<f64>,
    k: f64,
    x0: &DVector<f64>,
    u: &ControlSignal,
    t_final: f64,
    h: f64,
) -> Result<BoundCheckReport> {
    require_bounded(u, k)?;
    if q.shape() != (sys.states(), sys.states()) {
        return Err(Error::Dimension("observability Gramian does not match the system".into()));
    }
    let traj = simulate(sys, x0, u, t_final, h)?;
    let y = traj.l2_estimate(L2Of::Output)?;
    let lhs = y.value * y.value;
    let lhs_err = 2.0 * y.value * y.error + y.error * y.error;
    let base = (x0.transpose() * q * x0)[(0, 0)];
    let informational = sys.b.iter().any(|&v| v != 0.0);
    let (rhs, rhs_err) = if informational {
        let qb = q * &sys.b;
        let integrand: Vec<f64> = (0..=traj.steps())
            .map(|j| (traj.states.column(j).transpose() * &qb * traj.inputs.column(j))[(0, 0)])
            .collect();
        let integrand_left: Vec<f64> = (0..=traj.steps())
            .map(|j| (traj.states.column(j).transpose() * &qb * traj.inputs_left.column(j))[(0, 0)])
            .collect();
        let fine = trapezoid_signed(&integrand, &integrand_left, traj.h, 1);
        let coarse = trapezoid_signed(&integrand, &integrand_left, traj.h, 2);
        (base + 2.0 * fine, 2.0 * (fine - coarse).abs() / 3.0)
    } else {
        (base, 0.0)
    };
    let state_scale = traj.states.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    let tol = check_tolerance(lhs_err + rhs_err + STATE_ROUNDOFF * state_scale * q.norm(), lhs + rhs.abs());
    let context = CheckContext { k, t_final: traj.t_final(), control_id: u.id.clone(), ..CheckContext::default() };
    Ok(BoundCheckReport::new(CheckKind::ObservEnergy, lhs, rhs, tol, informational, context))
}

fn trapezoid_signed(right: &[f64], left: &[f64], h: f64, stride: usize) -> f64 {
    let k = right.len().saturating_sub(1);
    let full = k - k % stride;
    let mut acc = 0.0;
    let mut j = 0;
    while j < full {
        acc += 0.5 * stride as f64 * h * (right[j] + left[j + stride]);
        j += stride;
    }
    while j < k {
        acc += 0.5 * h * (right[j] + left[j + 1]);
        j += 1;
    }
    acc
}

/// `x(t)ᵀP₂⁻¹x(t) ≤ E(t)·e^{E(t)}` with `E(t) = ∫₀ᵗ‖u‖²`, for every grid `t`
/// and `x(0) = 0`. No bound on `u` is needed.
pub fn check_gronwall_p2(sys: &BilinearSystem, p2: &DMatrix<f64>, u: &ControlSignal, t_final: f64, h: f64) -> Result<BoundCheckReport> {
    let traj = simulate(sys, &zeros(sys.states()), u, t_final, h)?;
    check_gronwall_p2_on(&traj, p2, u)
}

/// As [`check_gronwall_p2`], on a zero-initial-state trajectory.
pub fn check_gronwall_p2_on(traj: &Trajectory, p2: &DMatrix<f64>, u: &ControlSignal) -> Result<BoundCheckReport> {
    let x_inv = spd_inverse(p2).ok_or_else(|| Error::Singular("P₂ is not invertible".into()))?;
    let un = traj.l2_estimate(L2Of::Input)?;
    let energy_err = 2.0 * un.value * un.error + un.error * un.error;
    let x_norm = x_inv.norm();
    let weighted = &x_inv * &traj.states;
    let mut worst: Option<(f64, f64, f64, f64)> = None;
    for j in 0..=traj.steps() {
        let x = traj.states.column(j);
        let lhs = x.dot(&weighted.column(j));
        let e = traj.u_l2[j] * traj.u_l2[j];
        let growth = e.exp();
        let rhs = if (e * growth).is_finite() { e * growth } else { f64::MAX };
        let tol = check_tolerance(
            energy_err * growth * (1.0 + e) + STATE_ROUNDOFF * x.norm_squared() * x_norm,
            lhs + rhs.min(1e300),
        );
        let margin = rhs + tol - lhs;
        if worst.is_none_or(|(m, ..)| margin < m) {
            worst = Some((margin, lhs, rhs, tol));
        }
    }
    let (_, lhs, rhs, tol) = worst.expect("nonempty grid");
    let context = CheckContext {
        gramian_kind: Some(GramianKind::Type2Stochastic),
        t_final: traj.t_final(),
        control_id: u.id.clone(),
        ..CheckContext::default()
    };
    Ok(BoundCheckReport::new(CheckKind::GronwallP2, lhs, rhs, tol, false, context))
}

/// The two side conditions under which the `(P₂, Q₁)` reduction inherits the
/// error bound, with the error-bound comparison itself. All informational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedSideReport {
    /// `∫ z₁ᵀΣz₁‖u‖² ≤ z₁(T)ᵀΣz₁(T)` with `z₁ = (x₁ − x_r, x₂)`.
    pub positive1: BoundCheckReport,
    /// `∫ z₂ᵀΣ⁻¹z₂‖u‖² ≤ z₂(T)ᵀΣ⁻¹z₂(T)` with `z₂ = (x₁ + x_r, x₂)`.
    pub positive2: BoundCheckReport,
    pub conditions_hold: bool,
    pub error_bound: ErrorBoundChecks,
}

/// Evaluate the side conditions on the balanced full system and its
/// truncation, both from zero initial state.
pub fn check_mixed_side_conditions(
    balanced: &BalancedRealization,
    rom: &ReducedModel,
    u: &ControlSignal,
    t_final: f64,
    h: f64,
) -> Result<MixedSideReport> {
    let n = balanced.states();
    let r = rom.r;
    if rom.system.states() != r || r > n {
        return Err(Error::Dimension("reduced model does not come from this realization".into()));
    }
    let full = simulate(&balanced.system, &zeros(n), u, t_final, h)?;
    let red = simulate(&rom.system, &zeros(r), u, t_final, h)?;
    let u_sq_right: Vec<f64> = full.inputs.column_iter().map(|c| c.norm_squared()).collect();
    let u_sq_left: Vec<f64> = full.inputs_left.column_iter().map(|c| c.norm_squared()).collect();

    let side = |sign: f64, weights: &[f64]| -> (f64, f64, f64) {
        let form = |j: usize| {
            let x = full.states.column(j);
            let xr = red.states.column(j);
            (0..n)
                .map(|i| {
                    let zi = if i < r { x[i] + sign * xr[i] } else { x[i] };
                    weights[i] * zi * zi
                })
                .sum::<f64>()
        };
        let values: Vec<f64> = (0..=full.steps()).map(form).collect();
        let right: Vec<f64> = values.iter().zip(&u_sq_right).map(|(v, w)| v * w).collect();
        let left: Vec<f64> = values.iter().zip(&u_sq_left).map(|(v, w)| v * w).collect();
        let fine = trapezoid_signed(&right, &left, full.h, 1);
        let coarse = trapezoid_signed(&right, &left, full.h, 2);
        (fine, values[full.steps()], (fine - coarse).abs() / 3.0)
    };
    let sigma = &balanced.hsv;
    let sigma_inv: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
    let context = CheckContext {
        gramian_kind: Some(rom.gramian_kind),
        k: u.k_bound,
        t_final: full.t_final(),
        control_id: u.id.clone(),
        r: Some(r),
        ..CheckContext::default()
    };
    let report = |(integral, terminal, err): (f64, f64, f64)| {
        let tol = check_tolerance(err, integral + terminal);
        BoundCheckReport::new(CheckKind::MixedSideConditions, integral, terminal, tol, true, context.clone())
    };
    let positive1 = report(side(-1.0, sigma));
    let positive2 = report(side(1.0, &sigma_inv));
    let error_bound = check_error_bound_on(&full, rom, u)?;
    Ok(MixedSideReport { conditions_hold: positive1.pass && positive2.pass, positive1, positive2, error_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancing::{square_root_balance, truncate};
    use crate::gramians::{mixed_pair_q1_p2, stochastic_type2_p2, type2_gramians};
    use crate::options::Options;
    use nalgebra::{dmatrix, dvector};

    fn scalar() -> BilinearSystem {
        BilinearSystem::new(dmatrix![-1.0], dmatrix![1.0], vec![dmatrix![0.5]], dmatrix![1.0]).unwrap()
    }

    fn two_state() -> BilinearSystem {
        BilinearSystem::new(
            dmatrix![-1.0, 0.2; 0.0, -3.0],
            dmatrix![1.0; 0.5],
            vec![dmatrix![0.5, 0.0; 0.1, 0.3]],
            dmatrix![1.0, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn report_semantics() {
        let r = BoundCheckReport::new(CheckKind::ErrorBoundCor, 1.0 + 1e-13, 1.0, 1e-12, false, CheckContext::default());
        assert!(r.pass && r.within_tolerance && !r.hard_failure);
        let r = BoundCheckReport::new(CheckKind::ErrorBoundCor, 2.0, 1.0, 1e-12, false, CheckContext::default());
        assert!(!r.pass && r.hard_failure && r.violated());
        let r = BoundCheckReport::new(CheckKind::ErrorBoundCor, 2.0, 1.0, 1e-12, true, CheckContext::default());
        assert!(!r.pass && !r.hard_failure && !r.violated());
        assert_eq!(BoundCheckReport::new(CheckKind::ReachEnergy, 0.0, 0.0, 1e-12, false, CheckContext::default()).ratio, None);
    }

    #[test]
    fn zero_control_error_bound() {
        let opts = Options::default();
        let sys = two_state();
        let g = type2_gramians(&sys, 1.0, None, &opts).unwrap();
        let rom = truncate(&square_root_balance(&sys, &g, &opts).unwrap(), 1).unwrap();
        let checks = check_error_bound(&sys, &rom, &ControlSignal::zero(1), 2.0, 1e-3).unwrap();
        assert_eq!(checks.corollary.lhs, 0.0);
        assert_eq!(checks.corollary.rhs, 0.0);
        assert!(checks.corollary.pass);
    }

    #[test]
    fn untruncated_model_has_no_error() {
        let opts = Options::default();
        let sys = two_state();
        let g = type2_gramians(&sys, 1.0, None, &opts).unwrap();
        let bal = square_root_balance(&sys, &g, &opts).unwrap();
        let rom = ReducedModel::untruncated(&bal);
        let checks = check_error_bound(&sys, &rom, &ControlSignal::constant(&[1.0]), 5.0, 1e-3).unwrap();
        assert_eq!(checks.corollary.rhs, 0.0);
        assert!(checks.corollary.pass, "{:?}", checks.corollary);
    }

    #[test]
    fn control_above_k_is_a_precondition_error() {
        let opts = Options::default();
        let sys = two_state();
        let g = type2_gramians(&sys, 0.5, None, &opts).unwrap();
        let rom = truncate(&square_root_balance(&sys, &g, &opts).unwrap(), 1).unwrap();
        let err = check_error_bound(&sys, &rom, &ControlSignal::constant(&[1.0]), 1.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn scalar_reach_energy() {
        let opts = Options::default();
        let g = type2_gramians(&scalar(), 1.0, None, &opts).unwrap();
        let r = check_reach_energy(&scalar(), &g, &ControlSignal::constant(&[1.0]), 5.0, 1e-3).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.lhs > 0.0);
        let r = check_reach_energy(&scalar(), &g, &ControlSignal::zero(1), 5.0, 1e-3).unwrap();
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn scalar_observ_energy() {
        let opts = Options::default();
        let sys = scalar().without_input_matrix();
        let g = type2_gramians(&scalar(), 1.0, None, &opts).unwrap();
        let r = check_observ_energy(&sys, &g.q, 1.0, &dvector![1.0], &ControlSignal::constant(&[1.0]), 10.0, 1e-3).unwrap();
        assert!(r.pass && !r.informational, "{r:?}");
        let r = check_observ_energy(&sys, &g.q, 1.0, &dvector![0.0], &ControlSignal::constant(&[1.0]), 1.0, 1e-3).unwrap();
        assert_eq!(r.lhs, 0.0);
        let r = check_observ_energy(&scalar(), &g.q, 1.0, &dvector![1.0], &ControlSignal::constant(&[1.0]), 1.0, 1e-3).unwrap();
        assert!(r.informational);
    }

    #[test]
    fn scalar_gronwall() {
        let opts = Options::default();
        let p2 = stochastic_type2_p2(&scalar(), None, &opts).unwrap().p;
        let r = check_gronwall_p2(&scalar(), &p2, &ControlSignal::constant(&[1.0]), 2.0, 1e-3).unwrap();
        assert!(r.pass, "{r:?}");
        let r = check_gronwall_p2(&scalar(), &p2, &ControlSignal::constant(&[3.0]), 2.0, 1e-3).unwrap();
        assert!(r.pass, "{r:?}");
        let r = check_gronwall_p2(&scalar(), &p2, &ControlSignal::zero(1), 2.0, 1e-3).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn mixed_side_conditions_at_zero_and_small_control() {
        let opts = Options::default();
        let sys = two_state();
        let g = mixed_pair_q1_p2(&sys, None, &opts).unwrap();
        let bal = square_root_balance(&sys, &g, &opts).unwrap();
        let rom = truncate(&bal, 1).unwrap();
        let r = check_mixed_side_conditions(&bal, &rom, &ControlSignal::zero(1), 2.0, 1e-3).unwrap();
        assert!(r.conditions_hold);
        assert_eq!(r.positive1.lhs, 0.0);
        let r = check_mixed_side_conditions(&bal, &rom, &ControlSignal::constant(&[1e-3]), 2.0, 1e-3).unwrap();
        assert!(r.positive1.informational && r.error_bound.corollary.informational);
    }
}
