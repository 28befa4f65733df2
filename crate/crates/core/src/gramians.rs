//! The four Gramian families with provenance.
//!
//! | kind               | reachability `P`                          | observability `Q`                  |
//! |--------------------|-------------------------------------------|------------------------------------|
//! | `type1`            | generalized Lyapunov, `−BBᵀ`              | generalized Lyapunov, `−CᵀC`        |
//! | `type2_bilinear`   | Riccati inequality at `A + k²/2 I`        | generalized Lyapunov at `A + k²/2 I`|
//! | `type2_stochastic` | Riccati inequality at `k = 0` (`P₂`)      | `Q₁`                               |
//! | `mixed_q1_p2`      | `P₂`                                      | `Q₁`                               |

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equations::{
    check_lmi_feasibility, clamp_semidefinite, default_delta, lmi_block_report, solve_generalized_lyapunov,
    solve_type2_riccati_checked, GeneralizedLyapunovProblem, LmiReport, Method, RiccatiInequalityProblem, SolveDiagnostics,
};
use crate::error::{Error, Result};
use crate::linalg::{spectral_abscissa, SymEigen};
use crate::options::Options;
use crate::system::{k_max_bisection, kronecker_operator, matrix_to_rows, BilinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    Type1,
    Type2Bilinear,
    Type2Stochastic,
    MixedQ1P2,
}

impl GramianKind {
    /// Whether the output-error bound is certified for controls with
    /// `‖u(t)‖₂ ≤ k`. The `(P₂, Q₁)` pairs only carry it under an additional
    /// small-control condition.
    pub fn certified_bound(self) -> bool {
        matches!(self, GramianKind::Type2Bilinear)
    }

    pub fn label(self) -> &'static str {
        match self {
            GramianKind::Type1 => "type1",
            GramianKind::Type2Bilinear => "type2",
            GramianKind::Type2Stochastic => "p2",
            GramianKind::MixedQ1P2 => "mixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GramianPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub kind: GramianKind,
    /// Control bound the pair was built for (0 for type 1).
    pub k: f64,
    /// `δ` used by the Riccati solve, when there was one.
    pub delta: Option<f64>,
    pub p_diagnostics: SolveDiagnostics,
    pub q_diagnostics: SolveDiagnostics,
    /// Block-matrix certification of `P` (type II reachability only).
    pub lmi: Option<LmiReport>,
    /// Set when eigenvalues of `P` or `Q` were clamped to zero.
    pub not_minimal: bool,
}

impl GramianPair {
    /// `sqrt(λᵢ(PQ))`, sorted nonincreasing.
    pub fn hsv_by_eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (&self.p * &self.q)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re.max(0.0).sqrt())
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn report(&self) -> GramianReport {
        let p_eig = SymEigen::new(&self.p).values;
        let q_eig = SymEigen::new(&self.q).values;
        GramianReport {
            kind: self.kind,
            k: self.k,
            delta: self.delta,
            p: matrix_to_rows(&self.p),
            q: matrix_to_rows(&self.q),
            p_eigenvalues: p_eig.iter().copied().collect(),
            q_eigenvalues: q_eig.iter().copied().collect(),
            p_diagnostics: self.p_diagnostics,
            q_diagnostics: self.q_diagnostics,
            lmi: self.lmi,
            not_minimal: self.not_minimal,
        }
    }
}

/// Serializable form for the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct GramianReport {
    pub kind: GramianKind,
    pub k: f64,
    pub delta: Option<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub p_eigenvalues: Vec<f64>,
    pub q_eigenvalues: Vec<f64>,
    pub p_diagnostics: SolveDiagnostics,
    pub q_diagnostics: SolveDiagnostics,
    pub lmi: Option<LmiReport>,
    pub not_minimal: bool,
}

/// Kronecker abscissa of `m`, or `None` beyond the size cap.
fn ms_abscissa(m: &DMatrix<f64>, sys: &BilinearSystem, opts: &Options) -> Result<Option<f64>> {
    if sys.states() <= opts.max_kron_n {
        Ok(Some(spectral_abscissa(&kronecker_operator(m, &sys.couplings))?))
    } else {
        Ok(None)
    }
}

fn require_mean_square_stable(m: &DMatrix<f64>, sys: &BilinearSystem, opts: &Options) -> Result<()> {
    if let Some(abscissa) = ms_abscissa(m, sys, opts)? {
        if !(abscissa < 0.0) {
            return Err(Error::Unstable { abscissa });
        }
    }
    // beyond the cap, convergence of the fixed-point solver is the stability witness
    Ok(())
}

fn lyapunov_gramian(prob: GeneralizedLyapunovProblem, opts: &Options) -> Result<(DMatrix<f64>, SolveDiagnostics, bool)> {
    let sol = solve_generalized_lyapunov(&prob, opts)?;
    let (x, clamped) = clamp_semidefinite(&sol.x);
    Ok((x, sol.diagnostics, clamped))
}

fn observability_gramian(sys: &BilinearSystem, m: DMatrix<f64>, opts: &Options) -> Result<(DMatrix<f64>, SolveDiagnostics, bool)> {
    let ctc = sys.c.transpose() * &sys.c;
    lyapunov_gramian(GeneralizedLyapunovProblem::observability(m, sys.couplings.clone(), -ctc), opts)
}

/// Type I pair `P₁, Q₁`.
pub fn type1_gramians(sys: &BilinearSystem, opts: &Options) -> Result<GramianPair> {
    require_mean_square_stable(&sys.a, sys, opts)?;
    let bbt = &sys.b * sys.b.transpose();
    let (p, p_diag, p_clamped) =
        lyapunov_gramian(GeneralizedLyapunovProblem::reachability(sys.a.clone(), sys.couplings.clone(), -bbt), opts)?;
    let (q, q_diag, q_clamped) = observability_gramian(sys, sys.a.clone(), opts)?;
    Ok(GramianPair {
        p,
        q,
        kind: GramianKind::Type1,
        k: 0.0,
        delta: None,
        p_diagnostics: p_diag,
        q_diagnostics: q_diag,
        lmi: None,
        not_minimal: p_clamped || q_clamped,
    })
}

/// Type II reachability Gramian with its certification.
#[derive(Debug, Clone)]
pub struct ReachabilityType2 {
    pub p: DMatrix<f64>,
    pub diagnostics: SolveDiagnostics,
    pub delta: f64,
    pub lmi: Option<LmiReport>,
    /// `B = 0`: nothing is reachable, `P = 0`.
    pub degenerate: bool,
}

fn type2_reachability(sys: &BilinearSystem, k: f64, delta: Option<f64>, opts: &Options) -> Result<ReachabilityType2> {
    let n = sys.states();
    if sys.b.iter().all(|&v| v == 0.0) {
        // any small X is feasible, so the infimum over feasible P is 0
        return Ok(ReachabilityType2 {
            p: DMatrix::zeros(n, n),
            diagnostics: SolveDiagnostics { method: Method::Newton, iterations: 0, residual_norm: 0.0, definiteness_margin: 0.0 },
            delta: delta.unwrap_or_else(|| default_delta(&sys.b)),
            lmi: None,
            degenerate: true,
        });
    }
    // callers have checked the shifted Kronecker spectrum
    let sol = solve_type2_riccati_checked(&RiccatiInequalityProblem::new(sys, k, delta), opts, false)?;
    let lmi = match check_lmi_feasibility(sys, k, &sol.p, opts) {
        Ok(r) => r,
        Err(Error::Singular(_)) => lmi_block_report(sys, k, &sol.x),
        Err(e) => return Err(e),
    };
    Ok(ReachabilityType2 { p: sol.p, diagnostics: sol.diagnostics, delta: sol.delta_used, lmi: Some(lmi), degenerate: false })
}

/// Type II pair `P, Q` for control bound `k`.
pub fn type2_gramians(sys: &BilinearSystem, k: f64, delta: Option<f64>, opts: &Options) -> Result<GramianPair> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!("control bound must be nonnegative, got {k}")));
    }
    // the shift A + k²/2·I moves the Kronecker spectrum by exactly k²
    let k_max = match ms_abscissa(&sys.a, sys, opts)? {
        Some(ms) if !(ms + k * k < 0.0) => return Err(Error::Infeasible { k, k_max: Some(k_max_bisection(ms)) }),
        Some(ms) => Some(k_max_bisection(ms)),
        None => None,
    };
    let reach = type2_reachability(sys, k, delta, opts).map_err(|e| match e {
        Error::Unstable { .. } | Error::Diverged(_) => Error::Infeasible { k, k_max },
        other => other,
    })?;
    let (q, q_diag, q_clamped) = observability_gramian(sys, sys.shifted_drift(0.5 * k * k), opts)?;
    Ok(GramianPair {
        p: reach.p,
        q,
        kind: GramianKind::Type2Bilinear,
        k,
        delta: Some(reach.delta),
        p_diagnostics: reach.diagnostics,
        q_diagnostics: q_diag,
        lmi: reach.lmi,
        not_minimal: reach.degenerate || q_clamped,
    })
}

/// Stochastic type II reachability Gramian `P₂` (the type II inequality at `k = 0`).
pub fn stochastic_type2_p2(sys: &BilinearSystem, delta: Option<f64>, opts: &Options) -> Result<ReachabilityType2> {
    require_mean_square_stable(&sys.a, sys, opts)?;
    type2_reachability(sys, 0.0, delta, opts)
}

/// Balancing pair `(P₂, Q₁)`. Reductions built on it satisfy the error bound
/// only for sufficiently small controls; see
/// [`crate::verification::check_mixed_side_conditions`].
pub fn mixed_pair_q1_p2(sys: &BilinearSystem, delta: Option<f64>, opts: &Options) -> Result<GramianPair> {
    let reach = stochastic_type2_p2(sys, delta, opts)?;
    let (q, q_diag, q_clamped) = observability_gramian(sys, sys.a.clone(), opts)?;
    Ok(GramianPair {
        p: reach.p,
        q,
        kind: GramianKind::MixedQ1P2,
        k: 0.0,
        delta: Some(reach.delta),
        p_diagnostics: reach.diagnostics,
        q_diagnostics: q_diag,
        lmi: reach.lmi,
        not_minimal: reach.degenerate || q_clamped,
    })
}

/// Build the pair of the requested kind; `k` is ignored for kinds that do not use it.
pub fn gramians_of_kind(sys: &BilinearSystem, kind: GramianKind, k: f64, delta: Option<f64>, opts: &Options) -> Result<GramianPair> {
    match kind {
        GramianKind::Type1 => type1_gramians(sys, opts),
        GramianKind::Type2Bilinear => type2_gramians(sys, k, delta, opts),
        GramianKind::Type2Stochastic => {
            mixed_pair_q1_p2(sys, delta, opts).map(|g| GramianPair { kind: GramianKind::Type2Stochastic, ..g })
        }
        GramianKind::MixedQ1P2 => mixed_pair_q1_p2(sys, delta, opts),
    }
}

/// `max_j ‖u(t_j)‖₂` over sampled control values.
pub fn control_bound_from_samples<'a>(samples: impl IntoIterator<Item = &'a DVector<f64>>) -> f64 {
    samples.into_iter().map(|u| u.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar() -> BilinearSystem {
        BilinearSystem::new(s(-1.0), s(1.0), vec![s(0.5)], s(1.0)).unwrap()
    }

    #[test]
    fn scalar_type1_pair() {
        let g = type1_gramians(&scalar(), &Options::default()).unwrap();
        assert_relative_eq!(g.p[(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
        assert_relative_eq!(g.q[(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
        assert_eq!(g.k, 0.0);
        assert_eq!(g.kind, GramianKind::Type1);
    }

    #[test]
    fn zero_input_or_output_gives_zero_gramian() {
        let sys = BilinearSystem::new(s(-1.0), s(0.0), vec![s(0.5)], s(0.0)).unwrap();
        let g = type1_gramians(&sys, &Options::default()).unwrap();
        assert_eq!(g.p[(0, 0)], 0.0);
        assert_eq!(g.q[(0, 0)], 0.0);
        assert!(g.not_minimal);
    }

    #[test]
    fn scalar_type2_pair() {
        let g = type2_gramians(&scalar(), 1.0, None, &Options::default()).unwrap();
        assert_relative_eq!(g.p[(0, 0)], 4.0 / 3.0, epsilon = 1e-5);
        assert_relative_eq!(g.q[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert!(g.lmi.unwrap().feasible);
        assert_eq!(g.kind, GramianKind::Type2Bilinear);
    }

    #[test]
    fn scalar_infeasible_k_reports_k_max() {
        match type2_gramians(&scalar(), 2.0, None, &Options::default()) {
            Err(Error::Infeasible { k, k_max: Some(kmax) }) => {
                assert_eq!(k, 2.0);
                assert_relative_eq!(kmax, 1.75f64.sqrt(), epsilon = 1e-7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_p2_and_mixed() {
        let opts = Options::default();
        let p2 = stochastic_type2_p2(&scalar(), Some(1e-12), &opts).unwrap();
        assert_relative_eq!(p2.p[(0, 0)], 4.0 / 7.0, epsilon = 1e-10);
        let t0 = type2_gramians(&scalar(), 0.0, Some(1e-12), &opts).unwrap();
        assert_eq!(t0.p, p2.p);
        let mixed = mixed_pair_q1_p2(&scalar(), Some(1e-12), &opts).unwrap();
        assert_relative_eq!(mixed.p[(0, 0)], 4.0 / 7.0, epsilon = 1e-10);
        assert_relative_eq!(mixed.q[(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
        assert_eq!(mixed.kind, GramianKind::MixedQ1P2);
    }

    #[test]
    fn mixed_with_zero_input_is_flagged() {
        let sys = BilinearSystem::new(s(-1.0), s(0.0), vec![s(0.5)], s(1.0)).unwrap();
        let mixed = mixed_pair_q1_p2(&sys, None, &Options::default()).unwrap();
        assert_eq!(mixed.p[(0, 0)], 0.0);
        assert!(mixed.not_minimal);
    }

    #[test]
    fn bound_from_samples() {
        let u = [DVector::from_vec(vec![3.0, 4.0]), DVector::from_vec(vec![1.0, 0.0])];
        assert_eq!(control_bound_from_samples(u.iter()), 5.0);
    }
}
