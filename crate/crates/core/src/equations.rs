//! Generalized Lyapunov equations and the Riccati-type inequality behind the
//! type II reachability Gramian.
//!
//! Reachability side: `M X + X Mᵀ + Σ Nᵢ X Nᵢᵀ = R`.
//! Observability side: `Mᵀ X + X M + Σ Nᵢᵀ X Nᵢ = R`.
//!
//! The type II reachability Gramian is `P = X⁻¹` for a positive definite `X`
//! satisfying
//!
//! ```text
//! Mᵀ X + X M + Σ Nᵢᵀ X Nᵢ + X B Bᵀ X ⪯ −δ I,     M = A + (k²/2) I.
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_sym_eigenvalue, min_sym_eigenvalue, norm2, spd_inverse, spectral_abscissa, symmetrize, LyapunovSolver};
use crate::max_trace::max_trace_point;
use crate::options::Options;
use crate::system::{kronecker_operator, BilinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Reachability,
    Observability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KroneckerDirect,
    FixedPoint,
    Newton,
    /// Barrier path-following towards the largest-trace feasible point.
    CentralPath,
}

/// Which linear solver to use for a generalized Lyapunov equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Kronecker-direct up to the size cap, fixed point beyond it.
    #[default]
    Auto,
    KroneckerDirect,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub method: Method,
    pub iterations: usize,
    /// Relative Frobenius residual.
    pub residual_norm: f64,
    /// Smallest eigenvalue of the returned solution.
    pub definiteness_margin: f64,
}

#[derive(Debug, Clone)]
pub struct GeneralizedLyapunovProblem {
    pub m: DMatrix<f64>,
    pub couplings: Vec<DMatrix<f64>>,
    pub rhs: DMatrix<f64>,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DMatrix<f64>,
    pub diagnostics: SolveDiagnostics,
}

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_SWEEPS: usize = 10_000;

impl GeneralizedLyapunovProblem {
    pub fn reachability(m: DMatrix<f64>, couplings: Vec<DMatrix<f64>>, rhs: DMatrix<f64>) -> Self {
        GeneralizedLyapunovProblem { m, couplings, rhs, side: Side::Reachability }
    }

    pub fn observability(m: DMatrix<f64>, couplings: Vec<DMatrix<f64>>, rhs: DMatrix<f64>) -> Self {
        GeneralizedLyapunovProblem { m, couplings, rhs, side: Side::Observability }
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.m.nrows();
        if self.m.ncols() != n || self.rhs.shape() != (n, n) || self.couplings.iter().any(|c| c.shape() != (n, n)) {
            return Err(Error::Dimension("generalized Lyapunov operands must all be n×n".into()));
        }
        Ok(())
    }

    // Observability problems are reachability problems for (Mᵀ, Nᵢᵀ).
    fn reachability_form(&self) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        match self.side {
            Side::Reachability => (self.m.clone(), self.couplings.clone()),
            Side::Observability => (self.m.transpose(), self.couplings.iter().map(|n| n.transpose()).collect()),
        }
    }

    /// `L(X) = M X + X Mᵀ + Σ Nᵢ X Nᵢᵀ` (or its observability-side analogue).
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self.side {
            Side::Reachability => {
                let mut out = &self.m * x + x * self.m.transpose();
                for n in &self.couplings {
                    out += n * x * n.transpose();
                }
                out
            }
            Side::Observability => {
                let mut out = self.m.transpose() * x + x * &self.m;
                for n in &self.couplings {
                    out += n.transpose() * x * n;
                }
                out
            }
        }
    }

    /// `‖L(X) − R‖_F / (‖R‖_F + (2‖M‖_F + Σ‖Nᵢ‖²_F)‖X‖_F)`.
    pub fn relative_residual(&self, x: &DMatrix<f64>) -> f64 {
        let res = (self.apply(x) - &self.rhs).norm();
        let op = 2.0 * self.m.norm() + self.couplings.iter().map(|n| n.norm_squared()).sum::<f64>();
        let scale = self.rhs.norm() + op * x.norm();
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }
}

/// Solve with the default method choice.
pub fn solve_generalized_lyapunov(prob: &GeneralizedLyapunovProblem, opts: &Options) -> Result<Solution> {
    solve_generalized_lyapunov_with(prob, MethodChoice::Auto, opts)
}

pub fn solve_generalized_lyapunov_with(
    prob: &GeneralizedLyapunovProblem,
    choice: MethodChoice,
    opts: &Options,
) -> Result<Solution> {
    prob.check_shapes()?;
    let n = prob.m.nrows();
    let method = match choice {
        MethodChoice::KroneckerDirect => {
            if n > opts.max_kron_n {
                return Err(Error::SizeCap { n, cap: opts.max_kron_n });
            }
            Method::KroneckerDirect
        }
        MethodChoice::FixedPoint => Method::FixedPoint,
        MethodChoice::Auto if n <= opts.max_kron_n => Method::KroneckerDirect,
        MethodChoice::Auto => Method::FixedPoint,
    };
    let (mut x, iterations) = match method {
        Method::KroneckerDirect => (kronecker_direct(prob)?, 1),
        _ => fixed_point(prob)?,
    };
    symmetrize(&mut x);
    let residual_norm = prob.relative_residual(&x);
    Ok(Solution {
        diagnostics: SolveDiagnostics {
            method,
            iterations,
            residual_norm,
            definiteness_margin: min_sym_eigenvalue(&x),
        },
        x,
    })
}

fn kronecker_direct(prob: &GeneralizedLyapunovProblem) -> Result<DMatrix<f64>> {
    let n = prob.m.nrows();
    let (m, couplings) = prob.reachability_form();
    let k = kronecker_operator(&m, &couplings);
    let rhs = DVector::from_column_slice(prob.rhs.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Kronecker operator is singular (system not mean-square stable?)".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("Kronecker solve produced non-finite entries".into()));
    }
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

// M X_{j+1} + X_{j+1} Mᵀ = R − Σ Nᵢ X_j Nᵢᵀ, one Bartels–Stewart solve per sweep.
fn fixed_point(prob: &GeneralizedLyapunovProblem) -> Result<(DMatrix<f64>, usize)> {
    let (m, couplings) = prob.reachability_form();
    let solver = LyapunovSolver::new(&m)?;
    let mut x = solver.solve(&prob.rhs)?;
    let start_norm = x.norm();
    let mut last_change = f64::INFINITY;
    for sweep in 1..=FIXED_POINT_MAX_SWEEPS {
        let mut rhs = prob.rhs.clone();
        for n in &couplings {
            rhs -= n * &x * n.transpose();
        }
        let next = solver.solve(&rhs)?;
        let change = (&next - &x).norm();
        let scale = next.norm();
        if !scale.is_finite() || scale > 1e12 * start_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverged(format!("iterate norm {scale:e} after {sweep} sweeps")));
        }
        x = next;
        last_change = if scale > 0.0 { change / scale } else { change };
        if last_change < FIXED_POINT_TOL {
            return Ok((x, sweep));
        }
    }
    Err(Error::IterationCap { solver: "generalized Lyapunov fixed point", iterations: FIXED_POINT_MAX_SWEEPS, last_change })
}

/// Clamp eigenvalues with `|λ| < 1e-10·λ_max` to zero. Returns the clamped
/// matrix and whether any eigenvalue was clamped (the realization is then
/// flagged as not minimal).
pub fn clamp_semidefinite(x: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = x.nrows();
    if n == 0 {
        return (x.clone(), false);
    }
    let eig = crate::linalg::SymEigen::new(x);
    let scale = eig.max().max(0.0);
    if scale == 0.0 {
        return (DMatrix::zeros(n, n), true);
    }
    let band = 1e-10 * scale;
    if !eig.values.iter().any(|&l| l.abs() < band) {
        return (x.clone(), false);
    }
    let clamped = DVector::from_iterator(n, eig.values.iter().map(|&l| if l.abs() < band { 0.0 } else { l }));
    let mut out = &eig.vectors * DMatrix::from_diagonal(&clamped) * eig.vectors.transpose();
    symmetrize(&mut out);
    (out, true)
}

/// Type II reachability inequality in `X = P⁻¹`.
#[derive(Debug, Clone)]
pub struct RiccatiInequalityProblem {
    /// `A + (k²/2) I`.
    pub a_shifted: DMatrix<f64>,
    pub couplings: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
    /// Strict-feasibility margin: the right-hand side is `−δ I`.
    pub delta: f64,
}

/// `δ = 1e-6·‖BBᵀ‖₂`, or `1e-6` when `B = 0`.
pub fn default_delta(b: &DMatrix<f64>) -> f64 {
    let s = norm2(&(b * b.transpose()));
    if s > 0.0 {
        1e-6 * s
    } else {
        1e-6
    }
}

impl RiccatiInequalityProblem {
    pub fn new(sys: &BilinearSystem, k: f64, delta: Option<f64>) -> Self {
        RiccatiInequalityProblem {
            a_shifted: sys.shifted_drift(0.5 * k * k),
            couplings: sys.couplings.clone(),
            b: sys.b.clone(),
            delta: delta.unwrap_or_else(|| default_delta(&sys.b)),
        }
    }

    /// `Mᵀ X + X M + Σ Nᵢᵀ X Nᵢ + X B Bᵀ X` (without the `δ` term).
    pub fn riccati_map(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let xb = x * &self.b;
        let mut out = self.a_shifted.transpose() * x + x * &self.a_shifted + &xb * xb.transpose();
        for n in &self.couplings {
            out += n.transpose() * x * n;
        }
        out
    }

    fn relative_residual(&self, x: &DMatrix<f64>) -> f64 {
        let n = x.nrows();
        let r = self.riccati_map(x) + DMatrix::<f64>::identity(n, n) * self.delta;
        let xb = x * &self.b;
        let scale = 2.0 * self.a_shifted.norm() * x.norm()
            + self.couplings.iter().map(|c| c.norm_squared()).sum::<f64>() * x.norm()
            + xb.norm_squared()
            + self.delta * (n as f64).sqrt();
        r.norm() / scale
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Positive definite `X`.
    pub x: DMatrix<f64>,
    /// `P = X⁻¹`.
    pub p: DMatrix<f64>,
    /// Largest eigenvalue of the Riccati map at `X`; `≤ −δ` up to round-off.
    pub slack: f64,
    /// The `δ` actually used (differs from the request after continuation).
    pub delta_used: f64,
    pub diagnostics: SolveDiagnostics,
}

const NEWTON_MAX_ITER: usize = 80;
const NEWTON_TOL: f64 = 1e-13;
const CONTINUATION_HALVINGS: usize = 10;
/// A Newton refinement is kept only if it loses at most this fraction of `tr X`.
const POLISH_TRACE_LOSS: f64 = 1e-6;

/// Select `X` as (approximately) the largest-trace point of the feasible set.
///
/// A barrier path-following method gives a strictly feasible point close to
/// the trace maximizer. Newton on the equality (right-hand side `−δ I`) is
/// then started from it and its limit is kept when it converges to a positive
/// definite root without losing trace; this recovers the maximal root exactly
/// when it exists (scalar and linear cases). When no strictly feasible start
/// exists `δ` is halved and the solve is restarted, up to ten times.
pub fn solve_type2_riccati(prob: &RiccatiInequalityProblem, opts: &Options) -> Result<RiccatiSolution> {
    solve_type2_riccati_checked(prob, opts, true)
}

/// As [`solve_type2_riccati`]; `spectral_check = false` skips the Kronecker
/// stability check when the caller has already done it.
pub(crate) fn solve_type2_riccati_checked(
    prob: &RiccatiInequalityProblem,
    opts: &Options,
    spectral_check: bool,
) -> Result<RiccatiSolution> {
    let n = prob.a_shifted.nrows();
    if prob.b.nrows() != n || prob.a_shifted.ncols() != n || prob.couplings.iter().any(|c| c.shape() != (n, n)) {
        return Err(Error::Dimension("Riccati operands have inconsistent shapes".into()));
    }
    if !(prob.delta > 0.0) || !prob.delta.is_finite() {
        return Err(Error::InvalidArgument(format!("δ must be positive, got {}", prob.delta)));
    }
    if spectral_check && n <= opts.max_kron_n {
        let abscissa = spectral_abscissa(&kronecker_operator(&prob.a_shifted, &prob.couplings))?;
        if !(abscissa < 0.0) {
            return Err(Error::Unstable { abscissa });
        }
    }
    if prob.b.iter().all(|&v| v == 0.0) {
        // the equality is linear: L*(X) = −δ I
        let id = DMatrix::<f64>::identity(n, n);
        let eq = GeneralizedLyapunovProblem::observability(prob.a_shifted.clone(), prob.couplings.clone(), -id * prob.delta);
        let sol = solve_generalized_lyapunov(&eq, opts)?;
        return finish(prob, sol.x, Method::Newton, sol.diagnostics.iterations);
    }
    let mut delta = prob.delta;
    let mut last_err = None;
    for _ in 0..=CONTINUATION_HALVINGS {
        let attempt = RiccatiInequalityProblem { delta, ..prob.clone() };
        match max_trace_point(&attempt.a_shifted, &attempt.couplings, &attempt.b, delta, opts) {
            Ok(start) => {
                let polished = newton(&attempt, start.x.clone(), opts).ok().filter(|(x, _)| {
                    x.trace() >= start.x.trace() * (1.0 - POLISH_TRACE_LOSS)
                        && min_sym_eigenvalue(x) > 0.0
                        && max_sym_eigenvalue(&attempt.riccati_map(x)) <= 0.0
                });
                return match polished {
                    Some((x, its)) => finish(&attempt, x, Method::Newton, start.newton_steps + its),
                    None => finish(&attempt, start.x, Method::CentralPath, start.newton_steps),
                };
            }
            Err(e @ (Error::Unstable { .. } | Error::Dimension(_) | Error::SizeCap { .. })) => return Err(e),
            Err(e) => {
                last_err = Some(e);
                delta *= 0.5;
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Stagnation("no attempt made".into())))
}

fn finish(prob: &RiccatiInequalityProblem, x: DMatrix<f64>, method: Method, iterations: usize) -> Result<RiccatiSolution> {
    let margin = min_sym_eigenvalue(&x);
    if !(margin > 0.0) {
        return Err(Error::Stagnation(format!("Riccati solution is not positive definite (λ_min = {margin:e})")));
    }
    let p = spd_inverse(&x).ok_or_else(|| Error::Singular("Riccati solution".into()))?;
    let slack = max_sym_eigenvalue(&prob.riccati_map(&x));
    Ok(RiccatiSolution {
        diagnostics: SolveDiagnostics { method, iterations, residual_norm: prob.relative_residual(&x), definiteness_margin: margin },
        x,
        p,
        slack,
        delta_used: prob.delta,
    })
}

// Kleinman-type Newton on the equality, started at `x`.
fn newton(prob: &RiccatiInequalityProblem, mut x: DMatrix<f64>, opts: &Options) -> Result<(DMatrix<f64>, usize)> {
    let n = prob.a_shifted.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let bbt = &prob.b * prob.b.transpose();
    let mut best = (prob.relative_residual(&x), x.clone());
    let mut stalled = 0;
    for it in 1..=NEWTON_MAX_ITER {
        let f = &prob.a_shifted + &bbt * &x;
        let xb = &x * &prob.b;
        let rhs = &xb * xb.transpose() - &id * prob.delta;
        let step = GeneralizedLyapunovProblem::observability(f, prob.couplings.clone(), rhs);
        let mut next = solve_generalized_lyapunov(&step, opts)?.x;
        symmetrize(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Stagnation(format!("non-finite Newton iterate at step {it}")));
        }
        let change = (&next - &x).norm() / next.norm().max(f64::MIN_POSITIVE);
        x = next;
        let res = prob.relative_residual(&x);
        if res < best.0 {
            best = (res, x.clone());
            stalled = 0;
        } else {
            stalled += 1;
        }
        if change < NEWTON_TOL || res < 1e-15 {
            return Ok((x, it));
        }
        // quadratic convergence stops improving at round-off level
        if stalled >= 4 {
            if best.0 < 1e-11 {
                return Ok((best.1, it));
            }
            return Err(Error::Stagnation(format!("residual stuck at {:e}", best.0)));
        }
    }
    if best.0 < 1e-11 {
        return Ok((best.1, NEWTON_MAX_ITER));
    }
    Err(Error::IterationCap { solver: "type II Riccati Newton", iterations: NEWTON_MAX_ITER, last_change: best.0 })
}

/// Result of the block-matrix certification of a type II reachability Gramian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmiReport {
    /// Largest eigenvalue of `[[AᵀX + XA + Σ NᵢᵀXNᵢ + k²X, XB], [BᵀX, −I]]`, `X = P⁻¹`.
    pub max_eigenvalue: f64,
    pub tolerance: f64,
    pub feasible: bool,
}

pub const LMI_TOLERANCE: f64 = 1e-8;

/// Certify `P` against the Schur-complement form of the reachability inequality.
pub fn check_lmi_feasibility(sys: &BilinearSystem, k: f64, p: &DMatrix<f64>, opts: &Options) -> Result<LmiReport> {
    let n = sys.states();
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!("P is {}×{}, expected {n}×{n}", p.nrows(), p.ncols())));
    }
    let cond = crate::linalg::condition_number(p);
    if !(cond <= opts.gramian_cond_cap) {
        return Err(Error::Singular(format!("P condition number {cond:e} exceeds cap {:e}", opts.gramian_cond_cap)));
    }
    let x = spd_inverse(p).ok_or_else(|| Error::Singular("P is not invertible".into()))?;
    Ok(lmi_block_report(sys, k, &x))
}

/// Same certification given `X` directly.
pub fn lmi_block_report(sys: &BilinearSystem, k: f64, x: &DMatrix<f64>) -> LmiReport {
    let n = sys.states();
    let m = sys.inputs();
    let mut tl = sys.a.transpose() * x + x * &sys.a + x * (k * k);
    for ni in &sys.couplings {
        tl += ni.transpose() * x * ni;
    }
    let xb = x * &sys.b;
    let mut block = DMatrix::<f64>::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&tl);
    block.view_mut((0, n), (n, m)).copy_from(&xb);
    block.view_mut((n, 0), (m, n)).copy_from(&xb.transpose());
    block.view_mut((n, n), (m, m)).copy_from(&(-DMatrix::<f64>::identity(m, m)));
    let max_eigenvalue = max_sym_eigenvalue(&block);
    LmiReport { max_eigenvalue, tolerance: LMI_TOLERANCE, feasible: max_eigenvalue <= LMI_TOLERANCE }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar(a: f64, n1: f64, b: f64, c: f64) -> BilinearSystem {
        BilinearSystem::new(s(a), s(b), vec![s(n1)], s(c)).unwrap()
    }

    #[test]
    fn scalar_type_one_reachability() {
        let prob = GeneralizedLyapunovProblem::reachability(s(-1.0), vec![s(0.5)], s(-1.0));
        for choice in [MethodChoice::KroneckerDirect, MethodChoice::FixedPoint] {
            let sol = solve_generalized_lyapunov_with(&prob, choice, &Options::default()).unwrap();
            assert_relative_eq!(sol.x[(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
            assert!(sol.diagnostics.residual_norm <= 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -2.0]);
        let prob = GeneralizedLyapunovProblem::reachability(a, vec![DMatrix::identity(2, 2) * 0.3], DMatrix::zeros(2, 2));
        let sol = solve_generalized_lyapunov(&prob, &Options::default()).unwrap();
        assert_eq!(sol.x, DMatrix::zeros(2, 2));
    }

    #[test]
    fn explicit_kronecker_beyond_cap_is_rejected() {
        let opts = Options { max_kron_n: 1, ..Options::default() };
        let prob = GeneralizedLyapunovProblem::reachability(
            DMatrix::identity(2, 2) * -1.0,
            vec![],
            DMatrix::identity(2, 2) * -1.0,
        );
        assert!(matches!(
            solve_generalized_lyapunov_with(&prob, MethodChoice::KroneckerDirect, &opts),
            Err(Error::SizeCap { .. })
        ));
        let auto = solve_generalized_lyapunov(&prob, &opts).unwrap();
        assert_eq!(auto.diagnostics.method, Method::FixedPoint);
    }

    #[test]
    fn unstable_fixed_point_diverges() {
        // a = −1, n = 1.5: ms abscissa −2 + 2.25 > 0
        let prob = GeneralizedLyapunovProblem::reachability(s(-1.0), vec![s(1.5)], s(-1.0));
        assert!(solve_generalized_lyapunov_with(&prob, MethodChoice::FixedPoint, &Options::default()).is_err());
    }

    #[test]
    fn scalar_type_two_riccati_root() {
        // 2(a + k²/2) X + n² X + X² b² = 0 → X = 0.75 at k = 1
        let prob = RiccatiInequalityProblem::new(&scalar(-1.0, 0.5, 1.0, 1.0), 1.0, Some(1e-12));
        let sol = solve_type2_riccati(&prob, &Options::default()).unwrap();
        assert_relative_eq!(sol.x[(0, 0)], 0.75, epsilon = 1e-10);
        assert_relative_eq!(sol.p[(0, 0)], 4.0 / 3.0, epsilon = 1e-10);
        assert!(sol.slack <= -1e-12 + 1e-15);
    }

    #[test]
    fn riccati_default_delta_stays_close_to_root() {
        let prob = RiccatiInequalityProblem::new(&scalar(-1.0, 0.5, 1.0, 1.0), 1.0, None);
        assert_eq!(prob.delta, 1e-6);
        let sol = solve_type2_riccati(&prob, &Options::default()).unwrap();
        // X² − 0.75X + δ = 0, larger root
        let x = (0.75 + (0.5625f64 - 4e-6).sqrt()) / 2.0;
        assert_relative_eq!(sol.x[(0, 0)], x, epsilon = 1e-12);
    }

    #[test]
    fn riccati_with_zero_input() {
        let sys = BilinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::zeros(2, 1),
            vec![DMatrix::identity(2, 2) * 0.2],
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .unwrap();
        let prob = RiccatiInequalityProblem::new(&sys, 0.5, None);
        let sol = solve_type2_riccati(&prob, &Options::default()).unwrap();
        assert!(sol.diagnostics.definiteness_margin > 0.0);
        assert!(sol.slack <= 0.0);
        let lmi = check_lmi_feasibility(&sys, 0.5, &sol.p, &Options::default()).unwrap();
        assert!(lmi.feasible);
    }

    #[test]
    fn riccati_rejects_too_large_k() {
        let prob = RiccatiInequalityProblem::new(&scalar(-1.0, 0.5, 1.0, 1.0), 2.0, None);
        assert!(matches!(solve_type2_riccati(&prob, &Options::default()), Err(Error::Unstable { .. })));
    }

    #[test]
    fn lmi_detects_shrunk_gramian() {
        let sys = scalar(-1.0, 0.5, 1.0, 1.0);
        let opts = Options::default();
        let sol = solve_type2_riccati(&RiccatiInequalityProblem::new(&sys, 1.0, None), &opts).unwrap();
        let ok = check_lmi_feasibility(&sys, 1.0, &sol.p, &opts).unwrap();
        assert!(ok.feasible, "{ok:?}");
        let bad = check_lmi_feasibility(&sys, 1.0, &(&sol.p * 0.5), &opts).unwrap();
        assert!(!bad.feasible);
        assert!(bad.max_eigenvalue > 0.0);
    }

    #[test]
    fn lmi_block_diagonal_case() {
        // B = 0, N = 0, k = 0: feasible iff AᵀX + XA ≺ 0
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let sys = BilinearSystem::new(a, DMatrix::zeros(2, 1), vec![DMatrix::zeros(2, 2)], DMatrix::zeros(1, 2)).unwrap();
        let lmi = check_lmi_feasibility(&sys, 0.0, &DMatrix::identity(2, 2), &Options::default()).unwrap();
        assert!(lmi.feasible);
        assert!(lmi.max_eigenvalue < 0.0);
    }

    #[test]
    fn clamping_flags_semidefinite() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let (c, flagged) = clamp_semidefinite(&x);
        assert!(flagged);
        assert_eq!(c[(1, 1)], 0.0);
        let (c, flagged) = clamp_semidefinite(&DMatrix::identity(2, 2));
        assert!(!flagged);
        assert_eq!(c, DMatrix::identity(2, 2));
        let (_, flagged) = clamp_semidefinite(&DMatrix::zeros(2, 2));
        assert!(flagged);
    }
}
