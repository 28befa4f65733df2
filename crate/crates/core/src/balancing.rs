//! Square-root balancing and truncation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramians::{GramianKind, GramianPair};
use crate::linalg::{rel_frobenius, SymEigen};
use crate::options::Options;
use crate::system::BilinearSystem;

/// Eigenvalues below this fraction of the largest are dropped when a
/// semidefinite Gramian is factored.
pub const FACTOR_CLAMP: f64 = 1e-12;

/// Relative tolerance for grouping equal tail singular values.
pub const DISTINCT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BalancedRealization {
    pub system: BilinearSystem,
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    /// Hankel singular values, nonincreasing.
    pub hsv: Vec<f64>,
    pub gramian_kind: GramianKind,
    pub k: f64,
}

impl BalancedRealization {
    pub fn states(&self) -> usize {
        self.hsv.len()
    }

    /// `TPTᵀ` and `T⁻ᵀQT⁻¹`.
    pub fn transformed_gramians(&self, g: &GramianPair) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = &self.t * &g.p * self.t.transpose();
        let q = self.t_inv.transpose() * &g.q * &self.t_inv;
        (p, q)
    }

    /// Relative Frobenius distance of both transformed Gramians from `diag(hsv)`.
    pub fn balancing_residuals(&self, g: &GramianPair) -> (f64, f64) {
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&self.hsv));
        let (p, q) = self.transformed_gramians(g);
        (rel_frobenius(&p, &sigma), rel_frobenius(&q, &sigma))
    }
}

/// Lower factor `F` with `X = F Fᵀ`, plus whether eigenvalues had to be dropped.
fn square_root_factor(x: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(ch) = x.clone().cholesky() {
        return (ch.l(), false);
    }
    let eig = SymEigen::new(x);
    let cut = FACTOR_CLAMP * eig.max().max(0.0);
    let mut clamped = false;
    let roots = DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&l| {
            if l > cut {
                l.sqrt()
            } else {
                clamped = true;
                0.0
            }
        }),
    );
    (&eig.vectors * DMatrix::from_diagonal(&roots), clamped)
}

/// Balance `sys` with respect to the Gramian pair `g`.
pub fn square_root_balance(sys: &BilinearSystem, g: &GramianPair, opts: &Options) -> Result<BalancedRealization> {
    let n = sys.states();
    if g.p.shape() != (n, n) || g.q.shape() != (n, n) {
        return Err(Error::Dimension(format!("Gramians do not match a system with {n} states")));
    }
    let (k_factor, _) = square_root_factor(&g.p);
    let (l_factor, q_clamped) = square_root_factor(&g.q);
    if q_clamped {
        return Err(Error::NotObservable { min_eig: SymEigen::new(&g.q).min() });
    }

    // KᵀL = V Σ Uᵀ
    let svd = (k_factor.transpose() * &l_factor).svd(true, true);
    let v_raw = svd.u.ok_or_else(|| Error::EigenFailure("SVD of KᵀL".into()))?;
    let u_raw = svd.v_t.ok_or_else(|| Error::EigenFailure("SVD of KᵀL".into()))?.transpose();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let hsv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let sigma_min = hsv.last().copied().unwrap_or(0.0);
    let floor = opts.hsv_floor * hsv.first().copied().unwrap_or(0.0);
    if !(sigma_min > floor) || sigma_min <= 0.0 {
        return Err(Error::HsvFloor { sigma_min, floor });
    }

    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u_raw.column(src).clone_owned();
        let mut vc = v_raw.column(src).clone_owned();
        let pivot = uc.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(dst, &uc);
        v.set_column(dst, &vc);
    }

    let inv_sqrt = DVector::from_iterator(n, hsv.iter().map(|s| 1.0 / s.sqrt()));
    let d = DMatrix::from_diagonal(&inv_sqrt);
    let t = &d * u.transpose() * l_factor.transpose();
    let t_inv = k_factor * v * &d;

    Ok(BalancedRealization {
        system: sys.transform_with_inverse(&t, &t_inv),
        t,
        t_inv,
        hsv,
        gramian_kind: g.kind,
        k: g.k,
    })
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub system: BilinearSystem,
    pub r: usize,
    pub hsv: Vec<f64>,
    pub tail_hsv: Vec<f64>,
    /// `2·Σ tail`.
    pub bound_all: f64,
    /// `2·Σ` over distinct tail values.
    pub bound_distinct: f64,
    pub distinct_tolerance: f64,
    /// Some tail value occurs more than once (within the tolerance).
    pub has_multiplicities: bool,
    pub gramian_kind: GramianKind,
    pub k: f64,
}

/// Distinct-value sum of a nonincreasing sequence and whether any group had
/// more than one member.
pub fn distinct_sum(values: &[f64], tolerance: f64) -> (f64, bool) {
    let mut sum = 0.0;
    let mut repeated = false;
    let mut rep: Option<f64> = None;
    for &v in values {
        match rep {
            Some(r) if (v - r).abs() <= tolerance * r.abs().max(v.abs()) => repeated = true,
            _ => {
                sum += v;
                rep = Some(v);
            }
        }
    }
    (sum, repeated)
}

/// Keep the leading `r` balanced states.
pub fn truncate(bal: &BalancedRealization, r: usize) -> Result<ReducedModel> {
    let n = bal.states();
    let system = bal.system.partition(r)?.leading();
    let tail_hsv = bal.hsv[r..n].to_vec();
    let (distinct, has_multiplicities) = distinct_sum(&tail_hsv, DISTINCT_TOLERANCE);
    Ok(ReducedModel {
        system,
        r,
        hsv: bal.hsv.clone(),
        bound_all: 2.0 * tail_hsv.iter().sum::<f64>(),
        bound_distinct: 2.0 * distinct,
        tail_hsv,
        distinct_tolerance: DISTINCT_TOLERANCE,
        has_multiplicities,
        gramian_kind: bal.gramian_kind,
        k: bal.k,
    })
}

impl ReducedModel {
    /// The balanced realization itself, with an empty tail.
    pub fn untruncated(bal: &BalancedRealization) -> Self {
        ReducedModel {
            system: bal.system.clone(),
            r: bal.states(),
            hsv: bal.hsv.clone(),
            tail_hsv: Vec::new(),
            bound_all: 0.0,
            bound_distinct: 0.0,
            distinct_tolerance: DISTINCT_TOLERANCE,
            has_multiplicities: false,
            gramian_kind: bal.gramian_kind,
            k: bal.k,
        }
    }

    pub fn report(&self) -> ReductionReport {
        ReductionReport {
            kind: self.gramian_kind,
            k: self.k,
            n: self.hsv.len(),
            r: self.r,
            hsv: self.hsv.clone(),
            tail_hsv: self.tail_hsv.clone(),
            bound_all: self.bound_all,
            bound_distinct: self.bound_distinct,
            distinct_tolerance: self.distinct_tolerance,
            has_multiplicities: self.has_multiplicities,
            certified: self.gramian_kind.certified_bound(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    pub kind: GramianKind,
    pub k: f64,
    pub n: usize,
    pub r: usize,
    pub hsv: Vec<f64>,
    pub tail_hsv: Vec<f64>,
    pub bound_all: f64,
    pub bound_distinct: f64,
    pub distinct_tolerance: f64,
    pub has_multiplicities: bool,
    /// Whether the bound is proven for this Gramian kind (controls bounded by `k`).
    pub certified: bool,
}

/// Smallest `r` whose truncation bound `2·Σ_{i>r} σᵢ` is within `tolerance`;
/// `n` if none is.
pub fn order_selector(hsv: &[f64], tolerance: f64) -> usize {
    let n = hsv.len();
    // tails[r] = Σ_{i≥r} σᵢ (0-based), accumulated from the small end
    let mut tails = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tails[i] = tails[i + 1] + hsv[i];
    }
    (1..n).find(|&r| 2.0 * tails[r] <= tolerance).unwrap_or(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::{Method, SolveDiagnostics};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn pair(p: DMatrix<f64>, q: DMatrix<f64>) -> GramianPair {
        let diag = SolveDiagnostics { method: Method::KroneckerDirect, iterations: 1, residual_norm: 0.0, definiteness_margin: 0.0 };
        GramianPair {
            p,
            q,
            kind: GramianKind::Type2Bilinear,
            k: 1.0,
            delta: None,
            p_diagnostics: diag,
            q_diagnostics: diag,
            lmi: None,
            not_minimal: false,
        }
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
    fn identity_gramians_give_orthogonal_transform() {
        let g = pair(DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let bal = square_root_balance(&two_state(), &g, &Options::default()).unwrap();
        assert_relative_eq!(bal.hsv[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(bal.hsv[1], 1.0, epsilon = 1e-14);
        let tt = &bal.t * bal.t.transpose();
        assert_relative_eq!(tt, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn scalar_balancing() {
        let sys = BilinearSystem::new(dmatrix![-1.0], dmatrix![1.0], vec![dmatrix![0.5]], dmatrix![1.0]).unwrap();
        let g = pair(dmatrix![4.0 / 3.0], dmatrix![4.0 / 3.0]);
        let bal = square_root_balance(&sys, &g, &Options::default()).unwrap();
        assert_relative_eq!(bal.hsv[0], 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(bal.t[(0, 0)].abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn diagonal_gramians_with_equal_singular_values() {
        let g = pair(dmatrix![4.0, 0.0; 0.0, 1.0], dmatrix![1.0, 0.0; 0.0, 4.0]);
        let bal = square_root_balance(&two_state(), &g, &Options::default()).unwrap();
        assert_relative_eq!(bal.hsv[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(bal.hsv[1], 2.0, epsilon = 1e-12);
        let (rp, rq) = bal.balancing_residuals(&g);
        assert!(rp <= 1e-10 && rq <= 1e-10, "{rp} {rq}");
        assert_relative_eq!(&bal.t * &bal.t_inv, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn singular_q_is_rejected() {
        let g = pair(DMatrix::identity(2, 2), dmatrix![1.0, 0.0; 0.0, 0.0]);
        assert!(matches!(square_root_balance(&two_state(), &g, &Options::default()), Err(Error::NotObservable { .. })));
    }

    #[test]
    fn singular_p_hits_the_floor() {
        let g = pair(dmatrix![1.0, 0.0; 0.0, 0.0], DMatrix::identity(2, 2));
        assert!(matches!(square_root_balance(&two_state(), &g, &Options::default()), Err(Error::HsvFloor { .. })));
    }

    #[test]
    fn distinct_grouping() {
        let (s, rep) = distinct_sum(&[3.0, 3.0, 1.0], DISTINCT_TOLERANCE);
        assert_eq!(2.0 * s, 8.0);
        assert!(rep);
        let (s, rep) = distinct_sum(&[0.5], DISTINCT_TOLERANCE);
        assert_eq!(s, 0.5);
        assert!(!rep);
    }

    #[test]
    fn truncation_bounds() {
        let g = pair(dmatrix![4.0, 0.0; 0.0, 1.0], dmatrix![1.0, 0.0; 0.0, 0.25]);
        let bal = square_root_balance(&two_state(), &g, &Options::default()).unwrap();
        let rom = truncate(&bal, 1).unwrap();
        assert_eq!(rom.tail_hsv.len(), 1);
        assert_relative_eq!(rom.bound_all, 2.0 * bal.hsv[1], epsilon = 1e-15);
        assert_eq!(rom.bound_all, rom.bound_distinct);
        assert_eq!(rom.system.states(), 1);
        assert!(matches!(truncate(&bal, 2), Err(Error::OrderOutOfRange { .. })));
        assert!(matches!(truncate(&bal, 0), Err(Error::OrderOutOfRange { .. })));
        assert_eq!(ReducedModel::untruncated(&bal).bound_all, 0.0);
    }

    #[test]
    fn order_selection() {
        assert_eq!(order_selector(&[1.0, 1e-6], 1e-3), 1);
        assert_eq!(order_selector(&[1.0, 1.0], 1e-3), 2);
        assert_eq!(order_selector(&[1.0, 0.1, 0.01], 0.25), 1);
        assert_eq!(order_selector(&[], 1.0), 0);
    }
}
