//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` in column-major storage,
//! so `as_slice()` of a matrix is its column-stacked `vec`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute error when `b` is zero.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Largest real part over the spectrum of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure(format!("{}×{} Schur iteration", m.nrows(), m.ncols())))?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(symmetrized(m));
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        SymEigen { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymEigen::new(m).min()
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymEigen::new(m).max()
}

/// 2-norm condition number `σ_max / σ_min` (infinite for singular input).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = match p.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => p.clone().try_inverse()?,
    };
    if inv.iter().all(|v| v.is_finite()) {
        Some(symmetrized(&inv))
    } else {
        None
    }
}

/// Solver for the Lyapunov/Sylvester equation `M X + X Mᵀ = R` via the
/// Bartels–Stewart algorithm on the real Schur form of `M`.
///
/// The Schur factorization is computed once so repeated solves with the
/// same `M` cost two orthogonal similarity products plus the quasi-triangular
/// back substitution.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    blocks: Vec<(usize, usize)>,
}

impl LyapunovSolver {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let schur = Schur::try_new(m.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::EigenFailure(format!("{n}×{n} Schur iteration")))?;
        let (q, t) = schur.unpack();
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && t[(i + 1, i)] != 0.0 {
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        Ok(LyapunovSolver { q, t, blocks })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Solve `M X + X Mᵀ = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let f = self.q.transpose() * rhs * &self.q;
        let y = self.solve_quasi_triangular(&f)?;
        Ok(&self.q * y * self.q.transpose())
    }

    // T Y + Y Tᵀ = F with T upper quasi-triangular. Block (i, j) depends on
    // blocks (k, j), k > i and (i, l), l > j, so sweep both indices downward.
    fn solve_quasi_triangular(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let t = &self.t;
        let mut y = DMatrix::<f64>::zeros(n, n);
        for &(i0, p) in self.blocks.iter().rev() {
            for &(j0, q) in self.blocks.iter().rev() {
                let mut e = f.view((i0, j0), (p, q)).clone_owned();
                let k_start = i0 + p;
                if k_start < n {
                    let tik = t.view((i0, k_start), (p, n - k_start));
                    let ykj = y.view((k_start, j0), (n - k_start, q));
                    e -= tik * ykj;
                }
                let l_start = j0 + q;
                if l_start < n {
                    let yil = y.view((i0, l_start), (p, n - l_start));
                    let tjl = t.view((j0, l_start), (q, n - l_start));
                    e -= yil * tjl.transpose();
                }
                let tii = t.view((i0, i0), (p, p)).clone_owned();
                let tjj = t.view((j0, j0), (q, q)).clone_owned();
                let block = solve_small_sylvester(&tii, &tjj, &e)?;
                y.view_mut((i0, j0), (p, q)).copy_from(&block);
            }
        }
        Ok(y)
    }
}

// S Y + Y Rᵀ = E for blocks of size ≤ 2, via the (≤4)-dimensional Kronecker system.
fn solve_small_sylvester(s: &DMatrix<f64>, r: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    let q = r.nrows();
    if p == 1 && q == 1 {
        let d = s[(0, 0)] + r[(0, 0)];
        if d == 0.0 {
            return Err(Error::Singular("Lyapunov operator has eigenvalue pair summing to zero".into()));
        }
        return Ok(DMatrix::from_element(1, 1, e[(0, 0)] / d));
    }
    let k = kron(&DMatrix::identity(q, q), s) + kron(r, &DMatrix::identity(p, p));
    let rhs = DVector::from_column_slice(e.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator has eigenvalue pair summing to zero".into()))?;
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn kron_lyap(m: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let id = DMatrix::identity(n, n);
        let big = kron(&id, m) + kron(m, &id);
        let x = big.lu().solve(&DVector::from_column_slice(r.as_slice())).unwrap();
        DMatrix::from_column_slice(n, n, x.as_slice())
    }

    #[test]
    fn bartels_stewart_matches_kronecker_with_complex_pairs() {
        // rotation block gives a complex-conjugate pair in the Schur form
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 3.0, 0.2, 0.0, //
                -3.0, -1.0, 0.0, 0.5, //
                0.1, 0.0, -2.0, 0.3, //
                0.0, 0.4, -0.2, -0.5,
            ],
        );
        let r = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.2, 0.0, 0.1, //
            0.2, 2.0, 0.3, 0.0, //
            0.0, 0.3, 1.5, 0.4, //
            0.1, 0.0, 0.4, 1.0,
        ]);
        let solver = LyapunovSolver::new(&m).unwrap();
        assert!(solver.blocks.iter().any(|&(_, s)| s == 2));
        let x = solver.solve(&r).unwrap();
        let oracle = kron_lyap(&m, &r);
        assert!(rel_frobenius(&x, &oracle) < 1e-12);
    }

    #[test]
    fn scalar_lyapunov() {
        let m = DMatrix::from_element(1, 1, -0.5);
        let x = LyapunovSolver::new(&m).unwrap().solve(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_operator_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let solver = LyapunovSolver::new(&m).unwrap();
        assert!(solver.solve(&DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn sorted_symmetric_eigen() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let e = SymEigen::new(&m);
        assert_eq!(e.values.as_slice(), &[1.0, 4.0]);
        assert_relative_eq!(e.vectors[(1, 0)].abs(), 1.0);
    }

    #[test]
    fn abscissa_of_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.3, 2.0, -2.0, -0.3]);
        assert_relative_eq!(spectral_abscissa(&m).unwrap(), -0.3, epsilon = 1e-12);
    }
}
