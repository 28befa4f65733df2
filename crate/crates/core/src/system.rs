//! Bilinear state-space realizations
//!
//! ```text
//! dx/dt = A x + B u + Σᵢ Nᵢ x uᵢ,    y = C x
//! ```
//!
//! together with their structural checks, mean-square stability spectra and
//! state-space transformations.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, kron, spectral_abscissa};
use crate::options::Options;

/// Dense bilinear realization `(A, B, N₁..N_m, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub couplings: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    Dimension { matrix: String, expected: (usize, usize), found: (usize, usize) },
    NonFinite { matrix: String, row: usize, col: usize },
    CouplingCount { expected: usize, found: usize },
    EmptyDimension { which: &'static str },
    RaggedRow { matrix: String, row: usize, expected: usize, found: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Dimension { matrix, expected, found } => write!(
                f,
                "{matrix} is {}×{}, expected {}×{}",
                found.0, found.1, expected.0, expected.1
            ),
            ValidationIssue::NonFinite { matrix, row, col } => {
                write!(f, "{matrix}[{row},{col}] is not finite")
            }
            ValidationIssue::CouplingCount { expected, found } => {
                write!(f, "expected {expected} coupling matrices N_i (one per input), found {found}")
            }
            ValidationIssue::EmptyDimension { which } => write!(f, "dimension {which} must be positive"),
            ValidationIssue::RaggedRow { matrix, row, expected, found } => {
                write!(f, "{matrix} row {row} has {found} entries, expected {expected}")
            }
        }
    }
}

impl BilinearSystem {
    /// Build and validate a system.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, couplings: Vec<DMatrix<f64>>, c: DMatrix<f64>) -> Result<Self> {
        let sys = BilinearSystem { a, b, couplings, c };
        sys.validate()?;
        Ok(sys)
    }

    /// State dimension n.
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension m.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension p.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// All invariant violations, not just the first.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let p = self.c.nrows();
        let mut issues = Vec::new();
        for (which, d) in [("n", n), ("m", m), ("p", p)] {
            if d == 0 {
                issues.push(ValidationIssue::EmptyDimension { which });
            }
        }
        let mut check = |name: String, mat: &DMatrix<f64>, rows: usize, cols: usize| {
            if mat.shape() != (rows, cols) {
                issues.push(ValidationIssue::Dimension { matrix: name.clone(), expected: (rows, cols), found: mat.shape() });
            }
            for j in 0..mat.ncols() {
                for i in 0..mat.nrows() {
                    if !mat[(i, j)].is_finite() {
                        issues.push(ValidationIssue::NonFinite { matrix: name.clone(), row: i, col: j });
                    }
                }
            }
        };
        check("A".into(), &self.a, n, n);
        check("B".into(), &self.b, n, m);
        check("C".into(), &self.c, p, n);
        for (i, ni) in self.couplings.iter().enumerate() {
            check(format!("N{}", i + 1), ni, n, n);
        }
        if self.couplings.len() != m {
            issues.push(ValidationIssue::CouplingCount { expected: m, found: self.couplings.len() });
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// `true` when every coupling matrix is exactly zero (a linear system).
    pub fn is_linear(&self) -> bool {
        self.couplings.iter().all(|n| n.iter().all(|&v| v == 0.0))
    }

    /// Copy of the system with `B` replaced by zero.
    pub fn without_input_matrix(&self) -> Self {
        let mut s = self.clone();
        s.b.fill(0.0);
        s
    }

    /// `A ↦ A + shift·I`.
    pub fn shifted_drift(&self, shift: f64) -> DMatrix<f64> {
        let n = self.states();
        &self.a + DMatrix::<f64>::identity(n, n) * shift
    }

    /// Rescale inputs: `B̃ = B/γ`, `Ñᵢ = Nᵢ/γ`. Driving the result with `γ·u`
    /// reproduces the state trajectory of the original driven by `u`.
    pub fn rescale(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("rescaling constant must be positive, got {gamma}")));
        }
        Ok(BilinearSystem {
            a: self.a.clone(),
            b: &self.b / gamma,
            couplings: self.couplings.iter().map(|n| n / gamma).collect(),
            c: self.c.clone(),
        })
    }

    /// State-space transformation `x̂ = T x`, rejecting `T` above the
    /// configured condition-number cap.
    pub fn transform(&self, t: &DMatrix<f64>, opts: &Options) -> Result<Self> {
        let n = self.states();
        if t.shape() != (n, n) {
            return Err(Error::Dimension(format!("transformation is {}×{}, expected {n}×{n}", t.nrows(), t.ncols())));
        }
        let cond = condition_number(t);
        if !(cond <= opts.transform_cond_cap) {
            return Err(Error::Singular(format!(
                "transformation condition number {cond:e} exceeds cap {:e}",
                opts.transform_cond_cap
            )));
        }
        let t_inv = t.clone().try_inverse().ok_or_else(|| Error::Singular("transformation is singular".into()))?;
        Ok(self.transform_with_inverse(t, &t_inv))
    }

    /// `Â = TAT⁻¹, B̂ = TB, Ĉ = CT⁻¹, N̂ᵢ = TNᵢT⁻¹` with a known inverse.
    pub fn transform_with_inverse(&self, t: &DMatrix<f64>, t_inv: &DMatrix<f64>) -> Self {
        BilinearSystem {
            a: t * &self.a * t_inv,
            b: t * &self.b,
            couplings: self.couplings.iter().map(|n| t * n * t_inv).collect(),
            c: &self.c * t_inv,
        }
    }

    /// Split into state blocks of size `r` and `n − r`.
    pub fn partition(&self, r: usize) -> Result<Partitioned> {
        let n = self.states();
        if r < 1 || r >= n {
            return Err(Error::OrderOutOfRange { r, n });
        }
        let s = n - r;
        let split = |m: &DMatrix<f64>| Blocks {
            b11: m.view((0, 0), (r, r)).clone_owned(),
            b12: m.view((0, r), (r, s)).clone_owned(),
            b21: m.view((r, 0), (s, r)).clone_owned(),
            b22: m.view((r, r), (s, s)).clone_owned(),
        };
        Ok(Partitioned {
            r,
            a: split(&self.a),
            b1: self.b.rows(0, r).clone_owned(),
            b2: self.b.rows(r, s).clone_owned(),
            c1: self.c.columns(0, r).clone_owned(),
            c2: self.c.columns(r, s).clone_owned(),
            couplings: self.couplings.iter().map(split).collect(),
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(LoadError::Io)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, LoadError> {
        let file: SystemFile = serde_json::from_str(text).map_err(LoadError::Parse)?;
        file.into_system().map_err(LoadError::Invalid)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SystemFile::from(self)).expect("system serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}

/// Four blocks of an n×n matrix split at r.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub b11: DMatrix<f64>,
    pub b12: DMatrix<f64>,
    pub b21: DMatrix<f64>,
    pub b22: DMatrix<f64>,
}

impl Blocks {
    pub fn assemble(&self) -> DMatrix<f64> {
        let r = self.b11.nrows();
        let s = self.b22.nrows();
        let mut m = DMatrix::zeros(r + s, r + s);
        m.view_mut((0, 0), (r, r)).copy_from(&self.b11);
        m.view_mut((0, r), (r, s)).copy_from(&self.b12);
        m.view_mut((r, 0), (s, r)).copy_from(&self.b21);
        m.view_mut((r, r), (s, s)).copy_from(&self.b22);
        m
    }
}

/// Block view of a realization, as produced by [`BilinearSystem::partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct Partitioned {
    pub r: usize,
    pub a: Blocks,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub couplings: Vec<Blocks>,
}

impl Partitioned {
    pub fn reassemble(&self) -> BilinearSystem {
        let n = self.b1.nrows() + self.b2.nrows();
        let m = self.b1.ncols();
        let p = self.c1.nrows();
        let mut b = DMatrix::zeros(n, m);
        b.rows_mut(0, self.r).copy_from(&self.b1);
        b.rows_mut(self.r, n - self.r).copy_from(&self.b2);
        let mut c = DMatrix::zeros(p, n);
        c.columns_mut(0, self.r).copy_from(&self.c1);
        c.columns_mut(self.r, n - self.r).copy_from(&self.c2);
        BilinearSystem { a: self.a.assemble(), b, couplings: self.couplings.iter().map(Blocks::assemble).collect(), c }
    }

    /// The leading-block system `(A₁₁, B₁, Nᵢ,₁₁, C₁)`.
    pub fn leading(&self) -> BilinearSystem {
        BilinearSystem {
            a: self.a.b11.clone(),
            b: self.b1.clone(),
            couplings: self.couplings.iter().map(|n| n.b11.clone()).collect(),
            c: self.c1.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read system file: {0}")]
    Io(std::io::Error),
    #[error("malformed system JSON: {0}")]
    Parse(serde_json::Error),
    #[error("{0}")]
    Invalid(Error),
}

/// On-disk JSON layout: row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub n_mats: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Rows → matrix, checking raggedness. `cols` is used for empty row lists.
pub fn rows_to_matrix(name: &str, rows: &[Vec<f64>], cols: usize, issues: &mut Vec<ValidationIssue>) -> DMatrix<f64> {
    let ncols = rows.first().map_or(cols, Vec::len);
    let mut ok = true;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            issues.push(ValidationIssue::RaggedRow { matrix: name.into(), row: i, expected: ncols, found: row.len() });
            ok = false;
        }
    }
    if !ok {
        return DMatrix::zeros(rows.len(), ncols);
    }
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

impl SystemFile {
    pub fn into_system(self) -> Result<BilinearSystem> {
        let mut issues = Vec::new();
        let a = rows_to_matrix("A", &self.a, self.n, &mut issues);
        let b = rows_to_matrix("B", &self.b, self.m, &mut issues);
        let c = rows_to_matrix("C", &self.c, self.n, &mut issues);
        let couplings: Vec<_> = self
            .n_mats
            .iter()
            .enumerate()
            .map(|(i, rows)| rows_to_matrix(&format!("N{}", i + 1), rows, self.n, &mut issues))
            .collect();
        let sys = BilinearSystem { a, b, couplings, c };
        // declared dimensions must agree with the matrices
        for (name, declared, actual) in [
            ("n", self.n, sys.a.nrows()),
            ("m", self.m, sys.b.ncols()),
            ("p", self.p, sys.c.nrows()),
        ] {
            if declared != actual {
                issues.push(ValidationIssue::Dimension {
                    matrix: format!("declared {name}"),
                    expected: (declared, declared),
                    found: (actual, actual),
                });
            }
        }
        issues.extend(sys.issues());
        if issues.is_empty() {
            Ok(sys)
        } else {
            Err(Error::Validation(issues))
        }
    }
}

impl From<&BilinearSystem> for SystemFile {
    fn from(s: &BilinearSystem) -> Self {
        SystemFile {
            n: s.states(),
            m: s.inputs(),
            p: s.outputs(),
            a: matrix_to_rows(&s.a),
            b: matrix_to_rows(&s.b),
            n_mats: s.couplings.iter().map(matrix_to_rows).collect(),
            c: matrix_to_rows(&s.c),
        }
    }
}

/// `I⊗M + M⊗I + Σ Nᵢ⊗Nᵢ`, the matrix of `X ↦ M X + X Mᵀ + Σ Nᵢ X Nᵢᵀ`
/// acting on column-stacked `vec(X)`.
pub fn kronecker_operator(m: &DMatrix<f64>, couplings: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut k = kron(&id, m) + kron(m, &id);
    for ni in couplings {
        k += kron(ni, ni);
    }
    k
}

/// Spectra governing existence of the Gramians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub hurwitz: bool,
    pub spectral_abscissa_a: f64,
    /// Max real part of the spectrum of `I⊗A + A⊗I + Σ Nᵢ⊗Nᵢ`.
    pub ms_abscissa: f64,
    pub k: f64,
    /// Same spectrum with `A` replaced by `A + (k²/2) I`, from its own eigen-solve.
    pub perturbed_ms_abscissa: f64,
    /// Largest `k` with negative perturbed abscissa (0 when none).
    pub k_max_estimate: f64,
}

impl StabilityReport {
    pub fn mean_square_stable(&self) -> bool {
        self.ms_abscissa < 0.0
    }

    /// Perturbed abscissa at an arbitrary `k`; the shift is `k²·I` at the Kronecker level.
    pub fn perturbed_at(&self, k: f64) -> f64 {
        self.ms_abscissa + k * k
    }

    pub fn admits(&self, k: f64) -> bool {
        self.perturbed_at(k) < 0.0
    }
}

const K_MAX_BISECTION_TOL: f64 = 1e-8;

/// Hurwitz and mean-square spectra of `sys`, plus the perturbed one at `k`.
pub fn stability_report(sys: &BilinearSystem, k: f64, opts: &Options) -> Result<StabilityReport> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!("control bound must be nonnegative, got {k}")));
    }
    let n = sys.states();
    if n > opts.max_kron_n {
        return Err(Error::SizeCap { n, cap: opts.max_kron_n });
    }
    let spectral_abscissa_a = spectral_abscissa(&sys.a)?;
    let ms_abscissa = spectral_abscissa(&kronecker_operator(&sys.a, &sys.couplings))?;
    let perturbed_ms_abscissa = if k == 0.0 {
        ms_abscissa
    } else {
        spectral_abscissa(&kronecker_operator(&sys.shifted_drift(0.5 * k * k), &sys.couplings))?
    };
    Ok(StabilityReport {
        hurwitz: spectral_abscissa_a < 0.0,
        spectral_abscissa_a,
        ms_abscissa,
        k,
        perturbed_ms_abscissa,
        k_max_estimate: k_max_bisection(ms_abscissa),
    })
}

// Bisection on k ↦ ms + k², seeded by the closed form sqrt(−ms).
pub(crate) fn k_max_bisection(ms_abscissa: f64) -> f64 {
    if !(ms_abscissa < 0.0) {
        return 0.0;
    }
    let seed = (-ms_abscissa).sqrt();
    let f = |k: f64| ms_abscissa + k * k;
    let (mut lo, mut hi) = (0.0, 2.0 * seed + 1.0);
    while hi - lo > K_MAX_BISECTION_TOL * seed.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!((lo - seed).abs() <= 1e-7 * seed.max(1.0));
    lo
}
