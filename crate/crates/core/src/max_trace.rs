//! Barrier path-following for the largest-trace `X` satisfying
//!
//! ```text
//! T(X) = −(Mᵀ X + X M + Σ Nᵢᵀ X Nᵢ) − δ I − X B Bᵀ X ≻ 0,   X ≻ 0.
//! ```
//!
//! The centering problem `max t·tr X + log det X + log det T(X)` is concave
//! and solved by damped Newton in the `n(n+1)/2` coordinates of `X`; `t` is
//! increased geometrically until the duality-gap estimate `2n/t` is small
//! relative to `tr X`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::equations::{solve_generalized_lyapunov, GeneralizedLyapunovProblem};
use crate::linalg::{norm2, symmetrize};
use crate::options::Options;

const GAP_REL: f64 = 1e-9;
const T_GROWTH: f64 = 20.0;
const MAX_OUTER: usize = 60;
const MAX_INNER: usize = 80;
const DECREMENT_TOL: f64 = 1e-10;
/// Growth of `tr X` beyond this factor of the start is treated as unboundedness.
const UNBOUNDED_FACTOR: f64 = 1e12;

pub(crate) struct MaxTracePoint {
    pub x: DMatrix<f64>,
    pub newton_steps: usize,
}

struct Problem<'a> {
    m: &'a DMatrix<f64>,
    couplings: &'a [DMatrix<f64>],
    bbt: DMatrix<f64>,
    delta: f64,
    /// Upper-triangle coordinates `(p, q)` with `p ≤ q`.
    coords: Vec<(usize, usize)>,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.m.nrows()
    }

    fn t_of(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut out = -(self.m.transpose() * x + x * self.m) - DMatrix::<f64>::identity(n, n) * self.delta - x * &self.bbt * x;
        for c in self.couplings {
            out -= c.transpose() * x * c;
        }
        symmetrize(&mut out);
        out
    }

    fn basis(&self, a: usize) -> DMatrix<f64> {
        let n = self.n();
        let (p, q) = self.coords[a];
        let mut e = DMatrix::zeros(n, n);
        e[(p, q)] = 1.0;
        e[(q, p)] = 1.0;
        e
    }

    /// `dT[E_a] = −(MᵀE + EC + (MᵀE + EC)ᵀ + Σ NᵢᵀENᵢ)` at `X`, with `C = BBᵀX`.
    fn d_t(&self, a: usize, c: &DMatrix<f64>) -> DMatrix<f64> {
        let e = self.basis(a);
        let mut l = self.m.transpose() * &e + &e * c;
        l += l.transpose();
        for cp in self.couplings {
            l += cp.transpose() * &e * cp;
        }
        -l
    }

    /// Coordinates of the symmetric matrix `G` against the basis: `⟨G, E_a⟩`.
    fn pair(&self, g: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.coords.len(), self.coords.iter().map(|&(p, q)| if p == q { g[(p, p)] } else { 2.0 * g[(p, q)] }))
    }

    fn assemble(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for (a, &(p, q)) in self.coords.iter().enumerate() {
            out[(p, q)] += v[a];
            if p != q {
                out[(q, p)] += v[a];
            }
        }
        out
    }

    /// Barrier objective, `None` outside the domain.
    fn objective(&self, x: &DMatrix<f64>, t: f64) -> Option<f64> {
        let lx = x.clone().cholesky()?;
        let lt = self.t_of(x).cholesky()?;
        let logdet = |l: &DMatrix<f64>| l.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        Some(t * x.trace() + logdet(&lx.l()) + logdet(&lt.l()))
    }
}

/// `tr(S E_a S' E_b)` for the sparse basis elements.
fn sparse_trace(s: &DMatrix<f64>, s2: &DMatrix<f64>, ea: (usize, usize), eb: (usize, usize)) -> f64 {
    let entries = |(p, q): (usize, usize)| -> ([(usize, usize); 2], usize) {
        if p == q {
            ([(p, p), (p, p)], 1)
        } else {
            ([(p, q), (q, p)], 2)
        }
    };
    let (ea_e, na) = entries(ea);
    let (eb_e, nb) = entries(eb);
    let mut acc = 0.0;
    for &(i, j) in &ea_e[..na] {
        for &(k, l) in &eb_e[..nb] {
            // Σ S_{li} (E_a)_{ij} S'_{jk} (E_b)_{kl}
            acc += s[(l, i)] * s2[(j, k)];
        }
    }
    acc
}

pub(crate) fn max_trace_point(
    m: &DMatrix<f64>,
    couplings: &[DMatrix<f64>],
    b: &DMatrix<f64>,
    delta: f64,
    opts: &Options,
) -> Result<MaxTracePoint> {
    let n = m.nrows();
    let bbt = b * b.transpose();
    let coords: Vec<(usize, usize)> = (0..n).flat_map(|p| (p..n).map(move |q| (p, q))).collect();
    let prob = Problem { m, couplings, bbt, delta, coords };

    // strictly feasible start: a scaled solution of L*(X) = −I
    let id = DMatrix::<f64>::identity(n, n);
    let lyap = GeneralizedLyapunovProblem::observability(m.clone(), couplings.to_vec(), -id.clone());
    let x_hat = solve_generalized_lyapunov(&lyap, opts)?.x;
    let beta = norm2(&(&x_hat * b)).powi(2);
    let mut x = &x_hat * if beta > 0.0 { 0.5 / beta } else { 1.0 };
    if prob.objective(&x, 0.0).is_none() {
        return Err(Error::Stagnation(format!("no strictly feasible starting point for δ = {delta:e}")));
    }
    let start_trace = x.trace();
    let mut t = 2.0 * n as f64 / start_trace;
    let mut steps = 0;

    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_INNER {
            let x_inv = x.clone().cholesky().expect("iterate is positive definite").inverse();
            let tm = prob.t_of(&x);
            let t_inv = tm.clone().cholesky().expect("iterate is strictly feasible").inverse();
            let c = &prob.bbt * &x;

            // gradient: t·I + X⁻¹ − L(T⁻¹) − T⁻¹XBBᵀ − BBᵀXT⁻¹
            let mut l_adj = m * &t_inv + &t_inv * m.transpose();
            for cp in couplings {
                l_adj += cp * &t_inv * cp.transpose();
            }
            let cross = &t_inv * c.transpose();
            let grad_mat = &id * t + &x_inv - l_adj - &cross - cross.transpose();
            let g = prob.pair(&grad_mat);

            // Hessian: −tr(X⁻¹E_aX⁻¹E_b) − tr(T⁻¹D_aT⁻¹D_b) − 2tr(T⁻¹E_aBBᵀE_b)
            let nv = prob.coords.len();
            let chol_t = t_inv.clone().cholesky().ok_or_else(|| Error::Singular("barrier Hessian".into()))?;
            let gt = chol_t.l();
            let tri = n * (n + 1) / 2;
            let mut f = DMatrix::<f64>::zeros(tri, nv);
            for a in 0..nv {
                let fa = gt.transpose() * prob.d_t(a, &c) * &gt;
                let mut row = 0;
                for p in 0..n {
                    for q in p..n {
                        f[(row, a)] = if p == q { fa[(p, p)] } else { std::f64::consts::SQRT_2 * fa[(p, q)] };
                        row += 1;
                    }
                }
            }
            let mut neg_h = f.transpose() * &f;
            for a in 0..nv {
                for bidx in a..nv {
                    let v = sparse_trace(&x_inv, &x_inv, prob.coords[a], prob.coords[bidx])
                        + 2.0 * sparse_trace(&t_inv, &prob.bbt, prob.coords[a], prob.coords[bidx]);
                    neg_h[(a, bidx)] += v;
                    if bidx != a {
                        neg_h[(bidx, a)] += v;
                    }
                }
            }
            let dir = match neg_h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => neg_h.lu().solve(&g).ok_or_else(|| Error::Singular("barrier Newton system".into()))?,
            };
            steps += 1;
            let decrement = g.dot(&dir);
            if !(decrement > 2.0 * DECREMENT_TOL) {
                break;
            }
            let step = prob.assemble(&dir);
            let f0 = prob.objective(&x, t).expect("current iterate is feasible");
            let mut s = 1.0;
            loop {
                let cand = &x + &step * s;
                if let Some(f1) = prob.objective(&cand, t) {
                    if f1 >= f0 + 0.25 * s * decrement {
                        x = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-14 {
                    break;
                }
            }
            if s < 1e-14 {
                break;
            }
        }
        let tr = x.trace();
        if 2.0 * n as f64 / t <= GAP_REL * tr || tr > UNBOUNDED_FACTOR * start_trace {
            break;
        }
        t *= T_GROWTH;
    }
    symmetrize(&mut x);
    Ok(MaxTracePoint { x, newton_steps: steps })
}
