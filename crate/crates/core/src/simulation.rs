//! Fixed-step RK4 trajectories, bounded control families and L² norms.
//!
//! Every norm is a composite trapezoid rule on the integration grid. The
//! numerical tolerance attached to a bound check (`ε_q`) is estimated per
//! run by comparing the rule at `h` with the rule at `2h` on the same samples
//! (Richardson), plus a small floor for round-off; see [`check_tolerance`].

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::system::BilinearSystem;

/// Absolute part of the tolerance floor.
pub const TOLERANCE_ABS_FLOOR: f64 = 1e-12;
/// Relative part of the tolerance floor, applied to the magnitudes compared.
pub const TOLERANCE_REL_FLOOR: f64 = 1e-9;
/// A check is a hard failure only when `slack < −HARD_FAILURE_FACTOR·ε_q`.
pub const HARD_FAILURE_FACTOR: f64 = 10.0;

/// Switch times closer than this to an evaluation time count as reached.
const SWITCH_SNAP: f64 = 1e-10;

/// Parameters of a control signal `u : [0, T] → ℝᵐ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlKind {
    Zero { inputs: usize },
    Constant { value: Vec<f64> },
    /// `uᵢ(t) = Σⱼ aᵢⱼ sin(ωⱼ t + φⱼ)`.
    SinusoidBank { amplitudes: Vec<Vec<f64>>, frequencies: Vec<f64>, phases: Vec<f64> },
    /// `u(t) = values[j]` on `[switch_times[j], switch_times[j+1])`; `switch_times[0] = 0`.
    PiecewiseConstantRandom { switch_times: Vec<f64>, values: Vec<Vec<f64>> },
    /// Linear interpolation between samples, constant beyond the ends.
    UserSamples { times: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSignal {
    pub id: String,
    #[serde(flatten)]
    pub kind: ControlKind,
    /// Certified `sup_t ‖u(t)‖₂`.
    pub k_bound: f64,
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_rows(rows: &[Vec<f64>], m: usize, what: &str) -> Result<()> {
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension(format!("{what}: every entry needs {m} components")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what}: non-finite value")));
    }
    Ok(())
}

fn check_times(times: &[f64], what: &str) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!("{what} must be finite and strictly increasing")));
    }
    Ok(())
}

impl ControlKind {
    pub fn inputs(&self) -> usize {
        match self {
            ControlKind::Zero { inputs } => *inputs,
            ControlKind::Constant { value } => value.len(),
            ControlKind::SinusoidBank { amplitudes, .. } => amplitudes.len(),
            ControlKind::PiecewiseConstantRandom { values, .. } | ControlKind::UserSamples { values, .. } => {
                values.first().map_or(0, Vec::len)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ControlKind::Zero { .. } => Ok(()),
            ControlKind::Constant { value } => check_rows(std::slice::from_ref(value), value.len(), "constant control"),
            ControlKind::SinusoidBank { amplitudes, frequencies, phases } => {
                if frequencies.len() != phases.len() {
                    return Err(Error::Dimension("sinusoid bank: frequencies and phases differ in length".into()));
                }
                check_rows(amplitudes, frequencies.len(), "sinusoid amplitudes")?;
                if frequencies.iter().chain(phases).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("sinusoid bank: non-finite frequency or phase".into()));
                }
                Ok(())
            }
            ControlKind::PiecewiseConstantRandom { switch_times, values } => {
                if switch_times.len() != values.len() || values.is_empty() {
                    return Err(Error::Dimension("piecewise-constant control needs one value per switch time".into()));
                }
                if switch_times[0] != 0.0 {
                    return Err(Error::InvalidArgument("piecewise-constant control must start at t = 0".into()));
                }
                check_times(switch_times, "switch times")?;
                check_rows(values, values[0].len(), "piecewise-constant values")
            }
            ControlKind::UserSamples { times, values } => {
                if times.len() != values.len() || values.is_empty() {
                    return Err(Error::Dimension("sampled control needs one value per sample time".into()));
                }
                check_times(times, "sample times")?;
                check_rows(values, values[0].len(), "samples")
            }
        }
    }

    /// A bound on `sup_t ‖u(t)‖₂` valid for all `t`.
    fn certified_bound(&self) -> f64 {
        match self {
            ControlKind::Zero { .. } => 0.0,
            ControlKind::Constant { value } => vec_norm(value),
            ControlKind::SinusoidBank { amplitudes, .. } => {
                amplitudes.iter().map(|row| row.iter().map(|a| a.abs()).sum::<f64>().powi(2)).sum::<f64>().sqrt()
            }
            ControlKind::PiecewiseConstantRandom { values, .. } | ControlKind::UserSamples { values, .. } => {
                values.iter().map(|v| vec_norm(v)).fold(0.0, f64::max)
            }
        }
    }
}

impl ControlSignal {
    /// Validate the parameters and certify the sup-norm bound.
    pub fn new(id: impl Into<String>, kind: ControlKind) -> Result<Self> {
        kind.validate()?;
        let k_bound = kind.certified_bound();
        Ok(ControlSignal { id: id.into(), kind, k_bound })
    }

    pub fn zero(m: usize) -> Self {
        ControlSignal { id: "zero".into(), kind: ControlKind::Zero { inputs: m }, k_bound: 0.0 }
    }

    pub fn constant(value: &[f64]) -> Self {
        ControlSignal::new("constant", ControlKind::Constant { value: value.to_vec() }).expect("finite constant")
    }

    pub fn inputs(&self) -> usize {
        self.kind.inputs()
    }

    /// `u(t)`, right-continuous at switch times.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.inputs());
        self.eval_into(t, false, &mut out);
        out
    }

    /// `u(t⁻)`, the left limit (differs from [`eval`](Self::eval) only at switches).
    pub fn eval_left(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.inputs());
        self.eval_into(t, true, &mut out);
        out
    }

    fn eval_into(&self, t: f64, left: bool, out: &mut DVector<f64>) {
        match &self.kind {
            ControlKind::Zero { .. } => out.fill(0.0),
            ControlKind::Constant { value } => out.copy_from_slice(value),
            ControlKind::SinusoidBank { amplitudes, frequencies, phases } => {
                for (i, row) in amplitudes.iter().enumerate() {
                    out[i] = row.iter().zip(frequencies).zip(phases).map(|((a, w), p)| a * (w * t + p).sin()).sum();
                }
            }
            ControlKind::PiecewiseConstantRandom { switch_times, values } => {
                let reached =
                    if left { switch_times.partition_point(|&s| s < t - SWITCH_SNAP) } else { switch_times.partition_point(|&s| s <= t + SWITCH_SNAP) };
                out.copy_from_slice(&values[reached.max(1) - 1]);
            }
            ControlKind::UserSamples { times, values } => {
                let j = times.partition_point(|&s| s <= t);
                if j == 0 {
                    out.copy_from_slice(&values[0]);
                } else if j == times.len() {
                    out.copy_from_slice(&values[j - 1]);
                } else {
                    let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
                    for i in 0..out.len() {
                        out[i] = (1.0 - w) * values[j - 1][i] + w * values[j][i];
                    }
                }
            }
        }
    }

    /// Same signal multiplied by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64, id: impl Into<String>) -> Self {
        let scale_rows = |rows: &[Vec<f64>]| rows.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect();
        let kind = match &self.kind {
            ControlKind::Zero { inputs } => ControlKind::Zero { inputs: *inputs },
            ControlKind::Constant { value } => ControlKind::Constant { value: value.iter().map(|v| v * factor).collect() },
            ControlKind::SinusoidBank { amplitudes, frequencies, phases } => ControlKind::SinusoidBank {
                amplitudes: scale_rows(amplitudes),
                frequencies: frequencies.clone(),
                phases: phases.clone(),
            },
            ControlKind::PiecewiseConstantRandom { switch_times, values } => {
                ControlKind::PiecewiseConstantRandom { switch_times: switch_times.clone(), values: scale_rows(values) }
            }
            ControlKind::UserSamples { times, values } => {
                ControlKind::UserSamples { times: times.clone(), values: scale_rows(values) }
            }
        };
        ControlSignal { id: id.into(), kind, k_bound: self.k_bound * factor.abs() }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = vec_norm(&v);
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// The seeded test family: zero, a constant of norm `k`, two sinusoid banks
/// and two piecewise-constant random signals, each certified `‖u(t)‖₂ ≤ k`.
/// Switch times lie on multiples of 0.05.
pub fn bounded_control_suite(m: usize, k: f64, t_final: f64, seed: u64) -> Vec<ControlSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = vec![ControlSignal::zero(m)];
    let k = k.max(0.0);

    let dir = unit_direction(&mut rng, m);
    suite.push(ControlSignal::constant(&dir.iter().map(|d| d * k).collect::<Vec<_>>()));

    for bank in 0..2 {
        let terms = 2 + bank;
        let frequencies: Vec<f64> = (0..terms).map(|_| rng.random_range(0.2..5.0)).collect();
        let phases: Vec<f64> = (0..terms).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let raw: Vec<Vec<f64>> = (0..m).map(|_| (0..terms).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let bound = raw.iter().map(|row| row.iter().map(|a| a.abs()).sum::<f64>().powi(2)).sum::<f64>().sqrt();
        let amplitudes = raw.iter().map(|row| row.iter().map(|a| a * k / bound).collect()).collect();
        let signal = ControlSignal::new(format!("sinusoid-{bank}"), ControlKind::SinusoidBank { amplitudes, frequencies, phases })
            .expect("generated sinusoid bank");
        suite.push(ControlSignal { k_bound: k, ..signal });
    }

    for pwc in 0..2 {
        let mut switch_times = vec![0.0];
        let mut values = Vec::new();
        let mut t = 0.0;
        loop {
            let dir = unit_direction(&mut rng, m);
            let magnitude: f64 = if values.is_empty() { 1.0 } else { rng.random_range(0.0..1.0) };
            values.push(dir.iter().map(|d| d * magnitude * k).collect::<Vec<_>>());
            let dwell = 0.05 * f64::from(rng.random_range(4..=40u32));
            t += dwell;
            if t >= t_final {
                break;
            }
            switch_times.push((t * 20.0).round() / 20.0);
        }
        let signal = ControlSignal::new(format!("pwc-{pwc}"), ControlKind::PiecewiseConstantRandom { switch_times, values })
            .expect("generated piecewise-constant control");
        suite.push(ControlSignal { k_bound: k, ..signal });
    }
    suite
}

/// Sampled solution of the state and output equations.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub h: f64,
    /// `n × (K+1)`, one column per grid point.
    pub states: DMatrix<f64>,
    /// `p × (K+1)`.
    pub outputs: DMatrix<f64>,
    /// `u(t_j)` (right values), `m × (K+1)`.
    pub inputs: DMatrix<f64>,
    /// `u(t_j⁻)` (left values), `m × (K+1)`.
    pub inputs_left: DMatrix<f64>,
    /// Running `‖u‖_{L²_{t_j}}`.
    pub u_l2: Vec<f64>,
    /// Running `‖y‖_{L²_{t_j}}`.
    pub y_l2: Vec<f64>,
    pub control_id: String,
    pub k_bound: f64,
}

/// Default step `min(1e-3, 0.01/‖A‖₂)`.
pub fn default_step(sys: &BilinearSystem) -> f64 {
    let a = norm2(&sys.a);
    if a > 0.0 {
        (0.01 / a).min(1e-3)
    } else {
        1e-3
    }
}

struct Rhs<'a> {
    sys: &'a BilinearSystem,
    /// `[A; N₁; …; N_m]`, so one product gives every state term.
    stacked: DMatrix<f64>,
    tmp: DVector<f64>,
}

impl<'a> Rhs<'a> {
    fn new(sys: &'a BilinearSystem) -> Self {
        let n = sys.states();
        let mut stacked = DMatrix::zeros(n * (sys.couplings.len() + 1), n);
        stacked.rows_mut(0, n).copy_from(&sys.a);
        for (i, nk) in sys.couplings.iter().enumerate() {
            stacked.rows_mut((i + 1) * n, n).copy_from(nk);
        }
        let tmp = DVector::zeros(stacked.nrows());
        Rhs { sys, stacked, tmp }
    }

    // out = A x + B u + Σ uᵢ Nᵢ x
    fn eval(&mut self, x: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>) {
        let n = x.len();
        self.tmp.gemv(1.0, &self.stacked, x, 0.0);
        out.copy_from(&self.tmp.rows(0, n));
        out.gemv(1.0, &self.sys.b, u, 1.0);
        for i in 0..u.len() {
            if u[i] != 0.0 {
                out.axpy(u[i], &self.tmp.rows((i + 1) * n, n), 1.0);
            }
        }
    }
}

/// Integrate from `x0` over `[0, T]` with classical RK4. The number of steps is
/// `round(T/h)` and the step is adjusted to land exactly on `T`.
pub fn simulate(sys: &BilinearSystem, x0: &DVector<f64>, u: &ControlSignal, t_final: f64, h: f64) -> Result<Trajectory> {
    sys.validate()?;
    let n = sys.states();
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state has {} entries, system has {n} states", x0.len())));
    }
    if u.inputs() != sys.inputs() {
        return Err(Error::Dimension(format!("control has {} inputs, system has {}", u.inputs(), sys.inputs())));
    }
    if !(h > 0.0) || !h.is_finite() || !(t_final >= h) || !t_final.is_finite() {
        return Err(Error::InvalidArgument(format!("need h > 0 and T ≥ h, got h = {h}, T = {t_final}")));
    }
    let steps = ((t_final / h).round() as usize).max(1);
    let h = t_final / steps as f64;
    let m = sys.inputs();

    let grid: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
    let mut states = DMatrix::zeros(n, steps + 1);
    let mut inputs = DMatrix::zeros(m, steps + 1);
    let mut inputs_left = DMatrix::zeros(m, steps + 1);
    states.set_column(0, x0);

    let mut rhs = Rhs::new(sys);
    let mut x = x0.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (DVector::zeros(n), DVector::zeros(n), DVector::zeros(n), DVector::zeros(n));
    let mut stage = DVector::zeros(n);
    let (mut u0, mut um, mut u1) = (DVector::zeros(m), DVector::zeros(m), DVector::zeros(m));

    u.eval_into(0.0, true, &mut u1);
    inputs_left.set_column(0, &u1);
    for j in 0..steps {
        let t = grid[j];
        let t_next = grid[j + 1];
        u.eval_into(t, false, &mut u0);
        u.eval_into(0.5 * (t + t_next), false, &mut um);
        u.eval_into(t_next, true, &mut u1);
        inputs.set_column(j, &u0);
        inputs_left.set_column(j + 1, &u1);

        rhs.eval(&x, &u0, &mut k1);
        stage.copy_from(&x);
        stage.axpy(0.5 * h, &k1, 1.0);
        rhs.eval(&stage, &um, &mut k2);
        stage.copy_from(&x);
        stage.axpy(0.5 * h, &k2, 1.0);
        rhs.eval(&stage, &um, &mut k3);
        stage.copy_from(&x);
        stage.axpy(h, &k3, 1.0);
        rhs.eval(&stage, &u1, &mut k4);

        x.axpy(h / 6.0, &k1, 1.0);
        x.axpy(h / 3.0, &k2, 1.0);
        x.axpy(h / 3.0, &k3, 1.0);
        x.axpy(h / 6.0, &k4, 1.0);
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(Error::BlowUp { step: j + 1, t: t_next });
        }
        states.set_column(j + 1, &x);
    }
    u.eval_into(t_final, false, &mut u0);
    inputs.set_column(steps, &u0);

    let outputs = &sys.c * &states;
    let u_sq_right: Vec<f64> = inputs.column_iter().map(|c| c.norm_squared()).collect();
    let u_sq_left: Vec<f64> = inputs_left.column_iter().map(|c| c.norm_squared()).collect();
    let y_sq: Vec<f64> = outputs.column_iter().map(|c| c.norm_squared()).collect();
    let u_l2 = running_energy(&u_sq_right, &u_sq_left, h).into_iter().map(f64::sqrt).collect();
    let y_l2 = running_energy(&y_sq, &y_sq, h).into_iter().map(f64::sqrt).collect();

    Ok(Trajectory { grid, h, states, outputs, inputs, inputs_left, u_l2, y_l2, control_id: u.id.clone(), k_bound: u.k_bound })
}

/// Cumulative trapezoid rule; interval `[t_j, t_{j+1}]` uses `right[j]` and `left[j+1]`.
fn running_energy(right: &[f64], left: &[f64], h: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(right.len());
    out.push(0.0);
    for j in 0..right.len().saturating_sub(1) {
        acc += 0.5 * h * (right[j] + left[j + 1]);
        out.push(acc);
    }
    out
}

/// Trapezoid integral with step `stride·h`; a leftover odd interval uses step `h`.
fn trapezoid(right: &[f64], left: &[f64], h: f64, stride: usize) -> f64 {
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

/// An `L²` norm and its estimated quadrature error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub error: f64,
}

impl NormEstimate {
    /// From squared-norm samples at the grid points (with left limits).
    pub fn from_squares(right: &[f64], left: &[f64], h: f64) -> Self {
        let fine = trapezoid(right, left, h, 1).max(0.0).sqrt();
        let coarse = trapezoid(right, left, h, 2).max(0.0).sqrt();
        NormEstimate { value: fine, error: (fine - coarse).abs() / 3.0 }
    }
}

pub enum L2Of<'a> {
    Input,
    Output,
    OutputDifference(&'a Trajectory),
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    pub fn state(&self, j: usize) -> DVector<f64> {
        self.states.column(j).clone_owned()
    }

    /// Same grid, to round-off.
    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.grid.len() == other.grid.len() && (self.h - other.h).abs() <= 1e-12 * self.h
    }

    pub fn input_energy(&self) -> Vec<f64> {
        self.u_l2.iter().map(|v| v * v).collect()
    }

    pub fn max_input_norm(&self) -> f64 {
        self.inputs.column_iter().chain(self.inputs_left.column_iter()).map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Norm with its Richardson error estimate.
    pub fn l2_estimate(&self, of: L2Of<'_>) -> Result<NormEstimate> {
        match of {
            L2Of::Input => {
                let r: Vec<f64> = self.inputs.column_iter().map(|c| c.norm_squared()).collect();
                let l: Vec<f64> = self.inputs_left.column_iter().map(|c| c.norm_squared()).collect();
                Ok(NormEstimate::from_squares(&r, &l, self.h))
            }
            L2Of::Output => {
                let v: Vec<f64> = self.outputs.column_iter().map(|c| c.norm_squared()).collect();
                Ok(NormEstimate::from_squares(&v, &v, self.h))
            }
            L2Of::OutputDifference(other) => {
                if !self.same_grid(other) || self.outputs.nrows() != other.outputs.nrows() {
                    return Err(Error::GridMismatch);
                }
                let d = &self.outputs - &other.outputs;
                let v: Vec<f64> = d.column_iter().map(|c| c.norm_squared()).collect();
                Ok(NormEstimate::from_squares(&v, &v, self.h))
            }
        }
    }

    /// Composite trapezoid `L²_T` norm.
    pub fn l2_norm(&self, of: L2Of<'_>) -> Result<f64> {
        self.l2_estimate(of).map(|e| e.value)
    }

    /// CSV with columns `t, x…, u…, y…`.
    pub fn to_csv(&self) -> String {
        let (n, m, p) = (self.states.nrows(), self.inputs.nrows(), self.outputs.nrows());
        let mut out = String::from("t");
        for (prefix, count) in [("x", n), ("u", m), ("y", p)] {
            for i in 1..=count {
                let _ = write!(out, ",{prefix}{i}");
            }
        }
        out.push('\n');
        for (j, t) in self.grid.iter().enumerate() {
            let _ = write!(out, "{t}");
            for col in [self.states.column(j), self.inputs.column(j), self.outputs.column(j)] {
                for v in col.iter() {
                    let _ = write!(out, ",{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> TrajectorySummary {
        let j = self.steps();
        TrajectorySummary {
            control_id: self.control_id.clone(),
            t_final: self.t_final(),
            h: self.h,
            steps: j,
            u_l2: self.u_l2[j],
            y_l2: self.y_l2[j],
            max_u_norm: self.max_input_norm(),
            k_bound: self.k_bound,
            final_state: self.states.column(j).iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub control_id: String,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub h: f64,
    pub steps: usize,
    pub u_l2: f64,
    pub y_l2: f64,
    pub max_u_norm: f64,
    pub k_bound: f64,
    pub final_state: Vec<f64>,
}

/// `ε_q` for a comparison `lhs ≤ rhs`: the propagated quadrature error
/// estimate plus the floor `1e-12 + 1e-9·scale`, where `scale` is the size of
/// the quantities compared (or differenced to form them).
pub fn check_tolerance(propagated_error: f64, scale: f64) -> f64 {
    propagated_error + TOLERANCE_ABS_FLOOR + TOLERANCE_REL_FLOOR * scale.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar(a: f64, n1: f64, b: f64) -> BilinearSystem {
        BilinearSystem::new(dmatrix![a], dmatrix![b], vec![dmatrix![n1]], dmatrix![1.0]).unwrap()
    }

    #[test]
    fn zero_dynamics() {
        let sys = scalar(-1.0, 0.5, 1.0);
        let tr = simulate(&sys, &dvector![0.0], &ControlSignal::zero(1), 1.0, 1e-2).unwrap();
        assert!(tr.states.iter().all(|&v| v == 0.0));
        assert_eq!(tr.l2_norm(L2Of::Output).unwrap(), 0.0);
    }

    #[test]
    fn linear_scalar_closed_form() {
        let sys = scalar(-1.0, 0.0, 1.0);
        let tr = simulate(&sys, &dvector![0.0], &ControlSignal::constant(&[1.0]), 1.0, 1e-3).unwrap();
        assert_relative_eq!(tr.states[(0, tr.steps())], 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn bilinear_cancellation_is_exact() {
        let sys = scalar(-1.0, 1.0, 1.0);
        let tr = simulate(&sys, &dvector![0.0], &ControlSignal::constant(&[1.0]), 2.0, 1e-2).unwrap();
        for (j, t) in tr.grid.iter().enumerate() {
            assert_relative_eq!(tr.states[(0, j)], *t, epsilon = 1e-12);
        }
    }

    #[test]
    fn norms_of_simple_signals() {
        let sys = scalar(-1.0, 0.0, 1.0);
        let tr = simulate(&sys, &dvector![0.0], &ControlSignal::constant(&[1.0]), 1.0, 1e-3).unwrap();
        assert_relative_eq!(tr.l2_norm(L2Of::Input).unwrap(), 1.0, epsilon = 1e-12);
        let sine = ControlSignal::new(
            "sin",
            ControlKind::SinusoidBank {
                amplitudes: vec![vec![1.0]],
                frequencies: vec![std::f64::consts::TAU],
                phases: vec![0.0],
            },
        )
        .unwrap();
        let tr = simulate(&sys, &dvector![0.0], &sine, 1.0, 1e-3).unwrap();
        assert!((tr.l2_norm(L2Of::Input).unwrap() - 0.5f64.sqrt()).abs() <= 1e-6);
        assert_eq!(tr.l2_norm(L2Of::OutputDifference(&tr)).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let sys = scalar(-1.0, 0.0, 1.0);
        let u = ControlSignal::constant(&[1.0]);
        let a = simulate(&sys, &dvector![0.0], &u, 1.0, 1e-2).unwrap();
        let b = simulate(&sys, &dvector![0.0], &u, 1.0, 2e-2).unwrap();
        assert!(matches!(a.l2_norm(L2Of::OutputDifference(&b)), Err(Error::GridMismatch)));
    }

    #[test]
    fn switches_are_respected() {
        let u = ControlSignal::new(
            "pwc",
            ControlKind::PiecewiseConstantRandom { switch_times: vec![0.0, 0.5], values: vec![vec![1.0], vec![-2.0]] },
        )
        .unwrap();
        assert_eq!(u.k_bound, 2.0);
        assert_eq!(u.eval(0.5)[0], -2.0);
        assert_eq!(u.eval_left(0.5)[0], 1.0);
        assert_eq!(u.eval(0.0)[0], 1.0);
        let sys = scalar(0.0, 0.0, 1.0);
        let tr = simulate(&sys, &dvector![0.0], &u, 1.0, 1e-2).unwrap();
        // x(1) = 0.5·1 − 0.5·2
        assert_relative_eq!(tr.states[(0, tr.steps())], -0.5, epsilon = 1e-12);
        assert_relative_eq!(tr.l2_norm(L2Of::Input).unwrap(), (0.5f64 + 2.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sampled_control_interpolates() {
        let u = ControlSignal::new("s", ControlKind::UserSamples { times: vec![0.0, 1.0], values: vec![vec![0.0], vec![2.0]] })
            .unwrap();
        assert_eq!(u.eval(0.25)[0], 0.5);
        assert_eq!(u.eval(3.0)[0], 2.0);
        assert!(ControlSignal::new("bad", ControlKind::UserSamples { times: vec![1.0, 0.0], values: vec![vec![0.0], vec![1.0]] })
            .is_err());
    }

    #[test]
    fn suite_is_bounded_and_deterministic() {
        let a = bounded_control_suite(2, 1.5, 10.0, 3);
        let b = bounded_control_suite(2, 1.5, 10.0, 3);
        assert_eq!(a, b);
        for s in &a {
            assert!(s.k_bound <= 1.5 + 1e-12);
            for j in 0..=2000 {
                let t = j as f64 * 0.005;
                assert!(s.eval(t).norm() <= s.k_bound + 1e-12);
            }
        }
        for s in bounded_control_suite(1, 0.0, 10.0, 3) {
            assert!(s.eval(1.3).iter().all(|&v| v == 0.0));
        }
        let c = &bounded_control_suite(1, 1.0, 10.0, 9)[1];
        assert_relative_eq!(c.eval(0.0)[0].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = scalar(50.0, 0.0, 0.0);
        let err = simulate(&sys, &dvector![1.0], &ControlSignal::zero(1), 10.0, 1e-2).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }
}
