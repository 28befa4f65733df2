//! Seeded benchmark campaigns: generated systems, every check over a grid of
//! control bounds and orders, and deterministic aggregate tables.
//!
//! Cases run in parallel; the report only depends on the configuration.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balancing::{square_root_balance, truncate, BalancedRealization};
use crate::error::Result;
use crate::gramians::{stochastic_type2_p2, type1_gramians, type2_gramians, GramianKind, GramianPair};
use crate::linalg::spectral_abscissa;
use crate::options::Options;
use crate::simulation::{bounded_control_suite, simulate, ControlSignal, L2Of, Trajectory};
use crate::system::{kronecker_operator, stability_report, BilinearSystem};
use crate::verification::{
    check_error_bound_on, check_gronwall_p2_on, check_mixed_side_conditions, check_observ_energy, check_reach_energy_on,
    BoundCheckReport, CheckKind,
};

/// Orders whose first discarded singular value lies below this fraction of
/// `σ₁` are skipped: the truncated states are at round-off level and the
/// measured error would be dominated by the conditioning of the balancing
/// transformation rather than by the bound.
pub const RESOLVABLE_HSV: f64 = 1e-9;

/// Smallest `σ_n/σ_1` accepted for generated linear systems.
const LINEAR_MIN_HSV_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    /// Include the 2×2 worked example.
    pub worked_example: bool,
    pub random_systems: usize,
    pub min_states: usize,
    pub max_states: usize,
    pub max_inputs: usize,
    pub max_outputs: usize,
    /// Numerically minimal random systems with `N = 0`.
    pub linear_systems: usize,
    /// Block-diagonal duplicates with exactly repeated singular values.
    pub repeated_hsv_systems: usize,
    /// Control bounds as fractions of the estimated `k_max`.
    pub k_fractions: Vec<f64>,
    /// Reduced orders tried per system (spread over `1..n−1`).
    pub orders_per_case: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub h: f64,
    /// Type I reductions as uncertified baselines.
    pub type1_baseline: bool,
    /// Reachability, observability (`B = 0`) and Gronwall checks.
    pub energy_checks: bool,
    /// `(P₂, Q₁)` side conditions under a small-amplitude suite.
    pub mixed_checks: bool,
    pub small_control_amplitude: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 7,
            worked_example: true,
            random_systems: 100,
            min_states: 2,
            max_states: 20,
            max_inputs: 3,
            max_outputs: 3,
            linear_systems: 10,
            repeated_hsv_systems: 5,
            k_fractions: vec![0.25, 0.75],
            orders_per_case: 3,
            t_final: 10.0,
            h: 1e-3,
            type1_baseline: true,
            energy_checks: true,
            mixed_checks: true,
            small_control_amplitude: 1e-3,
        }
    }
}

impl CampaignConfig {
    /// No systems at all.
    pub fn empty() -> Self {
        CampaignConfig { worked_example: false, random_systems: 0, linear_systems: 0, repeated_hsv_systems: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error::InvalidArgument;
        if self.min_states < 2 || self.min_states > self.max_states {
            return Err(InvalidArgument(format!("state range {}..={} must satisfy 2 ≤ min ≤ max", self.min_states, self.max_states)));
        }
        if self.max_inputs == 0 || self.max_outputs == 0 {
            return Err(InvalidArgument("at least one input and one output are required".into()));
        }
        if self.k_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(InvalidArgument("k fractions must lie in (0, 1)".into()));
        }
        if !(self.t_final > 0.0) || !(self.h > 0.0) || !(self.h <= self.t_final) {
            return Err(InvalidArgument(format!("need 0 < h ≤ T, got h = {}, T = {}", self.h, self.t_final)));
        }
        if !(self.small_control_amplitude > 0.0) {
            return Err(InvalidArgument("small control amplitude must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Worked,
    Random,
    Linear,
    RepeatedHsv,
}

impl Family {
    fn stream(self) -> u64 {
        match self {
            Family::Worked => 0,
            Family::Random => 1,
            Family::Linear => 2,
            Family::RepeatedHsv => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemCase {
    pub id: String,
    pub family: Family,
    pub system: BilinearSystem,
    /// Seed for the controls and initial states of this case.
    pub seed: u64,
}

/// The worked 2×2 example.
pub fn worked_example() -> BilinearSystem {
    BilinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -3.0]),
        DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
        vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.1, 0.3])],
        DMatrix::from_row_slice(1, 2, &[1.0, 0.4]),
    )
    .expect("worked example is valid")
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random system with a mean-square stability margin. The drift is shifted
/// so that its abscissa lies in `[−2, −0.3]`; couplings are halved until the
/// Kronecker abscissa is at most `−0.1`. `linear` sets every `Nᵢ = 0`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, linear: bool) -> Result<BilinearSystem> {
    let scale = 1.0 / (n as f64).sqrt();
    let mut a = gaussian(rng, n, n, scale);
    let margin = rng.random_range(0.3..2.0);
    let alpha = spectral_abscissa(&a)?;
    a -= DMatrix::<f64>::identity(n, n) * (alpha + margin);
    let rho = rng.random_range(0.1..0.6);
    let mut couplings: Vec<DMatrix<f64>> =
        (0..m).map(|_| if linear { DMatrix::zeros(n, n) } else { gaussian(rng, n, n, rho * scale) }).collect();
    let b = gaussian(rng, n, m, 1.0);
    let c = gaussian(rng, p, n, 1.0);
    if !linear {
        while spectral_abscissa(&kronecker_operator(&a, &couplings))? > -0.1 {
            couplings.iter_mut().for_each(|nk| *nk *= 0.5);
        }
    }
    BilinearSystem::new(a, b, couplings, c)
}

/// Random linear system (`N = 0`) that is numerically minimal: redrawn until
/// `σ_n ≥ LINEAR_MIN_HSV_RATIO·σ₁`, dropping one state after every five
/// rejected draws.
fn minimal_linear_system(rng: &mut ChaCha8Rng, mut n: usize, m: usize, p: usize, opts: &Options) -> Result<BilinearSystem> {
    let mut rejected = 0;
    loop {
        let sys = random_system(rng, n, m, p, true)?;
        let resolved = type1_gramians(&sys, opts)
            .and_then(|g| square_root_balance(&sys, &g, opts))
            .is_ok_and(|bal| bal.hsv[n - 1] >= LINEAR_MIN_HSV_RATIO * bal.hsv[0]);
        if resolved || n == 2 {
            return Ok(sys);
        }
        rejected += 1;
        if rejected % 5 == 0 {
            n -= 1;
        }
    }
}

/// `diag(S, S)` with separate inputs and outputs per copy; every singular value
/// of the base system appears twice.
pub fn duplicate_blocks(base: &BilinearSystem) -> BilinearSystem {
    let (n, m, p) = (base.states(), base.inputs(), base.outputs());
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&base.a);
    a.view_mut((n, n), (n, n)).copy_from(&base.a);
    let mut b = DMatrix::zeros(2 * n, 2 * m);
    b.view_mut((0, 0), (n, m)).copy_from(&base.b);
    b.view_mut((n, m), (n, m)).copy_from(&base.b);
    let mut c = DMatrix::zeros(2 * p, 2 * n);
    c.view_mut((0, 0), (p, n)).copy_from(&base.c);
    c.view_mut((p, n), (p, n)).copy_from(&base.c);
    let mut couplings = Vec::with_capacity(2 * m);
    for copy in 0..2 {
        for nk in &base.couplings {
            let mut big = DMatrix::zeros(2 * n, 2 * n);
            big.view_mut((copy * n, copy * n), (n, n)).copy_from(nk);
            couplings.push(big);
        }
    }
    BilinearSystem::new(a, b, couplings, c).expect("duplicated system is valid")
}

fn family_rng(seed: u64, family: Family, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((family.stream() << 32) | index as u64);
    rng
}

/// All systems of the campaign, in report order.
pub fn generate_cases(config: &CampaignConfig, opts: &Options) -> Result<Vec<SystemCase>> {
    config.validate()?;
    let mut cases = Vec::new();
    if config.worked_example {
        let mut rng = family_rng(config.seed, Family::Worked, 0);
        cases.push(SystemCase { id: "worked-2x2".into(), family: Family::Worked, system: worked_example(), seed: rng.random() });
    }
    let sized = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| {
        (rng.random_range(lo..=hi), rng.random_range(1..=config.max_inputs), rng.random_range(1..=config.max_outputs))
    };
    for i in 0..config.random_systems {
        let mut rng = family_rng(config.seed, Family::Random, i);
        let (n, m, p) = sized(&mut rng, config.min_states, config.max_states);
        let system = random_system(&mut rng, n, m, p, false)?;
        cases.push(SystemCase { id: format!("random-{i:03}"), family: Family::Random, system, seed: rng.random() });
    }
    for i in 0..config.linear_systems {
        let mut rng = family_rng(config.seed, Family::Linear, i);
        let (n, m, p) = sized(&mut rng, config.min_states, config.max_states);
        let system = minimal_linear_system(&mut rng, n, m, p, opts)?;
        cases.push(SystemCase { id: format!("linear-{i:03}"), family: Family::Linear, system, seed: rng.random() });
    }
    let half_max = (config.max_states / 2).max(1);
    let half_min = config.min_states.div_ceil(2).clamp(1, half_max);
    for i in 0..config.repeated_hsv_systems {
        let mut rng = family_rng(config.seed, Family::RepeatedHsv, i);
        let n = rng.random_range(half_min.max(2).min(half_max)..=half_max);
        let base = random_system(&mut rng, n, 1, 1, false)?;
        cases.push(SystemCase {
            id: format!("repeated-{i:03}"),
            family: Family::RepeatedHsv,
            system: duplicate_blocks(&base),
            seed: rng.random(),
        });
    }
    Ok(cases)
}

/// Up to `count` orders spread over the admissible ones. Repeated-value
/// systems only truncate between pairs.
fn choose_orders(n: usize, family: Family, count: usize) -> Vec<usize> {
    let candidates: Vec<usize> = match family {
        Family::RepeatedHsv => (1..n).filter(|r| r % 2 == 0).collect(),
        _ => (1..n).collect(),
    };
    if candidates.len() <= count {
        return candidates;
    }
    let mut picked: Vec<usize> = (0..count).map(|i| candidates[i * (candidates.len() - 1) / (count - 1).max(1)]).collect();
    picked.dedup();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseFailure {
    pub stage: String,
    pub k: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmiRecord {
    pub kind: GramianKind,
    pub k: f64,
    pub max_eigenvalue: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsvRecord {
    pub kind: GramianKind,
    pub k: f64,
    pub values: Vec<f64>,
    /// Relative distance of the transformed Gramians from `diag(hsv)`.
    pub balancing_residual: f64,
}

/// One row of the plotting table: measured error against the bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub case_id: String,
    pub kind: GramianKind,
    pub k: f64,
    pub r: usize,
    pub control_id: String,
    pub tail_sum: f64,
    pub error: f64,
    pub input_l2: f64,
    /// `2·Σ tail·‖u‖`; absent for kinds without a certified bound.
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub id: String,
    pub family: Family,
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub ms_abscissa: Option<f64>,
    pub k_max: Option<f64>,
    pub k_grid: Vec<f64>,
    pub orders: Vec<usize>,
    pub hsv: Vec<HsvRecord>,
    pub lmi: Vec<LmiRecord>,
    pub checks: Vec<BoundCheckReport>,
    pub error_table: Vec<ErrorRow>,
    /// Orders not evaluated because the tail is below [`RESOLVABLE_HSV`].
    pub unresolved_orders: Vec<UnresolvedOrder>,
    pub failures: Vec<CaseFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnresolvedOrder {
    pub kind: GramianKind,
    pub k: f64,
    pub r: usize,
}

impl CaseReport {
    fn fail(&mut self, stage: &str, k: Option<f64>, err: impl std::fmt::Display) {
        self.failures.push(CaseFailure { stage: stage.into(), k, message: err.to_string() });
    }
}

struct CaseRunner<'a> {
    case: &'a SystemCase,
    config: &'a CampaignConfig,
    opts: &'a Options,
    report: CaseReport,
}

impl CaseRunner<'_> {
    fn push(&mut self, check: BoundCheckReport) {
        self.report.checks.push(check.with_system_id(self.case.id.clone()));
    }

    fn balance(&mut self, g: &GramianPair) -> Option<BalancedRealization> {
        let stage = g.kind.label();
        match square_root_balance(&self.case.system, g, self.opts) {
            Ok(bal) => {
                let (rp, rq) = bal.balancing_residuals(g);
                self.report.hsv.push(HsvRecord { kind: g.kind, k: g.k, values: bal.hsv.clone(), balancing_residual: rp.max(rq) });
                Some(bal)
            }
            Err(e) => {
                self.report.fail(&format!("{stage}-balance"), Some(g.k), e);
                None
            }
        }
    }

    fn record_lmi(&mut self, g: &GramianPair) {
        if let Some(lmi) = &g.lmi {
            self.report.lmi.push(LmiRecord { kind: g.kind, k: g.k, max_eigenvalue: lmi.max_eigenvalue, feasible: lmi.feasible });
        }
    }

    /// Error-bound checks of every order against cached full trajectories.
    fn resolvable(&mut self, bal: &BalancedRealization, k: f64, r: usize) -> bool {
        let ok = bal.hsv[r] >= RESOLVABLE_HSV * bal.hsv[0];
        if !ok {
            self.report.unresolved_orders.push(UnresolvedOrder { kind: bal.gramian_kind, k, r });
        }
        ok
    }

    fn error_bounds(&mut self, bal: &BalancedRealization, k: f64, trajectories: &[(ControlSignal, Trajectory)]) {
        for &r in &self.report.orders.clone() {
            if !self.resolvable(bal, k, r) {
                continue;
            }
            let rom = match truncate(bal, r) {
                Ok(rom) => rom,
                Err(e) => {
                    self.report.fail(&format!("{}-truncate", bal.gramian_kind.label()), Some(k), e);
                    continue;
                }
            };
            for (u, traj) in trajectories {
                match check_error_bound_on(traj, &rom, u) {
                    Ok(checks) => {
                        let u_l2 = traj.l2_norm(L2Of::Input).unwrap_or(0.0);
                        let cor = &checks.corollary;
                        self.report.error_table.push(ErrorRow {
                            case_id: self.case.id.clone(),
                            kind: bal.gramian_kind,
                            k,
                            r,
                            control_id: u.id.clone(),
                            tail_sum: rom.bound_all / 2.0,
                            error: cor.lhs,
                            input_l2: u_l2,
                            bound: (!cor.informational).then_some(cor.rhs),
                            ratio: if cor.informational { None } else { cor.ratio },
                        });
                        for c in checks.reports() {
                            self.push(c.clone());
                        }
                    }
                    Err(e) => self.report.fail(&format!("{}-error-bound", bal.gramian_kind.label()), Some(k), e),
                }
            }
        }
    }

    fn run(mut self) -> CaseReport {
        let sys = &self.case.system;
        let (cfg, opts) = (self.config, self.opts);
        let stability = match stability_report(sys, 0.0, opts) {
            Ok(s) if s.mean_square_stable() => s,
            Ok(s) => {
                self.report.ms_abscissa = Some(s.ms_abscissa);
                self.report.fail("stability", None, "not mean-square stable");
                return self.report;
            }
            Err(e) => {
                self.report.fail("stability", None, e);
                return self.report;
            }
        };
        self.report.ms_abscissa = Some(stability.ms_abscissa);
        self.report.k_max = Some(stability.k_max_estimate);
        self.report.k_grid = cfg.k_fractions.iter().map(|f| f * stability.k_max_estimate).collect();
        self.report.orders = choose_orders(sys.states(), self.case.family, cfg.orders_per_case);

        let mut rng = ChaCha8Rng::seed_from_u64(self.case.seed);
        let type1 = if cfg.type1_baseline || cfg.mixed_checks {
            match type1_gramians(sys, opts) {
                Ok(g) => Some(g),
                Err(e) => {
                    self.report.fail("type1", None, e);
                    None
                }
            }
        } else {
            None
        };
        let type1_bal = match (&type1, cfg.type1_baseline) {
            (Some(g), true) => self.balance(g),
            _ => None,
        };

        let mut gronwall_trajectories = Vec::new();
        for &k in &self.report.k_grid.clone() {
            let suite = bounded_control_suite(sys.inputs(), k, cfg.t_final, rng.random());
            let half: Vec<ControlSignal> = suite.iter().map(|u| u.scaled(0.5, format!("{}@half", u.id))).collect();
            let mut trajectories = Vec::new();
            for u in suite.iter().chain(&half) {
                match simulate(sys, &DVector::zeros(sys.states()), u, cfg.t_final, cfg.h) {
                    Ok(traj) => trajectories.push((u.clone(), traj)),
                    Err(e) => self.report.fail("simulate", Some(k), e),
                }
            }

            match type2_gramians(sys, k, None, opts) {
                Ok(g2) => {
                    self.record_lmi(&g2);
                    if let Some(bal) = self.balance(&g2) {
                        self.error_bounds(&bal, k, &trajectories);
                    }
                    if cfg.energy_checks {
                        for (u, traj) in &trajectories {
                            match check_reach_energy_on(traj, &g2, u) {
                                Ok(c) => self.push(c),
                                Err(e) => self.report.fail("reach-energy", Some(k), e),
                            }
                        }
                        let free = sys.without_input_matrix();
                        let x0 = random_unit(&mut rng, sys.states());
                        for u in &suite {
                            match check_observ_energy(&free, &g2.q, k, &x0, u, cfg.t_final, cfg.h) {
                                Ok(c) => self.push(c),
                                Err(e) => self.report.fail("observ-energy", Some(k), e),
                            }
                        }
                    }
                }
                Err(e) => self.report.fail("type2", Some(k), e),
            }

            if let Some(bal1) = &type1_bal {
                let at_k: Vec<_> = trajectories.iter().filter(|(u, _)| !u.id.ends_with("@half")).cloned().collect();
                self.error_bounds(bal1, k, &at_k);
            }
            if gronwall_trajectories.is_empty() {
                gronwall_trajectories = trajectories;
            }
        }

        if cfg.energy_checks || cfg.mixed_checks {
            match stochastic_type2_p2(sys, None, opts) {
                Ok(p2) => {
                    if let Some(lmi) = &p2.lmi {
                        self.report.lmi.push(LmiRecord {
                            kind: GramianKind::Type2Stochastic,
                            k: 0.0,
                            max_eigenvalue: lmi.max_eigenvalue,
                            feasible: lmi.feasible,
                        });
                    }
                    if cfg.energy_checks {
                        for (u, traj) in &gronwall_trajectories {
                            match check_gronwall_p2_on(traj, &p2.p, u) {
                                Ok(c) => self.push(c),
                                Err(e) => self.report.fail("gronwall", None, e),
                            }
                        }
                    }
                    if let (true, Some(g1)) = (cfg.mixed_checks, &type1) {
                        let mixed = GramianPair {
                            p: p2.p.clone(),
                            q: g1.q.clone(),
                            kind: GramianKind::MixedQ1P2,
                            k: 0.0,
                            delta: Some(p2.delta),
                            p_diagnostics: p2.diagnostics.clone(),
                            q_diagnostics: g1.q_diagnostics.clone(),
                            lmi: p2.lmi.clone(),
                            not_minimal: p2.degenerate || g1.not_minimal,
                        };
                        self.mixed(&mixed, &mut rng);
                    }
                }
                Err(e) => self.report.fail("p2", None, e),
            }
        }
        self.report
    }

    fn mixed(&mut self, g: &GramianPair, rng: &mut ChaCha8Rng) {
        let Some(bal) = self.balance(g) else { return };
        let Some(&r) = self.report.orders.first() else { return };
        if !self.resolvable(&bal, 0.0, r) {
            return;
        }
        let rom = match truncate(&bal, r) {
            Ok(rom) => rom,
            Err(e) => return self.report.fail("mixed-truncate", None, e),
        };
        let suite = bounded_control_suite(self.case.system.inputs(), self.config.small_control_amplitude, self.config.t_final, rng.random());
        for u in &suite {
            match check_mixed_side_conditions(&bal, &rom, u, self.config.t_final, self.config.h) {
                Ok(m) => {
                    self.push(m.positive1);
                    self.push(m.positive2);
                    for c in m.error_bound.reports() {
                        self.push(c.clone());
                    }
                }
                Err(e) => self.report.fail("mixed", None, e),
            }
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// Run every check for one system.
pub fn run_case(case: &SystemCase, config: &CampaignConfig, opts: &Options) -> CaseReport {
    let report = CaseReport {
        id: case.id.clone(),
        family: case.family,
        states: case.system.states(),
        inputs: case.system.inputs(),
        outputs: case.system.outputs(),
        ms_abscissa: None,
        k_max: None,
        k_grid: Vec::new(),
        orders: Vec::new(),
        hsv: Vec::new(),
        lmi: Vec::new(),
        checks: Vec::new(),
        error_table: Vec::new(),
        unresolved_orders: Vec::new(),
        failures: Vec::new(),
    };
    CaseRunner { case, config, opts, report }.run()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckTally {
    pub total: usize,
    pub passed: usize,
    pub within_tolerance: usize,
    /// Failed certified checks.
    pub violations: usize,
    pub hard_failures: usize,
    pub informational: usize,
    pub worst_slack: Option<f64>,
    pub max_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
    #[serde(skip)]
    ratio_sum: f64,
    #[serde(skip)]
    ratio_count: usize,
}

impl CheckTally {
    fn add(&mut self, c: &BoundCheckReport) {
        self.total += 1;
        self.passed += usize::from(c.pass);
        self.within_tolerance += usize::from(c.within_tolerance);
        self.violations += usize::from(c.violated());
        self.hard_failures += usize::from(c.hard_failure);
        self.informational += usize::from(c.informational);
        self.worst_slack = Some(self.worst_slack.map_or(c.slack, |w| w.min(c.slack)));
        if let Some(r) = c.ratio {
            self.max_ratio = Some(self.max_ratio.map_or(r, |w| w.max(r)));
            self.ratio_sum += r;
            self.ratio_count += 1;
            self.mean_ratio = Some(self.ratio_sum / self.ratio_count as f64);
        }
    }
}

/// Type I against type II error on the same system, order and control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub case_id: String,
    pub k: f64,
    pub r: usize,
    pub control_id: String,
    pub type1_error: f64,
    pub type2_error: f64,
    pub type1_tail_sum: f64,
    pub type2_tail_sum: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub rows: usize,
    pub type1_smaller: usize,
    pub type2_smaller: usize,
    pub ties: usize,
    pub mean_type1_error: Option<f64>,
    pub mean_type2_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub systems: usize,
    /// Systems with at least one certified error-bound check.
    pub certified_systems: usize,
    pub failed_stages: usize,
    /// Keyed by `check/kind`.
    pub checks: BTreeMap<String, CheckTally>,
    pub theorem_violations: usize,
    pub energy_violations: usize,
    pub hard_failures: usize,
    pub lmi_checked: usize,
    pub lmi_failures: usize,
    pub lmi_worst: Option<f64>,
    pub comparison: ComparisonSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub summary: CampaignSummary,
    pub comparison: Vec<ComparisonRow>,
    pub cases: Vec<CaseReport>,
}

fn check_label(c: CheckKind) -> &'static str {
    match c {
        CheckKind::ErrorBoundThm => "error_bound_thm",
        CheckKind::ErrorBoundCor => "error_bound_cor",
        CheckKind::ReachEnergy => "reach_energy",
        CheckKind::ObservEnergy => "observ_energy",
        CheckKind::GronwallP2 => "gronwall_p2",
        CheckKind::MixedSideConditions => "mixed_side_conditions",
    }
}

fn comparison_rows(case: &CaseReport) -> Vec<ComparisonRow> {
    let type2: BTreeMap<(usize, &str, u64), &ErrorRow> = case
        .error_table
        .iter()
        .filter(|row| row.kind == GramianKind::Type2Bilinear)
        .map(|row| ((row.r, row.control_id.as_str(), row.k.to_bits()), row))
        .collect();
    case.error_table
        .iter()
        .filter(|row| row.kind == GramianKind::Type1)
        .filter_map(|t1| {
            type2.get(&(t1.r, t1.control_id.as_str(), t1.k.to_bits())).map(|t2| ComparisonRow {
                case_id: case.id.clone(),
                k: t1.k,
                r: t1.r,
                control_id: t1.control_id.clone(),
                type1_error: t1.error,
                type2_error: t2.error,
                type1_tail_sum: t1.tail_sum,
                type2_tail_sum: t2.tail_sum,
            })
        })
        .collect()
}

/// Single-threaded reduce over the finished case reports.
pub fn summarize(cases: &[CaseReport], comparison: &[ComparisonRow]) -> CampaignSummary {
    let mut s = CampaignSummary { systems: cases.len(), ..CampaignSummary::default() };
    for case in cases {
        s.failed_stages += case.failures.len();
        let mut certified = false;
        for c in &case.checks {
            let kind = c.context.gramian_kind.map_or("none", GramianKind::label);
            s.checks.entry(format!("{}/{}", check_label(c.check), kind)).or_default().add(c);
            let bound_check = matches!(c.check, CheckKind::ErrorBoundThm | CheckKind::ErrorBoundCor);
            certified |= bound_check && !c.informational;
            if c.violated() {
                if bound_check {
                    s.theorem_violations += 1;
                } else {
                    s.energy_violations += 1;
                }
            }
            s.hard_failures += usize::from(c.hard_failure);
        }
        s.certified_systems += usize::from(certified);
        for l in &case.lmi {
            s.lmi_checked += 1;
            s.lmi_failures += usize::from(!l.feasible);
            s.lmi_worst = Some(s.lmi_worst.map_or(l.max_eigenvalue, |w| w.max(l.max_eigenvalue)));
        }
    }
    let cmp = &mut s.comparison;
    cmp.rows = comparison.len();
    for row in comparison {
        match row.type1_error.total_cmp(&row.type2_error) {
            std::cmp::Ordering::Less => cmp.type1_smaller += 1,
            std::cmp::Ordering::Greater => cmp.type2_smaller += 1,
            std::cmp::Ordering::Equal => cmp.ties += 1,
        }
    }
    if !comparison.is_empty() {
        let count = comparison.len() as f64;
        cmp.mean_type1_error = Some(comparison.iter().map(|r| r.type1_error).sum::<f64>() / count);
        cmp.mean_type2_error = Some(comparison.iter().map(|r| r.type2_error).sum::<f64>() / count);
    }
    s
}

/// Run the whole campaign. Failures of individual stages are recorded in
/// the case reports; only an invalid configuration is an error.
pub fn benchmark_campaign(config: &CampaignConfig, opts: &Options) -> Result<CampaignReport> {
    let systems = generate_cases(config, opts)?;
    let cases: Vec<CaseReport> = systems.par_iter().map(|case| run_case(case, config, opts)).collect();
    let comparison: Vec<ComparisonRow> = cases.iter().flat_map(comparison_rows).collect();
    Ok(CampaignReport { config: config.clone(), summary: summarize(&cases, &comparison), comparison, cases })
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("campaign report serializes")
    }

    /// Plotting table: one row per error-bound evaluation.
    pub fn error_table_csv(&self) -> String {
        let mut out = String::from("case_id,kind,k,r,control_id,tail_sum,error,bound,ratio\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for case in &self.cases {
            for row in &case.error_table {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    row.case_id,
                    row.kind.label(),
                    row.k,
                    row.r,
                    row.control_id,
                    row.tail_sum,
                    row.error,
                    opt(row.bound),
                    opt(row.ratio)
                ));
            }
        }
        out
    }

    /// Type I against type II error, one row per shared evaluation.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("case_id,k,r,control_id,type1_error,type2_error,type1_tail_sum,type2_tail_sum\n");
        for row in &self.comparison {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.case_id, row.k, row.r, row.control_id, row.type1_error, row.type2_error, row.type1_tail_sum, row.type2_tail_sum
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_empty_report() {
        let report = benchmark_campaign(&CampaignConfig::empty(), &Options::default()).unwrap();
        assert!(report.cases.is_empty() && report.comparison.is_empty());
        assert_eq!(report.summary, CampaignSummary::default());
    }

    #[test]
    fn order_choice() {
        assert_eq!(choose_orders(2, Family::Random, 3), vec![1]);
        assert_eq!(choose_orders(10, Family::Random, 3), vec![1, 5, 9]);
        assert_eq!(choose_orders(8, Family::RepeatedHsv, 3), vec![2, 4, 6]);
        assert_eq!(choose_orders(12, Family::RepeatedHsv, 3), vec![2, 6, 10]);
    }

    #[test]
    fn duplicated_blocks_repeat_every_singular_value() {
        let dup = duplicate_blocks(&worked_example());
        let g = type1_gramians(&dup, &Options::default()).unwrap();
        let hsv = square_root_balance(&dup, &g, &Options::default()).unwrap().hsv;
        for pair in hsv.chunks(2) {
            assert!((pair[0] - pair[1]).abs() <= 1e-12 * pair[0]);
        }
    }

    #[test]
    fn generated_systems_are_mean_square_stable() {
        let config = CampaignConfig { random_systems: 5, linear_systems: 2, repeated_hsv_systems: 2, max_states: 6, ..CampaignConfig::default() };
        let cases = generate_cases(&config, &Options::default()).unwrap();
        assert_eq!(cases.len(), 10);
        for case in &cases {
            let abscissa = spectral_abscissa(&kronecker_operator(&case.system.a, &case.system.couplings)).unwrap();
            assert!(abscissa < 0.0, "{}", case.id);
        }
        let again = generate_cases(&config, &Options::default()).unwrap();
        assert!(cases.iter().zip(&again).all(|(a, b)| a.system == b.system && a.seed == b.seed));
    }
}
