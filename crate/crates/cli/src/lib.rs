//! Pipeline commands behind the `bilbt` binary.
//!
//! Exit statuses: 0 success, 1 validation or feasibility error, 2 a certified
//! bound violated beyond the hard-failure threshold, 3 I/O or parse error.

use std::fmt;
use std::path::{Path, PathBuf};

use bilbt::balancing::{order_selector, square_root_balance, truncate, ReducedModel, ReductionReport};
use bilbt::campaign::{benchmark_campaign, CampaignConfig};
use bilbt::gramians::{gramians_of_kind, stochastic_type2_p2, GramianKind, GramianPair};
use bilbt::simulation::{bounded_control_suite, default_step, simulate, ControlKind, ControlSignal};
use bilbt::system::{stability_report, LoadError, StabilityReport, ValidationIssue};
use bilbt::verification::{
    check_error_bound, check_gronwall_p2, check_observ_energy, check_reach_energy, BoundCheckReport,
};
use bilbt::{BilinearSystem, Error, Options};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Validate,
    Gramians,
    Reduce,
    Simulate,
    Verify,
    Campaign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// System JSON (campaign: optional configuration JSON).
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub kind: GramianKind,
    pub k: f64,
    pub delta: Option<f64>,
    pub order: Option<usize>,
    pub tol: Option<f64>,
    pub t_final: f64,
    pub h: Option<f64>,
    pub seed: u64,
    /// Control JSON for `simulate`; otherwise a suite member is used.
    pub control: Option<PathBuf>,
    /// Suite member for `simulate` when no control file is given.
    pub control_id: String,
    pub hsv_floor: Option<f64>,
    pub quiet: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Validate,
            input: None,
            output: None,
            kind: GramianKind::Type2Bilinear,
            k: 1.0,
            delta: None,
            order: None,
            tol: None,
            t_final: 10.0,
            h: None,
            seed: 7,
            control: None,
            control_id: "sinusoid-0".into(),
            hsv_floor: None,
            quiet: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Validation,
    Feasibility,
    Violation,
    Io,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        CliError { class, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Validation | ErrorClass::Feasibility => 1,
            ErrorClass::Violation => 2,
            ErrorClass::Io => 3,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wire<'a> {
            error: &'a CliError,
            exit_code: i32,
        }
        serde_json::to_string(&Wire { error: self, exit_code: self.exit_code() }).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match e {
            Error::Validation(_)
            | Error::Dimension(_)
            | Error::InvalidArgument(_)
            | Error::OrderOutOfRange { .. }
            | Error::GridMismatch
            | Error::Precondition(_)
            | Error::SizeCap { .. } => ErrorClass::Validation,
            _ => ErrorClass::Feasibility,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Invalid(inner) => inner.into(),
            other => CliError::new(ErrorClass::Io, other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Files to write and text for stdout, produced before anything is written.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(PathBuf, String)>,
    pub stdout: Option<String>,
}

/// Non-error outcome: artifacts plus whether a certified check failed hard.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub violation: Option<String>,
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::new(ErrorClass::Validation, m));
        if self.order.is_some() && self.tol.is_some() {
            return bad("--order and --tol are mutually exclusive".into());
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return bad(format!("--tol must be positive, got {t}"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return bad(format!("--delta must be positive, got {d}"));
            }
        }
        if let Some(f) = self.hsv_floor {
            if !(f > 0.0) {
                return bad(format!("--hsv-floor must be positive, got {f}"));
            }
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return bad(format!("--k must be nonnegative, got {}", self.k));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad(format!("--T must be positive, got {}", self.t_final));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) || h > self.t_final {
                return bad(format!("--h must lie in (0, T], got {h}"));
            }
        }
        if self.command != Command::Campaign && self.input.is_none() {
            return bad("--input is required".into());
        }
        Ok(())
    }

    fn options(&self) -> Options {
        let mut opts = Options::from_env();
        if let Some(f) = self.hsv_floor {
            opts.hsv_floor = f;
        }
        opts
    }

    fn system(&self) -> CliResult<BilinearSystem> {
        let path = self.input.as_ref().expect("checked by validate");
        Ok(BilinearSystem::load_json(path)?)
    }

    /// Primary artifact to `--output`, or to stdout; `extra` files go next to
    /// the output and are dropped when writing to stdout.
    fn emit(&self, primary: String, extra: Vec<(&str, String)>) -> Artifacts {
        match &self.output {
            Some(out) => {
                let mut files = vec![(out.clone(), primary)];
                files.extend(extra.into_iter().map(|(suffix, text)| (sibling(out, suffix), text)));
                Artifacts { files, stdout: None }
            }
            None => Artifacts { files: Vec::new(), stdout: Some(primary) },
        }
    }
}

/// `dir/stem.suffix` for an output `dir/stem.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    n: usize,
    m: usize,
    p: usize,
    linear: bool,
    issues: Vec<String>,
    stability: Option<StabilityReport>,
}

fn validate_command(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let stability = stability_report(&sys, cfg.k, opts).ok();
    let report = ValidateReport {
        valid: true,
        n: sys.states(),
        m: sys.inputs(),
        p: sys.outputs(),
        linear: sys.is_linear(),
        issues: sys.issues().iter().map(ValidationIssue::to_string).collect(),
        stability,
    };
    Ok(Outcome { artifacts: cfg.emit(to_json(&report), Vec::new()), violation: None })
}

fn gramians(cfg: &RunConfig, sys: &BilinearSystem, opts: &Options) -> CliResult<GramianPair> {
    Ok(gramians_of_kind(sys, cfg.kind, cfg.k, cfg.delta, opts)?)
}

fn reduce_model(cfg: &RunConfig, sys: &BilinearSystem, opts: &Options) -> CliResult<ReducedModel> {
    let g = gramians(cfg, sys, opts)?;
    let bal = square_root_balance(sys, &g, opts)?;
    let r = match (cfg.order, cfg.tol) {
        (Some(r), _) => r,
        (None, Some(tol)) => order_selector(&bal.hsv, tol),
        (None, None) => return Err(CliError::new(ErrorClass::Validation, "one of --order or --tol is required")),
    };
    if r == bal.states() {
        return Ok(ReducedModel::untruncated(&bal));
    }
    Ok(truncate(&bal, r)?)
}

#[derive(Serialize)]
struct ReduceOutput<'a> {
    report: &'a ReductionReport,
    rom: serde_json::Value,
}

fn reduce_command(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let rom = reduce_model(cfg, &sys, opts)?;
    let report = rom.report();
    let rom_json = rom.system.to_json_string();
    let artifacts = match cfg.output {
        Some(_) => cfg.emit(rom_json + "\n", vec![("report.json", to_json(&report))]),
        None => {
            let rom_value = serde_json::from_str(&rom_json).expect("system JSON parses");
            cfg.emit(to_json(&ReduceOutput { report: &report, rom: rom_value }), Vec::new())
        }
    };
    Ok(Outcome { artifacts, violation: None })
}

#[derive(Deserialize)]
struct ControlFile {
    #[serde(default = "default_control_id")]
    id: String,
    #[serde(flatten)]
    kind: ControlKind,
}

fn default_control_id() -> String {
    "user".into()
}

fn control(cfg: &RunConfig, m: usize) -> CliResult<ControlSignal> {
    match &cfg.control {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new(ErrorClass::Io, format!("cannot read control file: {e}")))?;
            let file: ControlFile = serde_json::from_str(&text)
                .map_err(|e| CliError::new(ErrorClass::Io, format!("malformed control JSON: {e}")))?;
            let signal = ControlSignal::new(file.id, file.kind)?;
            if signal.inputs() != m {
                return Err(CliError::new(
                    ErrorClass::Validation,
                    format!("control has {} inputs, system has {m}", signal.inputs()),
                ));
            }
            Ok(signal)
        }
        None => bounded_control_suite(m, cfg.k, cfg.t_final, cfg.seed)
            .into_iter()
            .find(|u| u.id == cfg.control_id)
            .ok_or_else(|| CliError::new(ErrorClass::Validation, format!("no suite control named '{}'", cfg.control_id))),
    }
}

fn step(cfg: &RunConfig, sys: &BilinearSystem) -> f64 {
    cfg.h.unwrap_or_else(|| default_step(sys))
}

fn simulate_command(cfg: &RunConfig, _opts: &Options) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let u = control(cfg, sys.inputs())?;
    let traj = simulate(&sys, &DVector::zeros(sys.states()), &u, cfg.t_final, step(cfg, &sys))?;
    let summary = to_json(&traj.summary());
    let artifacts = match cfg.output {
        Some(_) => cfg.emit(traj.to_csv(), vec![("summary.json", summary)]),
        None => cfg.emit(summary, Vec::new()),
    };
    Ok(Outcome { artifacts, violation: None })
}

#[derive(Debug, Default, Serialize)]
pub struct CheckSummary {
    pub total: usize,
    pub passed: usize,
    pub within_tolerance: usize,
    pub violations: usize,
    pub hard_failures: usize,
    pub informational: usize,
}

impl CheckSummary {
    pub fn of(checks: &[BoundCheckReport]) -> Self {
        let mut s = CheckSummary { total: checks.len(), ..CheckSummary::default() };
        for c in checks {
            s.passed += usize::from(c.pass);
            s.within_tolerance += usize::from(c.within_tolerance);
            s.violations += usize::from(c.violated());
            s.hard_failures += usize::from(c.hard_failure);
            s.informational += usize::from(c.informational);
        }
        s
    }
}

#[derive(Serialize)]
struct VerifyReport {
    reduction: ReductionReport,
    summary: CheckSummary,
    checks: Vec<BoundCheckReport>,
    skipped: Vec<String>,
}

fn verify_command(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let g = gramians(cfg, &sys, opts)?;
    let rom = reduce_model(cfg, &sys, opts)?;
    let h = step(cfg, &sys);
    let id = cfg.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let suite_k = if g.kind.certified_bound() { g.k } else { cfg.k };
    let suite = bounded_control_suite(sys.inputs(), suite_k, cfg.t_final, cfg.seed);
    let controls: Vec<ControlSignal> =
        suite.iter().cloned().chain(suite.iter().map(|u| u.scaled(0.5, format!("{}@half", u.id)))).collect();

    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    let mut keep = |r: bilbt::Result<BoundCheckReport>, what: &str, checks: &mut Vec<BoundCheckReport>| match r {
        Ok(c) => checks.push(c.with_system_id(id.clone())),
        Err(e) => skipped.push(format!("{what}: {e}")),
    };
    for u in &controls {
        match check_error_bound(&sys, &rom, u, cfg.t_final, h) {
            Ok(eb) => checks.extend(eb.reports().map(|c| c.clone().with_system_id(id.clone()))),
            Err(e) => keep(Err(e), "error bound", &mut checks),
        }
        if g.kind == GramianKind::Type2Bilinear {
            keep(check_reach_energy(&sys, &g, u, cfg.t_final, h), "reach energy", &mut checks);
        }
    }
    if g.kind == GramianKind::Type2Bilinear {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x0 = DVector::from_fn(sys.states(), |_, _| rng.random_range(-1.0..1.0)).normalize();
        for u in &suite {
            keep(check_observ_energy(&sys.without_input_matrix(), &g.q, g.k, &x0, u, cfg.t_final, h), "observ energy", &mut checks);
        }
    }
    match stochastic_type2_p2(&sys, cfg.delta, opts) {
        Ok(p2) => {
            for u in &controls {
                keep(check_gronwall_p2(&sys, &p2.p, u, cfg.t_final, h), "gronwall", &mut checks);
            }
        }
        Err(e) => skipped.push(format!("gronwall: {e}")),
    }
    let summary = CheckSummary::of(&checks);
    let violation = (summary.hard_failures > 0).then(|| format!("{} certified checks failed beyond tolerance", summary.hard_failures));
    let report = VerifyReport { reduction: rom.report(), summary, checks, skipped };
    Ok(Outcome { artifacts: cfg.emit(to_json(&report), Vec::new()), violation })
}

fn campaign_config(cfg: &RunConfig) -> CliResult<CampaignConfig> {
    let mut config = match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new(ErrorClass::Io, format!("cannot read campaign config: {e}")))?;
            serde_json::from_str(&text).map_err(|e| CliError::new(ErrorClass::Io, format!("malformed campaign config: {e}")))?
        }
        None => CampaignConfig::default(),
    };
    config.seed = cfg.seed;
    Ok(config)
}

fn campaign_command(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let config = campaign_config(cfg)?;
    let report = benchmark_campaign(&config, opts)?;
    let s = &report.summary;
    let violation = (s.hard_failures > 0).then(|| format!("{} certified checks failed beyond tolerance", s.hard_failures));
    let mut json = report.to_json();
    json.push('\n');
    let artifacts = cfg.emit(json, vec![("errors.csv", report.error_table_csv()), ("comparison.csv", report.comparison_csv())]);
    Ok(Outcome { artifacts, violation })
}

/// Execute the command without touching the filesystem for output.
pub fn execute(cfg: &RunConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let opts = cfg.options();
    match cfg.command {
        Command::Validate => validate_command(cfg, &opts),
        Command::Gramians => {
            let sys = cfg.system()?;
            let g = gramians(cfg, &sys, &opts)?;
            Ok(Outcome { artifacts: cfg.emit(to_json(&g.report()), Vec::new()), violation: None })
        }
        Command::Reduce => reduce_command(cfg, &opts),
        Command::Simulate => simulate_command(cfg, &opts),
        Command::Verify => verify_command(cfg, &opts),
        Command::Campaign => campaign_command(cfg, &opts),
    }
}

/// Execute, write every artifact from this single writer, and return the exit status.
/// Errors go to stderr as a message line and a JSON object.
pub fn run(cfg: &RunConfig) -> i32 {
    let result = execute(cfg).and_then(|outcome| {
        for (path, text) in &outcome.artifacts.files {
            std::fs::write(path, text)
                .map_err(|e| CliError::new(ErrorClass::Io, format!("cannot write {}: {e}", path.display())))?;
            if !cfg.quiet {
                eprintln!("wrote {}", path.display());
            }
        }
        if let Some(text) = &outcome.artifacts.stdout {
            print!("{text}");
        }
        match outcome.violation {
            Some(msg) => Err(CliError::new(ErrorClass::Violation, msg)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
