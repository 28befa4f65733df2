use thiserror::Error;

use crate::system::ValidationIssue;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigen-solver failure on {0}")]
    EigenFailure(String),

    #[error("dense Kronecker path needs n ≤ {cap}, got n = {n}")]
    SizeCap { n: usize, cap: usize },

    #[error("not mean-square stable (abscissa {abscissa:e})")]
    Unstable { abscissa: f64 },

    #[error("fixed-point iteration diverged: {0}")]
    Diverged(String),

    #[error("{solver} did not converge within {iterations} iterations (last change {last_change:e})")]
    IterationCap { solver: &'static str, iterations: usize, last_change: f64 },

    #[error("control bound k = {k} is infeasible for the type II reachability inequality (estimated k_max = {k_max:?})")]
    Infeasible { k: f64, k_max: Option<f64> },

    #[error("Newton iteration stagnated: {0}")]
    Stagnation(String),

    #[error("singular or ill-conditioned matrix: {0}")]
    Singular(String),

    #[error("observability Gramian is not positive definite (smallest eigenvalue {min_eig:e}); cannot balance")]
    NotObservable { min_eig: f64 },

    #[error("smallest Hankel singular value {sigma_min:e} below floor {floor:e}")]
    HsvFloor { sigma_min: f64, floor: f64 },

    #[error("order r = {r} out of range 1..{n}")]
    OrderOutOfRange { r: usize, n: usize },

    #[error("simulation blew up at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("trajectory grids do not match")]
    GridMismatch,

    #[error("precondition violated: {0}")]
    Precondition(String),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}
