/// Numerical knobs shared across the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    /// Largest state dimension for which the dense n²×n² Kronecker path
    /// (spectrum checks, direct Lyapunov solves) is used.
    pub max_kron_n: usize,
    /// Condition-number cap for user-supplied state transformations.
    pub transform_cond_cap: f64,
    /// Condition-number cap when inverting a reachability Gramian.
    pub gramian_cond_cap: f64,
    /// Smallest admissible `σ_n / σ_1` when balancing.
    pub hsv_floor: f64,
}

pub const MAX_KRON_N_ENV: &str = "BILBT_MAX_KRON_N";

impl Default for Options {
    fn default() -> Self {
        Options { max_kron_n: 60, transform_cond_cap: 1e8, gramian_cond_cap: 1e12, hsv_floor: 1e-13 }
    }
}

impl Options {
    /// Defaults, with the Kronecker size cap taken from `BILBT_MAX_KRON_N` when set.
    pub fn from_env() -> Self {
        let mut opts = Options::default();
        if let Some(cap) = std::env::var(MAX_KRON_N_ENV).ok().and_then(|v| v.trim().parse().ok()) {
            opts.max_kron_n = cap;
        }
        opts
    }
}
