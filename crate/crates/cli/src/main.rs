use std::path::PathBuf;

use bilbt::gramians::GramianKind;
use bilbt_cli::{run, Command, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Balanced truncation for bilinear control systems
#[derive(Parser, Debug)]
#[command(name = "bilbt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Check a system file and report its stability spectra
    Validate,
    /// Compute a Gramian pair with eigenvalues and solver diagnostics
    Gramians,
    /// Balance and truncate; writes the reduced model and a report
    Reduce,
    /// Simulate from x(0) = 0; writes a CSV trajectory and a JSON summary
    Simulate,
    /// Reduce, then check the error and energy bounds on the control suite
    Verify,
    /// Run the seeded benchmark campaign (--input is an optional config JSON)
    Campaign,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Kind {
    Type1,
    Type2,
    P2,
    Mixed,
}

#[derive(Args, Debug)]
struct Common {
    /// System JSON (campaign: configuration JSON)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file; extra artifacts are written next to it
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "type2")]
    kind: Kind,
    /// Pointwise control bound ‖u(t)‖₂ ≤ k
    #[arg(long, global = true, default_value_t = 1.0)]
    k: f64,
    /// Strict feasibility margin of the Riccati inequality
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true, conflicts_with = "tol")]
    order: Option<usize>,
    /// Smallest order whose bound 2·Σ tail is at most this
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long = "T", global = true, default_value_t = 10.0)]
    t_final: f64,
    /// Step size (default min(1e-3, 0.01/‖A‖₂))
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Control JSON for simulate
    #[arg(long, global = true)]
    control: Option<PathBuf>,
    /// Suite control for simulate when no control file is given
    #[arg(long, global = true, default_value = "sinusoid-0")]
    control_id: String,
    /// Smallest admissible σ_n/σ_1 when balancing
    #[arg(long, global = true)]
    hsv_floor: Option<f64>,
    #[arg(long, global = true)]
    quiet: bool,
}

fn main() {
    // usage errors share the validation exit code; 2 is reserved for violations
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let code = if e.use_stderr() { 1 } else { 0 };
        let _ = e.print();
        std::process::exit(code);
    });
    let c = cli.common;
    let config = RunConfig {
        command: match cli.command {
            Sub::Validate => Command::Validate,
            Sub::Gramians => Command::Gramians,
            Sub::Reduce => Command::Reduce,
            Sub::Simulate => Command::Simulate,
            Sub::Verify => Command::Verify,
            Sub::Campaign => Command::Campaign,
        },
        input: c.input,
        output: c.output,
        kind: match c.kind {
            Kind::Type1 => GramianKind::Type1,
            Kind::Type2 => GramianKind::Type2Bilinear,
            Kind::P2 => GramianKind::Type2Stochastic,
            Kind::Mixed => GramianKind::MixedQ1P2,
        },
        k: c.k,
        delta: c.delta,
        order: c.order,
        tol: c.tol,
        t_final: c.t_final,
        h: c.h,
        seed: c.seed,
        control: c.control,
        control_id: c.control_id,
        hsv_floor: c.hsv_floor,
        quiet: c.quiet,
    };
    std::process::exit(run(&config));
}
