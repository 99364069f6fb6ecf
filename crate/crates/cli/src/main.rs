use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vng_core::generate::ObjectiveKind;

mod commands;
mod exit;

#[derive(Parser)]
#[command(name = "vng", version, about = "Log-optimal paths and rapidity certificates for margin-trading markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the margin and boundedness assumptions; print ν_t and the market constants.
    Validate(ValidateArgs),
    /// Solve for the log-optimal path and write a solution file.
    Solve(SolveArgs),
    /// Extract the dual path from a solution and verify rapidity.
    Certify(CertifyArgs),
    /// Growth of competitor strategies in the dual prices, as CSV.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Liquidation,
    Linear,
    #[value(alias = "norm_l1")]
    NormL1,
    #[value(alias = "norm_l2")]
    NormL2,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(a: ObjectiveArg) -> Self {
        match a {
            ObjectiveArg::Liquidation => ObjectiveKind::Liquidation,
            ObjectiveArg::Linear => ObjectiveKind::Linear,
            ObjectiveArg::NormL1 => ObjectiveKind::NormL1,
            ObjectiveArg::NormL2 => ObjectiveKind::NormL2,
        }
    }
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Override the objective named in the file.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
}

#[derive(Args)]
struct SolverFlags {
    /// KKT residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverFlags,
    /// Solution file to write [default: <problem>.solution.json].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    problem: PathBuf,
    solution: PathBuf,
    /// Certificate tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for the sampled competitors [default: the solve seed].
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 200)]
    competitors: usize,
    /// Certificate file to write [default: <solution>.certificate.json].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverFlags,
    /// Use this solution instead of solving.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// `rapid`, `hold` or `random:K`; repeatable or comma separated.
    #[arg(long = "strategy", value_delimiter = ',')]
    strategies: Vec<String>,
    /// CSV file to write [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VNG_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Solve(a) => commands::solve(a),
        Command::Certify(a) => commands::certify(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit::code(&err))
        }
    }
}

/// The cause chain joined by `: `, skipping causes whose text the previous
/// message already contains.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}
