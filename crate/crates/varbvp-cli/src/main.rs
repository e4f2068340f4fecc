//! `varbvp`: boundary value solves, generating functions, and ODE-free
//! integration for Lagrangian systems, from the command line.
//!
//! Exit codes: 0 success, 2 convergence failure, 3 invalid configuration,
//! 4 non-regular Lagrangian. `VARBVP_LOG` (quiet | info | debug) controls
//! diagnostics on standard error; all data output is CSV with 17 significant
//! digits so that doubles round-trip losslessly and reruns are byte-identical.

mod commands;
mod problem;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use varbvp::Error;

#[derive(Parser)]
#[command(
    name = "varbvp",
    version,
    about = "Variational solver for local boundary value problems of Lagrangian mechanics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a two-point boundary value problem and emit the trajectory as CSV.
    Solve(SolveArgs),
    /// Evaluate the type-1 generating function and its boundary derivatives.
    Genfun(GenfunArgs),
    /// Integrate an initial value problem by composed boundary value solves.
    Integrate(IntegrateArgs),
    /// Solve the boundary value problem with the shooting oracle (RK4 + Newton).
    Shoot(ShootArgs),
    /// Compare finite-difference directional derivatives of the action
    /// against the assembled gradient.
    CheckGradient(CheckGradientArgs),
    /// Tabulate trajectory error against the shooting oracle over a list of
    /// grid resolutions.
    Convergence(ConvergenceArgs),
}

#[derive(Args, Clone, Default)]
pub struct ModelArgs {
    /// Problem description file (TOML); command-line flags override it.
    #[arg(long, value_name = "FILE")]
    problem: Option<PathBuf>,
    /// Model name (built-ins plus the degenerate `quartic` test model).
    #[arg(long)]
    model: Option<String>,
    /// Dimension, for model families with a free dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Frequency of the harmonic model (shorthand for --param omega=...).
    #[arg(long)]
    omega: Option<f64>,
    /// Additional model parameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args, Clone, Default)]
pub struct SolverArgs {
    /// Grid subintervals.
    #[arg(long = "n", value_name = "N")]
    n_sub: Option<usize>,
    /// Residual infinity-norm target.
    #[arg(long)]
    tol: Option<f64>,
    /// Newton iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Continuation increments from h = 0.
    #[arg(long)]
    continuation_steps: Option<usize>,
    /// Adaptive halving depth of the continuation.
    #[arg(long)]
    max_bisections: Option<usize>,
    /// Backtracking shrink factor.
    #[arg(long)]
    damping_factor: Option<f64>,
    /// Backtracking cap per Newton step.
    #[arg(long)]
    max_backtracks: Option<usize>,
    /// Condition estimate above which the problem counts as non-regular.
    #[arg(long)]
    cond_threshold: Option<f64>,
    /// Velocity bound treated as divergence.
    #[arg(long)]
    v_max: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Left endpoint, comma-separated components.
    #[arg(long, value_name = "VEC")]
    q1: Option<String>,
    /// Right endpoint.
    #[arg(long, value_name = "VEC")]
    q2: Option<String>,
    /// Duration.
    #[arg(long)]
    h: Option<f64>,
    /// CSV output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenfunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_name = "VEC")]
    q1: Option<String>,
    #[arg(long, value_name = "VEC")]
    q2: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    /// Tabulate over a grid of endpoints (one-dimensional models):
    /// q1start:q1stop:count,q2start:q2stop:count.
    #[arg(long, value_name = "SPEC")]
    grid: Option<String>,
    /// CSV output path (standard output when omitted in grid mode).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IntegrateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Initial position.
    #[arg(long, value_name = "VEC")]
    q0: Option<String>,
    /// Initial velocity.
    #[arg(long, value_name = "VEC")]
    v0: Option<String>,
    /// Step duration.
    #[arg(long)]
    h: Option<f64>,
    /// Number of steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Momentum-matching tolerance.
    #[arg(long)]
    outer_tol: Option<f64>,
    /// CSV output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShootArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_name = "VEC")]
    q1: Option<String>,
    #[arg(long, value_name = "VEC")]
    q2: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    /// Endpoint tolerance of the shooting iteration.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct CheckGradientArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Expansion point.
    #[arg(long, value_name = "VEC")]
    q1: Option<String>,
    /// Duration at which the gradient is assembled.
    #[arg(long)]
    h: Option<f64>,
    /// Random curve draws.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Seed of the draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_name = "VEC")]
    q1: Option<String>,
    #[arg(long, value_name = "VEC")]
    q2: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    /// Grid resolutions to compare, comma-separated.
    #[arg(long, value_name = "LIST", default_value = "32,64,128,256")]
    n_list: String,
    /// CSV output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn init_logging() -> Result<(), String> {
    let level = match std::env::var("VARBVP_LOG") {
        Err(_) => log::LevelFilter::Info,
        Ok(raw) => match raw.to_ascii_lowercase().as_str() {
            "quiet" => log::LevelFilter::Off,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            other => {
                return Err(format!(
                    "VARBVP_LOG must be quiet, info, or debug; got '{other}'"
                ))
            }
        },
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    Ok(())
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::NewtonDiverged(_) => 2,
        Error::NonRegularLagrangian(_) => 4,
        Error::InvalidConfig(_) | Error::Domain(_) | Error::GridMismatch(_) => 3,
    }
}

fn main() -> ExitCode {
    if let Err(message) = init_logging() {
        eprintln!("error: {message}");
        return ExitCode::from(3);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(args) => commands::solve(args),
        Command::Genfun(args) => commands::genfun(args),
        Command::Integrate(args) => commands::integrate(args),
        Command::Shoot(args) => commands::shoot(args),
        Command::CheckGradient(args) => commands::check_gradient(args),
        Command::Convergence(args) => commands::convergence(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
