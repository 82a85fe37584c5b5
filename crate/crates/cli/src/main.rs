//! `nlsgraph`: stationary states of the focusing NLS equation on compact
//! metric graphs with Kirchhoff vertex conditions.

// Grid and tolerance checks use negated comparisons (`!(a <= b)`) on
// purpose: unlike `a > b`, they treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nlsgraph_core::solvers::SolverConfig;

mod config;
mod run;

use config::{LambdaRange, Mode, Overrides};

#[derive(Parser)]
#[command(
    name = "nlsgraph",
    version,
    about = "Stationary NLS states on metric graphs: peaked branches, sweeps and spectra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Least-action solve at each given λ independently.
    Solve(Common),
    /// Warm-started least-action continuation over an ascending λ grid.
    Sweep(Common),
    /// Peaked-ansatz correction at one λ, or peaked continuation over a grid.
    Peaked(Common),
    /// Eigenpairs of the linearized operator at a solved state (one λ).
    Spectrum(Common),
    /// Peak, profile-error and decay diagnostics of a solved state (one λ).
    ProfileCheck(Common),
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Solve(c) => (Mode::Solve, c),
            Command::Sweep(c) => (Mode::Sweep, c),
            Command::Peaked(c) => (Mode::Peaked, c),
            Command::Spectrum(c) => (Mode::Spectrum, c),
            Command::ProfileCheck(c) => (Mode::ProfileCheck, c),
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; explicit flags override its fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Graph spec JSON (vertex ids plus edges with lengths).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Nonlinearity power p > 1 (default 3).
    #[arg(long)]
    p: Option<f64>,
    /// Comma-separated λ values, each positive.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    /// λ grid as min,max,count or min,max,count,log.
    #[arg(long, value_parser = parse_lambda_range, conflicts_with = "lambda")]
    lambda_range: Option<LambdaRange>,
    /// Mesh width override (otherwise h = min(h_max, c_mesh·λ^-mesh_exponent)).
    #[arg(long)]
    h_target: Option<f64>,
    /// Seed for randomized solver restarts (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated peak vertex ids for the peaked branch.
    #[arg(long, value_delimiter = ',')]
    peaks: Option<Vec<String>>,
}

fn parse_lambda_range(s: &str) -> Result<LambdaRange, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err("expected min,max,count or min,max,count,log".into());
    }
    let min: f64 = parts[0].parse().map_err(|_| format!("bad min '{}'", parts[0]))?;
    let max: f64 = parts[1].parse().map_err(|_| format!("bad max '{}'", parts[1]))?;
    let count: usize = parts[2].parse().map_err(|_| format!("bad count '{}'", parts[2]))?;
    let log = match parts.get(3).copied() {
        None | Some("linear") => false,
        Some("log") => true,
        Some(other) => return Err(format!("bad spacing '{other}', expected 'log' or 'linear'")),
    };
    Ok(LambdaRange { min, max, count, log })
}

fn solver_defaults_help() -> String {
    let d = SolverConfig::default();
    format!(
        "Solver defaults (override in the config file's \"solver\" object):\n  \
         newton_tol {}, newton_max_iter {}, gradient_flow_step {},\n  \
         gradient_flow_max_iter {}, c_mesh {}, mesh_exponent {}, h_max {},\n  \
         random_seed {}.\n\
         Mesh width per λ: h = min(h_max, c_mesh·λ^-mesh_exponent), unless\n  \
         --h-target or solver.h_target_override fixes it.",
        d.newton_tol,
        d.newton_max_iter,
        d.gradient_flow_step,
        d.gradient_flow_max_iter,
        d.c_mesh,
        d.mesh_exponent,
        d.h_max,
        d.random_seed,
    )
}

fn execute(mode: Mode, common: Common) -> Result<(), run::RunError> {
    let file = match &common.config {
        Some(path) => Some(config::load_config(path)?),
        None => None,
    };
    let over = Overrides {
        graph: common.graph,
        p: common.p,
        lambda: common.lambda,
        lambda_range: common.lambda_range,
        h_target: common.h_target,
        seed: common.seed,
        out: common.out,
        peaks: common.peaks,
    };
    let plan = config::resolve(mode, file, over)?;
    run::run(&plan)
}

fn main() -> ExitCode {
    let matches = Cli::command()
        .after_help(solver_defaults_help())
        .get_matches();
    let cli = Cli::from_arg_matches(&matches).expect("clap derive accepts its own matches");
    let (mode, common) = cli.command.split();
    match execute(mode, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
