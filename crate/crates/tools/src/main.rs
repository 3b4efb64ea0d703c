//! `icop plan c4.scenario` plans one scenario and writes the trajectory and
//! metrics into `--out`. `--sweep-horizon` and `--sweep-xi` write timing
//! tables instead.
//!
//! Exit codes: 0 success, 2 parse failure, 3 non-convergence, 4 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use icop_tools::cli::{cmd_plan, cmd_sweep_horizon, cmd_sweep_xi, CliError, RunConfig, EXIT_PARSE};

#[derive(Parser)]
#[command(
    name = "icop",
    version,
    about = "Contact-constrained trajectory planning in a confined workpiece"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a scenario, or sweep horizon / xi over it.
    Plan(PlanArgs),
}

#[derive(clap::Args)]
struct PlanArgs {
    /// Scenario file.
    #[arg(value_name = "SCENARIO", conflicts_with = "scenario")]
    positional: Option<PathBuf>,

    /// Scenario file (alternative to the positional argument).
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Tool-tip tolerance in meters.
    #[arg(long)]
    xi: Option<f64>,

    /// Resample the weld path to this many waypoints.
    #[arg(long)]
    horizon: Option<usize>,

    #[arg(long)]
    rounds: Option<usize>,

    /// One collision row per capsule instead of the closest one only.
    #[arg(long)]
    per_capsule_rows: bool,

    /// Comma-separated horizons, e.g. 14,21,43,82,123,164.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sweep_horizon: Option<Vec<usize>>,

    /// Comma-separated thresholds, e.g. 1e-2,1e-3,1e-4,1e-5,1e-6.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sweep_xi: Option<Vec<f64>>,

    /// Sweep rows keep the fastest of this many runs.
    #[arg(long, default_value_t = 1)]
    repeats: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: PlanArgs) -> Result<(), CliError> {
    let Some(scenario) = args.positional.or(args.scenario) else {
        return Err(CliError::Override("no scenario given".to_string()));
    };
    let config = RunConfig {
        scenario_path: scenario,
        output_dir: args.out,
        xi: args.xi,
        horizon: args.horizon,
        rounds: args.rounds,
        per_capsule_rows: args.per_capsule_rows.then_some(true),
        seed: args.seed,
        repeats: args.repeats,
    };
    let mut swept = false;
    if let Some(h) = &args.sweep_horizon {
        let table = cmd_sweep_horizon(&config, h)?;
        println!("{}", table.path.display());
        swept = true;
    }
    if let Some(x) = &args.sweep_xi {
        let table = cmd_sweep_xi(&config, x)?;
        println!("{}", table.path.display());
        swept = true;
    }
    if !swept {
        let report = cmd_plan(&config)?;
        println!("{}", report.trajectory_path.display());
        println!("{}", report.metrics_path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Plan(args) = Args::parse().command;
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.summary());
            let code = u8::try_from(e.exit_code()).unwrap_or(EXIT_PARSE as u8);
            ExitCode::from(code)
        }
    }
}
