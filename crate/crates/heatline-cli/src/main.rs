//! `heatline` — harness for the induction-line control stack: simulate the
//! twin, train and sweep agents, analyze sweeps, deploy wrapped models, run
//! the end-to-end pipeline against its latency budgets, and emit plot-ready
//! series.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

mod analyze;
mod commands;
mod job;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use heatline_core::twin::SensorMode;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "invalid input: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime failure: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "heatline", version, about = "Induction heating line control harness")]
struct Cli {
    /// Base RNG seed for commands that sample.
    #[arg(long, global = true, default_value_t = 19)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "heatline-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ControllerArg {
    None,
    MaxPower,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SensorsArg {
    Forge,
    Virtual,
}

impl From<SensorsArg> for SensorMode {
    fn from(value: SensorsArg) -> Self {
        match value {
            SensorsArg::Forge => SensorMode::Forge,
            SensorsArg::Virtual => SensorMode::Virtual,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the furnace twin and export the trajectory.
    Simulate {
        /// Twin configuration (TOML); defaults to the stock plant.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        steps: u64,
        #[arg(long, value_enum, default_value_t = ControllerArg::None)]
        controller: ControllerArg,
        /// Initial rod temperature.
        #[arg(long, default_value_t = 600.0)]
        rod_temp_c: f64,
    },
    /// Train one agent from a job file; writes checkpoint, metrics and the
    /// greedy evaluation trace.
    Train {
        /// Job description (TOML).
        #[arg(long)]
        job: PathBuf,
        /// Enforce the sweep value domains.
        #[arg(long)]
        grid_mode: bool,
    },
    /// Expand a sweep grid and run it (budgeted, seeded subsampling).
    Grid {
        #[arg(long)]
        grid: PathBuf,
        /// Max jobs to run; 0 means the whole grid.
        #[arg(long, default_value_t = 0)]
        budget: usize,
    },
    /// Correlate sweep hyperparameters with best scores.
    Correlate {
        /// results.csv produced by `grid`.
        #[arg(long)]
        results: PathBuf,
    },
    /// Wrap a trained checkpoint and register it in the algorithm store.
    Deploy {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Controlled zone (1-based); defaults to the checkpoint's.
        #[arg(long)]
        zone: Option<usize>,
        /// Sensor interface; defaults to the checkpoint's.
        #[arg(long, value_enum)]
        sensors: Option<SensorsArg>,
        /// Store directory (algorithm bundles + power-control config).
        #[arg(long, default_value = "heatline-store")]
        store: PathBuf,
    },
    /// Drive the full pipeline with synthetic telemetry and report stage
    /// latencies against their budgets.
    Pipeline {
        #[arg(long, default_value_t = 60)]
        duration: u64,
        /// Telemetry records per second.
        #[arg(long, default_value_t = 200)]
        rate: u32,
        /// Algorithm version to run; defaults to the store's active one.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value = "heatline-store")]
        store: PathBuf,
        /// Artificial tag-operation delay in milliseconds (fault injection).
        #[arg(long)]
        tag_delay_ms: Option<u64>,
    },
    /// Turn a greedy evaluation trace into plot-ready series with the
    /// zone-3 band columns.
    Report {
        /// trace.csv produced by `train`.
        #[arg(long)]
        metrics: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, steps, controller, rod_temp_c } => {
            let controller = match controller {
                ControllerArg::None => commands::SimController::None,
                ControllerArg::MaxPower => commands::SimController::MaxPower,
            };
            commands::simulate(config, steps, controller, rod_temp_c, &cli.out)
        }
        Command::Train { job, grid_mode } => {
            commands::train(&job, grid_mode, &cli.out).map(|_| ())
        }
        Command::Grid { grid, budget } => {
            commands::grid(&grid, budget, cli.seed, &cli.out).map(|_| ())
        }
        Command::Correlate { results } => commands::correlate(&results, &cli.out),
        Command::Deploy { checkpoint, zone, sensors, store } => {
            commands::deploy(&checkpoint, zone, sensors.map(Into::into), &store).map(|_| ())
        }
        Command::Pipeline { duration, rate, model, store, tag_delay_ms } => {
            commands::pipeline(commands::PipelineArgs {
                duration_s: duration,
                rate,
                model,
                store,
                tag_delay_ms,
                out: cli.out,
            })
            .map(|_| ())
        }
        Command::Report { metrics } => commands::report(&metrics, &cli.out).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Validation(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
