mod audit;
mod clear;
mod evaluate;
mod gen_data;
mod io;
mod run;
mod sweep;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use valcast::ErrorKind;

use io::{Invalid, Violation};

#[derive(Debug, Parser)]
#[command(
    name = "valcast",
    version,
    about = "Value-oriented wind forecasting and market clearing experiments"
)]
struct Cli {
    /// Master seed; every random draw of the run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-day work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clear the day-ahead market against a wind forecast.
    ClearDa(clear::ClearDaArgs),
    /// Run the hourly real-time clearings after a stored day-ahead schedule.
    ClearRt(clear::ClearRtArgs),
    /// Day-ahead then real-time clearing of one day.
    SimulateDay(clear::SimulateArgs),
    /// Train a forecaster.
    Train(train::TrainArgs),
    /// Operating cost and forecast error on the test days.
    Evaluate(evaluate::EvaluateArgs),
    /// Check cost recovery and revenue adequacy of a stored clearing.
    Audit(audit::AuditArgs),
    /// Loss values along a line through forecast space.
    Sweep(sweep::SweepArgs),
    /// Write a synthetic dataset.
    GenData(gen_data::GenDataArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Violation>() {
            return 4;
        }
        if cause.is::<Invalid>() || cause.is::<clap::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<valcast::Error>() {
            return match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Infeasible => 3,
                ErrorKind::Other => 1,
            };
        }
    }
    1
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(io::invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::ClearDa(a) => clear::clear_da(a, seed),
        Command::ClearRt(a) => clear::clear_rt(a, seed),
        Command::SimulateDay(a) => clear::simulate(a, seed),
        Command::Train(a) => train::run(a, seed),
        Command::Evaluate(a) => evaluate::run(a, seed),
        Command::Audit(a) => audit::run(a, seed),
        Command::Sweep(a) => sweep::run(a, seed),
        Command::GenData(a) => gen_data::run(a, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
