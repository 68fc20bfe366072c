use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;
use valcast::benchmarks::{evaluate, stochastic_schedules, ForecastSource, Neighbours};
use valcast::clearing::Market;
use valcast::forecaster::ResNet;

use crate::io::{invalid, load_dataset, resolve_instance, write_atomic, write_json, Lib, RunDir};
use crate::run::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighbourMode {
    Days,
    Hours,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "stochastic", "perfect"]))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Days before this fraction are training days; the rest are evaluated.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Forecaster checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Stochastic clearing with this many nearest-neighbour scenarios.
    #[arg(long, value_name = "K")]
    pub stochastic: Option<usize>,
    #[arg(long, value_enum, default_value_t = NeighbourMode::Hours)]
    pub neighbours: NeighbourMode,
    /// Clear against the realizations themselves.
    #[arg(long)]
    pub perfect: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EvaluateArgs, seed: u64) -> Result<()> {
    let run = Run::new("evaluate", seed);
    if !(args.split > 0.0 && args.split < 1.0) {
        return Err(invalid(format!("--split {} outside (0, 1)", args.split)));
    }
    let inst = resolve_instance(&args.instance)?;
    let data = load_dataset(&args.data, &inst)?;
    let (train, test) = data.split(args.split).lib()?;
    if test.is_empty() {
        return Err(invalid("no test days after the split"));
    }
    let market = Market::new(inst);
    let report = if let Some(path) = &args.model {
        let model = ResNet::load(path).lib()?;
        evaluate(ForecastSource::Model(&model), &test, &market).lib()?
    } else if let Some(k) = args.stochastic {
        let mode = match args.neighbours {
            NeighbourMode::Days => Neighbours::Days,
            NeighbourMode::Hours => Neighbours::Hours,
        };
        let schedules = stochastic_schedules(&market, &train, &test, k, mode).lib()?;
        evaluate(ForecastSource::Schedules(&schedules), &test, &market).lib()?
    } else {
        evaluate(ForecastSource::Perfect, &test, &market).lib()?
    };
    if !report.infeasible.is_empty() {
        log::warn!(
            "{} test days could not be cleared: {:?}",
            report.infeasible.len(),
            report.infeasible
        );
    }
    let dir = RunDir::create(&args.out, &run.manifest(&args))?;
    write_json(&dir.file("report.json"), &report)?;
    write_atomic(&dir.file("days.csv"), |w| Ok(report.write_days_csv(w)?))?;
    println!(
        "{}",
        serde_json::json!({
            "rmse": report.rmse,
            "mean_overall_cost": report.mean_overall_cost,
            "mean_da_cost": report.mean_da_cost,
            "mean_rt_cost": report.mean_rt_cost,
            "days": report.days.len(),
        })
    );
    Ok(())
}
