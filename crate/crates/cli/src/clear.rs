use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use valcast::clearing::{outcome_rows, write_outcome_csv, DayOutcome, Market, OutcomeSummary};
use valcast::data::loads_for;

use crate::io::{
    read_json, read_wind, resolve_instance, write_atomic, write_json, DaRecord, Lib, RunDir,
};
use crate::run::Run;

/// Instance and load day, shared by the single-day commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DayArgs {
    /// Instance file, or a bundled case name (`iso1`, `nine-bus`).
    #[arg(long)]
    pub instance: String,
    /// Load day label; wraps around the instance's load series.
    #[arg(long, default_value_t = 0)]
    pub day: i64,
}

#[derive(Debug, Args, Serialize)]
pub struct ClearDaArgs {
    #[command(flatten)]
    pub day: DayArgs,
    /// Forecast CSV `hour,node,value`.
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClearRtArgs {
    #[command(flatten)]
    pub day: DayArgs,
    /// `da.json` written by `clear-da` or `simulate-day`.
    #[arg(long)]
    pub da: PathBuf,
    /// Realization CSV `hour,node,value`.
    #[arg(long)]
    pub realization: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub day: DayArgs,
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub realization: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn write_outcome(dir: &RunDir, label: i64, outcome: &DayOutcome) -> Result<()> {
    let rows = outcome_rows(label, outcome);
    write_atomic(&dir.file("outcome.csv"), |w| {
        Ok(write_outcome_csv(w, &rows)?)
    })?;
    let summary = OutcomeSummary::from(outcome);
    write_json(&dir.file("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn clear_da(args: ClearDaArgs, seed: u64) -> Result<()> {
    let run = Run::new("clear-da", seed);
    let inst = resolve_instance(&args.day.instance)?;
    let forecast = read_wind(&args.forecast, &inst)?;
    let market = Market::new(inst);
    let loads = loads_for(market.instance(), args.day.day).to_vec();
    let da = market.solve_da(&loads, &forecast, None).lib()?;
    let dir = RunDir::create(&args.out, &run.manifest(&args))?;
    write_json(
        &dir.file("da.json"),
        &DaRecord::new(market.instance(), args.day.day, &da),
    )?;
    println!(
        "{}",
        serde_json::json!({ "da_cost": da.solution.objective })
    );
    Ok(())
}

pub fn clear_rt(args: ClearRtArgs, seed: u64) -> Result<()> {
    let run = Run::new("clear-rt", seed);
    let inst = resolve_instance(&args.day.instance)?;
    let realization = read_wind(&args.realization, &inst)?;
    let record: DaRecord = read_json(&args.da)?;
    let market = Market::new(inst);
    let loads = loads_for(market.instance(), args.day.day).to_vec();
    let da = record.decision(&market, &loads)?;
    let outcome = market.run_real_time(&loads, da, &realization, None).lib()?;
    let dir = RunDir::create(&args.out, &run.manifest(&args))?;
    write_outcome(&dir, args.day.day, &outcome)
}

pub fn simulate(args: SimulateArgs, seed: u64) -> Result<()> {
    let run = Run::new("simulate-day", seed);
    let inst = resolve_instance(&args.day.instance)?;
    let forecast = read_wind(&args.forecast, &inst)?;
    let realization = read_wind(&args.realization, &inst)?;
    let market = Market::new(inst);
    let loads = loads_for(market.instance(), args.day.day).to_vec();
    let outcome = market
        .simulate(&loads, &forecast, &realization, None)
        .lib()?;
    let dir = RunDir::create(&args.out, &run.manifest(&args))?;
    write_json(
        &dir.file("da.json"),
        &DaRecord::new(market.instance(), args.day.day, &outcome.da),
    )?;
    write_outcome(&dir, args.day.day, &outcome)
}
