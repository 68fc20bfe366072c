use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use valcast::clearing::Market;
use valcast::data::loads_for;
use valcast::properties::audit;

use crate::clear::DayArgs;
use crate::io::{read_json, resolve_instance, write_json, DaRecord, Lib, RunDir, Violation};
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub day: DayArgs,
    /// Stored DA clearing with primal values and row duals.
    #[arg(long)]
    pub da: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: AuditArgs, seed: u64) -> Result<()> {
    let run = Run::new("audit", seed);
    let inst = resolve_instance(&args.day.instance)?;
    let record: DaRecord = read_json(&args.da)?;
    let market = Market::new(inst);
    let loads = loads_for(market.instance(), args.day.day).to_vec();
    let da = record.decision(&market, &loads)?;
    let report = audit(&market, &loads, &da).lib()?;
    let dir = RunDir::create(&args.out, &run.manifest(&args))?;
    write_json(&dir.file("properties.json"), &report)?;
    let rev = &report.revenue_adequacy;
    println!(
        "{}",
        serde_json::json!({
            "holds": report.holds(),
            "load_payment": rev.load_payment,
            "congestion_rent": rev.congestion_rent,
            "residual": rev.residual,
        })
    );
    if !report.holds() {
        let mut all = report.cost_recovery.violations.clone();
        all.extend(rev.violations.iter().cloned());
        return Err(Violation(format!("settlement check failed: {}", all.join("; "))).into());
    }
    Ok(())
}
