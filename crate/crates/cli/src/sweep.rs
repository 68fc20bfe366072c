use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use valcast::clearing::Market;
use valcast::data::loads_for;
use valcast::loss::sweep_loss;

use crate::clear::DayArgs;
use crate::io::{invalid, read_wind, resolve_instance, write_atomic, Lib, RunDir};
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub day: DayArgs,
    /// Base forecast CSV `hour,node,value`.
    #[arg(long)]
    pub base: PathBuf,
    /// Direction CSV in the same layout; defaults to one on every farm entry.
    #[arg(long)]
    pub direction: Option<PathBuf>,
    #[arg(long)]
    pub realization: PathBuf,
    #[arg(long, allow_negative_numbers = true, default_value_t = -1.0)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub to: f64,
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// `points` evenly spaced values from `from` to `to`; a single point sits at `from`.
pub fn grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..points)
            .map(|i| from + (to - from) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn run(args: SweepArgs, seed: u64) -> Result<()> {
    let run = Run::new("sweep", seed);
    if args.points == 0 || !args.from.is_finite() || !args.to.is_finite() {
        return Err(invalid("sweep needs at least one point and a finite range"));
    }
    let inst = resolve_instance(&args.day.instance)?;
    let base = read_wind(&args.base, &inst)?;
    let realization = read_wind(&args.realization, &inst)?;
    let direction = match &args.direction {
        Some(p) => read_wind(p, &inst)?,
        None => {
            let cap = &inst.wind.capacity;
            (0..inst.horizon())
                .flat_map(|_| cap.iter().map(|&c| if c > 0.0 { 1.0 } else { 0.0 }))
                .collect()
        }
    };
    let market = Market::new(inst);
    let loads = loads_for(market.instance(), args.day.day).to_vec();
    let points = sweep_loss(
        &market,
        &loads,
        &base,
        &direction,
        &grid(args.from, args.to, args.points),
        &realization,
    )
    .lib()?;
    let clamped = points.iter().filter(|p| p.clamped).count();
    let dir = RunDir::create(&args.out, &run.manifest(&args))?;
    write_atomic(&dir.file("sweep.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for p in &points {
            csv.serialize(p)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    println!(
        "{}",
        serde_json::json!({ "points": points.len(), "clamped": clamped })
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::grid;

    #[test]
    fn grids() {
        assert_eq!(grid(2.0, 5.0, 1), [2.0]);
        assert_eq!(grid(0.0, 1.0, 3), [0.0, 0.5, 1.0]);
        assert!(grid(0.0, 1.0, 0).is_empty());
    }
}
