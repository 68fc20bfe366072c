use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use valcast::data::{generate, save_csv, SynthConfig, MANIFEST_FILE};

use crate::io::{invalid, resolve_instance, Lib};
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 365)]
    pub days: usize,
    /// Take farm capacities, feature count and horizon from this instance.
    #[arg(long)]
    pub instance: Option<String>,
    /// Generator settings as TOML; fields left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenDataArgs, seed: u64) -> Result<()> {
    let mut run = Run::new("gen-data", seed);
    let mut cfg = match &args.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SynthConfig>(&text)
                .map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(name) = &args.instance {
        let inst = resolve_instance(name)?;
        cfg.caps = inst.wind.farm_capacities();
        cfg.feature_dim = inst.wind.feature_dim;
        cfg.horizon = inst.horizon();
    }
    cfg.seed = run.derive("synth");
    if args.days == 0 {
        return Err(invalid("--days must be at least 1"));
    }
    let (data, _) = generate(&cfg, args.days).lib()?;

    // Staged in a scratch directory inside `out`, then moved file by file.
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let scratch = tempfile::tempdir_in(&args.out)?;
    let manifest = run.manifest(&serde_json::json!({ "args": &args, "synth": &cfg }));
    save_csv(&data, scratch.path(), Some(&manifest)).lib()?;
    for name in [
        valcast::data::FEATURES_FILE,
        valcast::data::ACTUALS_FILE,
        MANIFEST_FILE,
    ] {
        std::fs::rename(scratch.path().join(name), args.out.join(name))
            .with_context(|| format!("moving {name} into {}", args.out.display()))?;
    }
    println!(
        "{}",
        serde_json::json!({ "days": data.len(), "farms": data.farms() })
    );
    Ok(())
}
