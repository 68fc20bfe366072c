use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use valcast::benchmarks::optimal_nominal_level;
use valcast::clearing::Market;
use valcast::forecaster::{
    train_mse, train_quantile, train_value, OptimizerKind, ResNet, TrainingConfig,
};
use valcast::loss::PolicyBuffer;

use crate::io::{invalid, load_dataset, resolve_instance, write_atomic, Lib, RunDir};
use crate::run::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Overall operating cost of the sequential clearing.
    Value,
    /// Mean squared error.
    Mse,
    /// Pinball loss at `--level`.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Gd,
    Adam,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Mode::Value)]
    pub mode: Mode,
    #[arg(long)]
    pub instance: String,
    /// Dataset directory with `features.csv` and `actuals.csv`.
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of days, taken chronologically, used for training.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = Optimizer::Gd)]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Quantile level; defaults to the cost-optimal level of the cheapest
    /// generator.
    #[arg(long)]
    pub level: Option<f64>,
    /// Start from this checkpoint instead of a fresh network.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn save_model(model: &ResNet, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    model.save(tmp.path()).lib()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn run(args: TrainArgs, seed: u64) -> Result<()> {
    let mut run = Run::new("train", seed);
    let init_seed = run.derive("init");
    let order_seed = run.derive("batch_order");
    if !(args.split > 0.0 && args.split <= 1.0) {
        return Err(invalid(format!("--split {} outside (0, 1]", args.split)));
    }
    let inst = resolve_instance(&args.instance)?;
    let data = load_dataset(&args.data, &inst)?;
    let train = if args.split < 1.0 {
        data.split(args.split).lib()?.0
    } else {
        data
    };
    let model = match &args.init {
        Some(p) => ResNet::load(p).lib()?,
        None => ResNet::for_dataset(&train, args.hidden, init_seed),
    };
    let cfg = TrainingConfig {
        batch_size: args.batch,
        learning_rate: args.lr,
        epochs: args.epochs,
        optimizer: match args.optimizer {
            Optimizer::Gd => OptimizerKind::PlainGd,
            Optimizer::Adam => OptimizerKind::AdaptiveMoment,
        },
        seed: order_seed,
        ..TrainingConfig::default()
    };
    cfg.validate().lib()?;
    let level = match (args.mode, args.level) {
        (Mode::Quantile, Some(l)) => Some(l),
        (Mode::Quantile, None) => Some(optimal_nominal_level(&inst).lib()?),
        _ => None,
    };

    let dir = RunDir::create(
        &args.out,
        &run.manifest(&serde_json::json!({
            "args": &args,
            "training": &cfg,
            "level": level,
            "train_days": train.len(),
        })),
    )?;
    save_model(&model, &dir.file("init.json"))?;

    let (model, history) = match args.mode {
        Mode::Value => {
            let market = Market::new(inst);
            let buffer = PolicyBuffer::new();
            let out = train_value(model, &train, &market, &cfg, &buffer).lib()?;
            let stats = buffer.stats();
            log::info!(
                "policy buffer: {} entries, hit rate {:.3}",
                stats.entries,
                stats.hit_rate()
            );
            out
        }
        Mode::Mse => train_mse(model, &train, &cfg).lib()?,
        Mode::Quantile => train_quantile(model, &train, level.unwrap_or(0.5), &cfg).lib()?,
    };
    save_model(&model, &dir.file("model.json"))?;
    write_atomic(&dir.file("history.csv"), |w| Ok(history.write_csv(w)?))?;
    if let Some(last) = history.epochs.last() {
        println!(
            "{}",
            serde_json::json!({ "epochs": history.epochs.len(), "mean_loss": last.mean_loss, "rmse": last.rmse })
        );
    }
    Ok(())
}
