use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::{Market, WarmStart};
use crate::data::{from_nodal, loads_for, to_nodal, Dataset, DayRecord};
use crate::loss::{evaluate_warm, LossError, PolicyBuffer};

use super::{ForecastError, Params, ResNet};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    PlainGd,
    AdaptiveMoment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Days per parameter update.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    /// Seeds batch order.
    pub seed: u64,
    /// Trailing share of the training days held out for monitoring.
    pub validation_split: f64,
    /// An epoch fails once more than this share of its days is skipped.
    pub max_skip_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 8,
            learning_rate: 1e-4,
            epochs: 20,
            optimizer: OptimizerKind::PlainGd,
            seed: 0,
            validation_split: 0.0,
            max_skip_fraction: 0.1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate {} must be nonnegative",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.validation_split) {
            return bad(format!(
                "validation split {} outside [0, 1)",
                self.validation_split
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean overall cost of the training days, when the loss involves it.
    pub mean_cost: Option<f64>,
    /// Forecast RMSE on the training days, in MW.
    pub rmse: f64,
    pub skipped: usize,
    pub cache_hit_rate: Option<f64>,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// `epoch,mean_loss,mean_cost,rmse`; a missing cost is left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_loss", "mean_cost", "rmse"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.mean_loss.to_string(),
                r.mean_cost.map(|c| c.to_string()).unwrap_or_default(),
                r.rmse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Option<Params>,
    v: Option<Params>,
    t: i32,
}

impl Optimizer {
    fn new(cfg: &TrainingConfig) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            m: None,
            v: None,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params, grad: &Params) {
        match self.kind {
            OptimizerKind::PlainGd => params.axpy(-self.lr, grad),
            OptimizerKind::AdaptiveMoment => {
                self.t += 1;
                let m = self.m.get_or_insert_with(|| grad.zeros_like());
                let v = self.v.get_or_insert_with(|| grad.zeros_like());
                let c1 = 1.0 - ADAM_BETA1.powi(self.t);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t);
                let lr = self.lr;
                let dst = params.slices_mut();
                let ms = m.slices_mut();
                let vs = v.slices_mut();
                for (((p, g), m), v) in dst.into_iter().zip(grad.slices()).zip(ms).zip(vs) {
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Features of one day as columns.
fn day_inputs(day: &DayRecord) -> DMatrix<f64> {
    let rows = day.features.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows, day.features.len(), |i, t| day.features[t][i])
}

/// `forecast[t][farm]` from a `farms x T` output matrix.
fn per_hour(out: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..out.ncols())
        .map(|t| out.column(t).iter().copied().collect())
        .collect()
}

/// Forecasts `[day][t][farm]`.
pub fn predict(model: &ResNet, data: &Dataset) -> Result<Vec<Vec<Vec<f64>>>, ForecastError> {
    data.days
        .iter()
        .map(|d| Ok(per_hour(&model.forward(&day_inputs(d), &data.caps)?.0)))
        .collect()
}

fn squared_error(forecast: &[Vec<f64>], actual: &[Vec<f64>]) -> (f64, usize) {
    let mut s = 0.0;
    let mut n = 0;
    for (f, a) in forecast.iter().zip(actual) {
        for (x, y) in f.iter().zip(a) {
            s += (x - y).powi(2);
            n += 1;
        }
    }
    (s, n)
}

fn check_data(model: &ResNet, data: &Dataset) -> Result<(), ForecastError> {
    if model.input_dim() != data.input_dim() {
        return Err(ForecastError::Dimension {
            what: "input features",
            expected: model.input_dim(),
            got: data.input_dim(),
        });
    }
    if model.output_dim() != data.farms() {
        return Err(ForecastError::Dimension {
            what: "farms",
            expected: model.output_dim(),
            got: data.farms(),
        });
    }
    Ok(())
}

fn split_validation(data: &Dataset, fraction: f64) -> (Dataset, Option<Dataset>) {
    if fraction <= 0.0 || data.len() < 2 {
        return (data.clone(), None);
    }
    let keep = ((data.len() as f64) * (1.0 - fraction)).round() as usize;
    let keep = keep.clamp(1, data.len() - 1);
    (data.subset(0..keep), Some(data.subset(keep..data.len())))
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64);
    order.shuffle(&mut rng);
    order
}

struct DayStep {
    grad: Params,
    loss: f64,
    cost: Option<f64>,
    sq: f64,
    count: usize,
    warm: Option<WarmStart>,
}

/// Loss of a day under the value objective, with its parameter gradient.
fn value_step(
    model: &ResNet,
    market: &Market,
    data: &Dataset,
    day: &DayRecord,
    buffer: &PolicyBuffer,
    warm: Option<&WarmStart>,
) -> Result<Option<DayStep>, ForecastError> {
    let inst = market.instance();
    let (out, cache) = model.forward(&day_inputs(day), &data.caps)?;
    let forecast = per_hour(&out);
    let yhat = to_nodal(inst, &forecast);
    let y = to_nodal(inst, &day.actual);
    let loads = loads_for(inst, day.label);
    let eval = match evaluate_warm(market, loads, &yhat, &y, buffer, warm) {
        Ok(e) => e,
        Err(LossError::Clearing(e)) if e.is_infeasible() => {
            log::warn!("day {} skipped: {e}", day.label);
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let g = from_nodal(inst, &eval.gradient);
    let upstream = DMatrix::from_fn(out.nrows(), out.ncols(), |f, t| g[t][f]);
    let grad = model.backward(&cache, &upstream)?;
    let (sq, count) = squared_error(&forecast, &day.actual);
    Ok(Some(DayStep {
        grad,
        loss: eval.value,
        cost: Some(eval.overall_cost()),
        sq,
        count,
        warm: Some(eval.outcome.warm_start()),
    }))
}

#[derive(Debug, Clone, Copy)]
enum Supervised {
    Mse,
    Pinball(f64),
}

/// Capacity-normalized supervised loss of one day.
fn supervised_step(
    model: &ResNet,
    data: &Dataset,
    day: &DayRecord,
    kind: Supervised,
) -> Result<DayStep, ForecastError> {
    let (out, cache) = model.forward(&day_inputs(day), &data.caps)?;
    let mut loss = 0.0;
    let upstream = DMatrix::from_fn(out.nrows(), out.ncols(), |f, t| {
        let cap = data.caps[f];
        let (yh, y) = (out[(f, t)] / cap, day.actual[t][f] / cap);
        match kind {
            Supervised::Mse => {
                loss += (yh - y).powi(2);
                2.0 * (yh - y) / cap
            }
            Supervised::Pinball(a) => {
                let r = y - yh;
                loss += if r >= 0.0 { a * r } else { (a - 1.0) * r };
                if r > 0.0 {
                    -a / cap
                } else {
                    (1.0 - a) / cap
                }
            }
        }
    });
    let grad = model.backward(&cache, &upstream)?;
    let (sq, count) = squared_error(&per_hour(&out), &day.actual);
    Ok(DayStep {
        grad,
        loss,
        cost: None,
        sq,
        count,
        warm: None,
    })
}

/// Runs the epoch loop; `step` evaluates one day (by position in `train`).
fn run<F, V>(
    mut model: ResNet,
    train: &Dataset,
    cfg: &TrainingConfig,
    buffer: Option<&PolicyBuffer>,
    step: F,
    validate: V,
) -> Result<(ResNet, History), ForecastError>
where
    F: Fn(&ResNet, usize, Option<&WarmStart>) -> Result<Option<DayStep>, ForecastError> + Sync,
    V: Fn(&ResNet) -> Result<Option<f64>, ForecastError>,
{
    cfg.validate()?;
    let mut opt = Optimizer::new(cfg);
    let mut history = History::default();
    let mut warm: Vec<Option<WarmStart>> = vec![None; train.len()];
    let horizon = train.horizon.max(1) as f64;
    for epoch in 1..=cfg.epochs {
        if let Some(b) = buffer {
            b.reset_stats();
        }
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let (mut loss, mut cost, mut sq, mut count, mut done, mut skipped) =
            (0.0, 0.0, 0.0, 0usize, 0usize, 0usize);
        let mut has_cost = false;
        for batch in order.chunks(cfg.batch_size) {
            let steps: Vec<(usize, Result<Option<DayStep>, ForecastError>)> = batch
                .par_iter()
                .map(|&i| (i, step(&model, i, warm[i].as_ref())))
                .collect();
            let mut grad = model.params.zeros_like();
            let mut used = 0usize;
            for (i, s) in steps {
                match s? {
                    Some(s) => {
                        grad.axpy(1.0, &s.grad);
                        loss += s.loss;
                        if let Some(c) = s.cost {
                            cost += c;
                            has_cost = true;
                        }
                        sq += s.sq;
                        count += s.count;
                        if s.warm.is_some() {
                            warm[i] = s.warm;
                        }
                        used += 1;
                    }
                    None => {
                        skipped += 1;
                        if skipped as f64 > cfg.max_skip_fraction * train.len() as f64 {
                            return Err(ForecastError::TooManySkipped {
                                epoch,
                                skipped,
                                total: train.len(),
                            });
                        }
                    }
                }
            }
            if used > 0 {
                let scale = 1.0 / (used as f64 * horizon);
                let mut scaled = grad.zeros_like();
                scaled.axpy(scale, &grad);
                opt.step(&mut model.params, &scaled);
                done += used;
            }
        }
        let mean = |v: f64| if done > 0 { v / done as f64 } else { f64::NAN };
        let record = EpochRecord {
            epoch,
            mean_loss: mean(loss),
            mean_cost: has_cost.then(|| mean(cost)),
            rmse: if count > 0 {
                (sq / count as f64).sqrt()
            } else {
                f64::NAN
            },
            skipped,
            cache_hit_rate: buffer.map(|b| b.stats().hit_rate()),
            validation_loss: validate(&model)?,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} rmse {:.4} skipped {skipped}",
            record.mean_loss,
            record.rmse
        );
        history.epochs.push(record);
    }
    Ok((model, history))
}

/// Trains against the value-oriented loss of sequential clearing on
/// `market`. Each day's loads are the instance's load day with the same
/// label (wrapping around).
pub fn train_value(
    model: ResNet,
    data: &Dataset,
    market: &Market,
    cfg: &TrainingConfig,
    buffer: &PolicyBuffer,
) -> Result<(ResNet, History), ForecastError> {
    check_data(&model, data)?;
    data.check_instance(market.instance())?;
    let (train, held) = split_validation(data, cfg.validation_split);
    let step = |m: &ResNet, i: usize, w: Option<&WarmStart>| {
        value_step(m, market, &train, &train.days[i], buffer, w)
    };
    let validate = |m: &ResNet| -> Result<Option<f64>, ForecastError> {
        let Some(v) = held.as_ref() else {
            return Ok(None);
        };
        let scratch = PolicyBuffer::new();
        let mut total = 0.0;
        let mut n = 0usize;
        for d in &v.days {
            if let Some(s) = value_step(m, market, v, d, &scratch, None)? {
                total += s.loss;
                n += 1;
            }
        }
        Ok((n > 0).then(|| total / n as f64))
    };
    run(model, &train, cfg, Some(buffer), step, validate)
}

fn train_supervised(
    model: ResNet,
    data: &Dataset,
    cfg: &TrainingConfig,
    kind: Supervised,
) -> Result<(ResNet, History), ForecastError> {
    check_data(&model, data)?;
    let (train, held) = split_validation(data, cfg.validation_split);
    let step = |m: &ResNet, i: usize, _: Option<&WarmStart>| {
        supervised_step(m, &train, &train.days[i], kind).map(Some)
    };
    let validate = |m: &ResNet| -> Result<Option<f64>, ForecastError> {
        let Some(v) = held.as_ref() else {
            return Ok(None);
        };
        let mut total = 0.0;
        for d in &v.days {
            total += supervised_step(m, v, d, kind)?.loss;
        }
        Ok(Some(total / v.len() as f64))
    };
    run(model, &train, cfg, None, step, validate)
}

/// Mean squared error on capacity-normalized outputs.
pub fn train_mse(
    model: ResNet,
    data: &Dataset,
    cfg: &TrainingConfig,
) -> Result<(ResNet, History), ForecastError> {
    train_supervised(model, data, cfg, Supervised::Mse)
}

/// Pinball loss at `level` on capacity-normalized outputs.
pub fn train_quantile(
    model: ResNet,
    data: &Dataset,
    level: f64,
    cfg: &TrainingConfig,
) -> Result<(ResNet, History), ForecastError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(ForecastError::Config(format!(
            "quantile level {level} outside (0, 1)"
        )));
    }
    train_supervised(model, data, cfg, Supervised::Pinball(level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::data::{generate, SynthConfig};

    fn small_data(days: usize, noise: f64) -> Dataset {
        let cfg = SynthConfig {
            noise_scale: noise,
            ..SynthConfig::default()
        };
        generate(&cfg, days).unwrap().0
    }

    fn adam(epochs: usize, lr: f64) -> TrainingConfig {
        TrainingConfig {
            epochs,
            learning_rate: lr,
            optimizer: OptimizerKind::AdaptiveMoment,
            batch_size: 4,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = small_data(6, 0.6);
        let market = Market::new(cases::iso1());
        let model = ResNet::for_dataset(&data, 8, 1);
        let cfg = TrainingConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..TrainingConfig::default()
        };
        let (after, hist) =
            train_value(model.clone(), &data, &market, &cfg, &PolicyBuffer::new()).unwrap();
        assert_eq!(after, model);
        assert_eq!(hist.epochs.len(), 1);
        assert!(hist.epochs[0].mean_cost.is_some());
    }

    #[test]
    fn predictable_target_is_learned() {
        let data = small_data(30, 0.0);
        let model = ResNet::for_dataset(&data, 16, 2);
        let (_, hist) = train_mse(model, &data, &adam(150, 1e-2)).unwrap();
        let first = hist.epochs[0].rmse;
        let last = hist.epochs.last().unwrap().rmse;
        assert!(last < 0.1 * first && last < 1.0, "rmse {first} -> {last}");
    }

    #[test]
    fn constant_target_is_learned() {
        let mut data = small_data(10, 0.6);
        for d in &mut data.days {
            for y in &mut d.actual {
                y[0] = 15.0;
            }
        }
        let model = ResNet::for_dataset(&data, 8, 3);
        let (m, _) = train_mse(model, &data, &adam(200, 1e-2)).unwrap();
        let preds = predict(&m, &data).unwrap();
        for day in preds {
            for h in day {
                assert!((h[0] - 15.0).abs() < 0.5, "{}", h[0]);
            }
        }
    }

    #[test]
    fn same_seed_same_history() {
        let data = small_data(8, 0.6);
        let run = || {
            let m = ResNet::for_dataset(&data, 8, 4);
            let (_, h) = train_quantile(m, &data, 0.3, &adam(3, 1e-2)).unwrap();
            let mut buf = Vec::new();
            h.write_csv(&mut buf).unwrap();
            buf
        };
        let a = run();
        assert_eq!(a, run());
        assert!(String::from_utf8(a)
            .unwrap()
            .starts_with("epoch,mean_loss,mean_cost,rmse\n1,"));
    }

    #[test]
    fn empty_slice_predicts_nothing() {
        let data = small_data(2, 0.6);
        let m = ResNet::for_dataset(&data, 4, 0);
        assert!(predict(&m, &data.subset(0..0)).unwrap().is_empty());
    }

    #[test]
    fn bad_configuration_is_rejected() {
        let data = small_data(2, 0.6);
        let m = ResNet::for_dataset(&data, 4, 0);
        let cfg = TrainingConfig {
            batch_size: 0,
            ..TrainingConfig::default()
        };
        assert!(matches!(
            train_mse(m.clone(), &data, &cfg),
            Err(ForecastError::Config(_))
        ));
        assert!(train_quantile(m, &data, 1.0, &TrainingConfig::default()).is_err());
    }
}
