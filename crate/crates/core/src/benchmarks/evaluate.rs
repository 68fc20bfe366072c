use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::{DaDecision, DayOutcome, Market};
use crate::data::{loads_for, to_nodal, Dataset};
use crate::forecaster::{predict, ResNet};
use crate::properties::nodal_prices;

use super::knn::knn_scenarios;
use super::stochastic::stochastic_clearing;
use super::BenchmarkError;

/// Where the DA schedule of each evaluated day comes from.
#[derive(Debug, Clone, Copy)]
pub enum ForecastSource<'a> {
    Model(&'a ResNet),
    /// Stored forecasts, `[day][t][farm]`.
    Forecasts(&'a [Vec<Vec<f64>>]),
    /// The realizations themselves.
    Perfect,
    /// One fixed DA decision per day.
    Schedules(&'a [DaDecision]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayCost {
    pub day: i64,
    pub da_cost: f64,
    pub rt_cost: f64,
    pub overall_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Forecast RMSE in MW; absent when the source has no forecasts.
    pub rmse: Option<f64>,
    pub mean_overall_cost: f64,
    pub mean_da_cost: f64,
    pub mean_rt_cost: f64,
    /// Mean daily DA revenue of each farm at nodal prices, $.
    pub wind_profits: Vec<f64>,
    pub days: Vec<DayCost>,
    /// Labels of days whose clearing failed; excluded from the means.
    pub infeasible: Vec<i64>,
}

impl EvaluationReport {
    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(out, self)
    }

    /// `day,da_cost,rt_cost,overall_cost`.
    pub fn write_days_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for d in &self.days {
            w.serialize(d)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct DayResult {
    cost: DayCost,
    profits: Vec<f64>,
}

fn settle(market: &Market, label: i64, outcome: &DayOutcome) -> Result<DayResult, BenchmarkError> {
    let inst = market.instance();
    let prices = nodal_prices(market, &outcome.da)?;
    let profits = inst
        .wind
        .farm_nodes()
        .into_iter()
        .map(|n| {
            (0..outcome.da.w.len())
                .map(|t| prices.lambda[t][n] * outcome.da.w[t][n])
                .sum()
        })
        .collect();
    Ok(DayResult {
        cost: DayCost {
            day: label,
            da_cost: outcome.da_cost,
            rt_cost: outcome.rt_cost,
            overall_cost: outcome.overall_cost,
        },
        profits,
    })
}

/// Clears every day of `data` sequentially against its realization and
/// aggregates costs, forecast error and wind revenue. Days run in parallel.
pub fn evaluate(
    source: ForecastSource<'_>,
    data: &Dataset,
    market: &Market,
) -> Result<EvaluationReport, BenchmarkError> {
    let inst = market.instance();
    data.check_instance(inst)?;
    let forecasts: Option<Vec<Vec<Vec<f64>>>> = match source {
        ForecastSource::Model(m) => Some(predict(m, data)?),
        ForecastSource::Forecasts(f) => Some(f.to_vec()),
        ForecastSource::Perfect => Some(data.days.iter().map(|d| d.actual.clone()).collect()),
        ForecastSource::Schedules(s) => {
            if s.len() != data.len() {
                return Err(BenchmarkError::Dimension {
                    what: "schedules",
                    expected: data.len(),
                    got: s.len(),
                });
            }
            None
        }
    };
    if let Some(f) = &forecasts {
        if f.len() != data.len() {
            return Err(BenchmarkError::Dimension {
                what: "forecast days",
                expected: data.len(),
                got: f.len(),
            });
        }
    }

    let results: Vec<Result<Option<DayResult>, BenchmarkError>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let day = &data.days[i];
            let loads = loads_for(inst, day.label);
            let y = to_nodal(inst, &day.actual);
            let outcome = match (&forecasts, source) {
                (Some(f), _) => market.simulate(loads, &to_nodal(inst, &f[i]), &y, None),
                (None, ForecastSource::Schedules(s)) => {
                    market.run_real_time(loads, s[i].clone(), &y, None)
                }
                (None, _) => unreachable!("only schedules come without forecasts"),
            };
            match outcome {
                Ok(o) => settle(market, day.label, &o).map(Some),
                Err(e) if e.is_infeasible() => {
                    log::warn!("day {} excluded: {e}", day.label);
                    Ok(None)
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect();

    let farms = inst.wind.farm_count();
    let mut days = Vec::new();
    let mut infeasible = Vec::new();
    let mut profits = vec![0.0; farms];
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(d) => {
                for (a, b) in profits.iter_mut().zip(&d.profits) {
                    *a += b;
                }
                days.push(d.cost);
            }
            None => infeasible.push(data.days[i].label),
        }
    }
    let n = days.len().max(1) as f64;
    let mean = |f: fn(&DayCost) -> f64| days.iter().map(f).sum::<f64>() / n;
    let rmse = forecasts.map(|f| {
        let (mut s, mut c) = (0.0, 0usize);
        for (fd, d) in f.iter().zip(&data.days) {
            for (fh, ah) in fd.iter().zip(&d.actual) {
                for (a, b) in fh.iter().zip(ah) {
                    s += (a - b).powi(2);
                    c += 1;
                }
            }
        }
        if c > 0 {
            (s / c as f64).sqrt()
        } else {
            0.0
        }
    });
    Ok(EvaluationReport {
        rmse,
        mean_overall_cost: mean(|d| d.overall_cost),
        mean_da_cost: mean(|d| d.da_cost),
        mean_rt_cost: mean(|d| d.rt_cost),
        wind_profits: profits.into_iter().map(|p| p / n).collect(),
        days,
        infeasible,
    })
}

/// Day features flattened over hours, for neighbour search.
fn day_vector(day: &crate::data::DayRecord) -> Vec<f64> {
    day.features.iter().flatten().copied().collect()
}

/// How neighbours are matched when building scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighbours {
    /// Whole training days, matched on their features over all hours.
    Days,
    /// Training hours, matched hour by hour; scenario `s` takes the `s`-th
    /// nearest training hour at every hour of the day.
    Hours,
}

/// Equiprobable scenarios for one day of `test` from the `k` nearest
/// neighbours in `train`, as stacked nodal profiles.
pub fn day_scenarios(
    market: &Market,
    train: &Dataset,
    day: &crate::data::DayRecord,
    k: usize,
    mode: Neighbours,
) -> Result<Vec<Vec<f64>>, BenchmarkError> {
    let inst = market.instance();
    match mode {
        Neighbours::Days => {
            let features: Vec<Vec<f64>> = train.days.iter().map(day_vector).collect();
            let realizations: Vec<Vec<f64>> = train
                .days
                .iter()
                .map(|d| to_nodal(inst, &d.actual))
                .collect();
            Ok(knn_scenarios(&features, &realizations, &day_vector(day), k)?.profiles)
        }
        Neighbours::Hours => {
            let features: Vec<Vec<f64>> = train
                .days
                .iter()
                .flat_map(|d| d.features.iter().cloned())
                .collect();
            let realizations: Vec<Vec<f64>> = train
                .days
                .iter()
                .flat_map(|d| d.actual.iter().cloned())
                .collect();
            let mut hours: Vec<Vec<Vec<f64>>> = Vec::with_capacity(day.features.len());
            for q in &day.features {
                hours.push(knn_scenarios(&features, &realizations, q, k)?.profiles);
            }
            Ok((0..k)
                .map(|s| {
                    let per_farm: Vec<Vec<f64>> = hours.iter().map(|h| h[s].clone()).collect();
                    to_nodal(inst, &per_farm)
                })
                .collect())
        }
    }
}

/// Stochastic DA schedules for every day of `test`, each cleared against
/// `k` equiprobable neighbour scenarios from `train`. Days run in parallel.
pub fn stochastic_schedules(
    market: &Market,
    train: &Dataset,
    test: &Dataset,
    k: usize,
    mode: Neighbours,
) -> Result<Vec<DaDecision>, BenchmarkError> {
    let inst = market.instance();
    train.check_instance(inst)?;
    test.check_instance(inst)?;
    test.days
        .par_iter()
        .map(|day| {
            let s = day_scenarios(market, train, day, k, mode)?;
            let sched = stochastic_clearing(market, loads_for(inst, day.label), &s, None)?;
            Ok(sched.da)
        })
        .collect()
}
