//! The value-oriented loss of one day and its gradient in the forecast.
//!
//! The loss is the sum of the dual objectives of the DA clearing and of the
//! hourly RT clearings. Its gradient adds `-sigma' F_y` from the DA problem
//! to `-zeta_t' F_t D_t` for every RT hour, where `D_t` is the derivative of
//! that hour's parameter vector with respect to the forecast.

mod buffer;
mod check;

pub use buffer::{BufferKey, BufferStats, Family, PolicyBuffer};
pub use check::{gradient_check, sweep_loss, CoordinateCheck, GradientCheck, SweepPoint};

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::clearing::{ClearingError, DayOutcome, Market, WarmStart};
use crate::lp::{ActiveSetSignature, CompactLp, LpError, LpSolution};
use crate::policies::local_map;

/// Relative tolerance of the loss-equals-cost check.
pub const IDENTITY_TOL: f64 = 1e-5;
/// Forecast step of the forward-difference fallback, in MW.
pub const FALLBACK_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error("dual loss {value} differs from the overall cost {cost}")]
    Identity { value: f64, cost: f64 },
}

#[derive(Debug, Clone)]
pub struct LossEvaluation {
    /// Sum of the dual objectives.
    pub value: f64,
    pub gradient: Vec<f64>,
    /// DA signature followed by one per RT hour.
    pub signatures: Vec<ActiveSetSignature>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    /// Some map in the chain is one-sided.
    pub boundary: bool,
    /// The gradient came from forward differences.
    pub fallback: bool,
    pub outcome: DayOutcome,
}

impl LossEvaluation {
    pub fn overall_cost(&self) -> f64 {
        self.outcome.overall_cost
    }

    /// Digest of the whole signature chain.
    pub fn chain_digest(&self) -> u64 {
        chain_digest(&self.signatures)
    }
}

pub fn chain_digest(signatures: &[ActiveSetSignature]) -> u64 {
    use std::hash::{DefaultHasher, Hash, Hasher};
    let mut h = DefaultHasher::new();
    for s in signatures {
        s.digest().hash(&mut h);
    }
    h.finish()
}

fn signatures_of(outcome: &DayOutcome) -> Vec<ActiveSetSignature> {
    let mut out = vec![outcome.da.solution.signature(&outcome.da.lp)];
    out.extend(outcome.rt.iter().map(|r| r.solution.signature(&r.lp)));
    out
}

/// `F' sigma`.
fn f_transpose(lp: &CompactLp, sigma: &[f64]) -> DVector<f64> {
    DVector::from_vec(lp.shape.f().tr_mul_vec(sigma))
}

enum Derivative {
    Ready(Arc<DMatrix<f64>>),
    Degenerate,
}

struct Lookup<'a> {
    buffer: &'a PolicyBuffer,
    hits: usize,
    misses: usize,
    boundary: bool,
}

impl Lookup<'_> {
    fn derivative(
        &mut self,
        key: BufferKey,
        lp: &CompactLp,
        sol: &LpSolution,
        omega: &[f64],
        directions: Option<&DMatrix<f64>>,
    ) -> Derivative {
        if let Some(m) = self.buffer.get(&key) {
            self.hits += 1;
            return Derivative::Ready(m);
        }
        self.misses += 1;
        match local_map(lp, sol, omega, directions) {
            Ok(map) => {
                self.boundary |= map.boundary;
                if map.region_exact {
                    Derivative::Ready(self.buffer.insert(key, map.a))
                } else {
                    Derivative::Ready(Arc::new(map.a))
                }
            }
            Err(LpError::DegenerateActiveSet { .. }) => Derivative::Degenerate,
            Err(e) => {
                log::warn!("local map failed: {e}");
                Derivative::Degenerate
            }
        }
    }
}

/// Evaluates the loss and its gradient for one day.
pub fn evaluate(
    market: &Market,
    loads: &[Vec<f64>],
    forecast: &[f64],
    realization: &[f64],
    buffer: &PolicyBuffer,
) -> Result<LossEvaluation, LossError> {
    evaluate_warm(market, loads, forecast, realization, buffer, None)
}

/// [`evaluate`] with solver bases from an earlier, similar day.
pub fn evaluate_warm(
    market: &Market,
    loads: &[Vec<f64>],
    forecast: &[f64],
    realization: &[f64],
    buffer: &PolicyBuffer,
    warm: Option<&WarmStart>,
) -> Result<LossEvaluation, LossError> {
    let outcome = market.simulate(loads, forecast, realization, warm)?;
    let idx = market.index();
    let n = idx.nodes;
    let k = idx.forecast_len();
    let signatures = signatures_of(&outcome);
    let mut look = Lookup {
        buffer,
        hits: 0,
        misses: 0,
        boundary: false,
    };

    let da = &outcome.da;
    let mut value = da.solution.dual_objective;
    let mut gradient = -f_transpose(&da.lp, &da.solution.sigma);
    let da_key = BufferKey {
        family: Family::DayAhead,
        hour: 0,
        signature: signatures[0].clone(),
    };
    let mut degenerate = false;
    let ax = match look.derivative(da_key, &da.lp, &da.solution, forecast, None) {
        Derivative::Ready(m) => Some(m),
        Derivative::Degenerate => {
            degenerate = true;
            None
        }
    };

    let mut pm_prev = DMatrix::<f64>::zeros(2 * n, k);
    for (t, rt) in outcome.rt.iter().enumerate() {
        value += rt.solution.dual_objective;
        let Some(ax) = ax.as_ref() else { continue };
        if degenerate {
            continue;
        }
        let p = idx.rt_params(t);
        let mut d = DMatrix::<f64>::zeros(p, k);
        d.rows_mut(0, 2 * n)
            .copy_from(&ax.rows(idx.hour(t).start, 2 * n));
        if t > 0 {
            d.rows_mut(2 * n, n)
                .copy_from(&ax.rows(idx.hour_p(t - 1).start, n));
            d.rows_mut(3 * n, 2 * n).copy_from(&pm_prev);
        }
        let key = BufferKey {
            family: if t == 0 {
                Family::RealTimeFirst
            } else {
                Family::RealTime
            },
            hour: t,
            signature: signatures[t + 1].clone(),
        };
        match look.derivative(key, &rt.lp, &rt.solution, &rt.params, Some(&d)) {
            Derivative::Ready(kt) => {
                let v = f_transpose(&rt.lp, &rt.solution.sigma);
                gradient -= d.tr_mul(&v);
                pm_prev = kt.rows(0, 2 * n) * &d;
            }
            Derivative::Degenerate => degenerate = true,
        }
    }

    let cost = outcome.overall_cost;
    if (value - cost).abs() > IDENTITY_TOL * (1.0 + cost.abs()) {
        return Err(LossError::Identity { value, cost });
    }

    let mut eval = LossEvaluation {
        value,
        gradient: gradient.as_slice().to_vec(),
        signatures,
        cache_hits: look.hits,
        cache_misses: look.misses,
        boundary: look.boundary || degenerate,
        fallback: false,
        outcome,
    };
    if degenerate {
        log::debug!("degenerate active set; using forward differences");
        eval.gradient = forward_difference(market, loads, forecast, realization, &eval.outcome)?;
        eval.fallback = true;
    }
    Ok(eval)
}

/// Forward differences of the overall cost in every wind coordinate; steps
/// go backwards at the capacity.
fn forward_difference(
    market: &Market,
    loads: &[Vec<f64>],
    forecast: &[f64],
    realization: &[f64],
    base: &DayOutcome,
) -> Result<Vec<f64>, LossError> {
    let idx = market.index();
    let cap = &market.instance().wind.capacity;
    let warm = base.warm_start();
    let mut grad = vec![0.0; forecast.len()];
    let mut probe = forecast.to_vec();
    for t in 0..idx.horizon {
        for (n, &c) in cap.iter().enumerate() {
            if c <= 0.0 {
                continue;
            }
            let i = idx.yhat(t, n);
            let h = if forecast[i] + FALLBACK_STEP <= c {
                FALLBACK_STEP
            } else {
                -FALLBACK_STEP
            };
            probe[i] = forecast[i] + h;
            let cost = market
                .simulate(loads, &probe, realization, Some(&warm))?
                .overall_cost;
            grad[i] = (cost - base.overall_cost) / h;
            probe[i] = forecast[i];
        }
    }
    Ok(grad)
}

/// Writes `day,coordinate,value,gradient` rows for one evaluation.
pub fn write_trace_csv<W: Write>(out: W, day: i64, eval: &LossEvaluation) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "coordinate", "value", "gradient"])?;
    for (i, g) in eval.gradient.iter().enumerate() {
        w.write_record([
            day.to_string(),
            i.to_string(),
            eval.value.to_string(),
            g.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
