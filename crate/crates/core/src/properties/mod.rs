//! Nodal prices from the day-ahead duals and the two settlement checks:
//! every scheduled producer earns a nonnegative profit, and load payments
//! cover producer revenue plus congestion rent.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::{DaDecision, Market};

/// Relative tolerance of both property checks.
pub const PROPERTY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropertyError {
    #[error("day-ahead solution carries {got} multipliers, the program has {expected} rows")]
    MissingDuals { expected: usize, got: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Hourly nodal prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    /// `lambda[t][n]` in $/MWh.
    pub lambda: Vec<Vec<f64>>,
    /// Energy component per hour.
    pub gamma: Vec<f64>,
    /// `mu_min - mu_max` per hour and line.
    pub congestion: Vec<Vec<f64>>,
    /// The multipliers may not be unique, so other valid prices exist.
    pub degenerate: bool,
}

impl PriceSeries {
    pub fn horizon(&self) -> usize {
        self.lambda.len()
    }

    /// Whether every node of hour `t` has the same price within `tol`.
    pub fn uniform(&self, t: usize, tol: f64) -> bool {
        let l = &self.lambda[t];
        l.iter().all(|v| (v - l[0]).abs() <= tol)
    }
}

/// `lambda = gamma 1 + H' (mu_min - mu_max)` from the DA multipliers.
///
/// With the balance row written as the pair `(le, ge)`, raising the load by
/// one unit moves the dual objective by `sigma_ge - sigma_le`, which is
/// `gamma`.
pub fn nodal_prices(market: &Market, da: &DaDecision) -> Result<PriceSeries, PropertyError> {
    let inst = market.instance();
    let layout = market.da_layout();
    let sigma = &da.solution.sigma;
    let m = da.lp.shape.m();
    if sigma.len() < m {
        return Err(PropertyError::MissingDuals {
            expected: m,
            got: sigma.len(),
        });
    }
    let net = &inst.network;
    let n_nodes = inst.node_count();
    let mut lambda = Vec::with_capacity(layout.balance.len());
    let mut gamma = Vec::with_capacity(layout.balance.len());
    let mut congestion = Vec::with_capacity(layout.balance.len());
    for (t, &(le, ge)) in layout.balance.iter().enumerate() {
        let g = sigma[ge] - sigma[le];
        let mu: Vec<f64> = layout.flow_min[t]
            .iter()
            .zip(&layout.flow_max[t])
            .map(|(&lo, &hi)| sigma[lo] - sigma[hi])
            .collect();
        let l = (0..n_nodes)
            .map(|n| {
                g + (0..net.line_count())
                    .map(|k| net.ptdf(k, n) * mu[k])
                    .sum::<f64>()
            })
            .collect();
        lambda.push(l);
        gamma.push(g);
        congestion.push(mu);
    }
    Ok(PriceSeries {
        lambda,
        gamma,
        congestion,
        degenerate: da.solution.possibly_nonunique(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfit {
    /// Zero-based node.
    pub node: usize,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecoveryReport {
    pub generators: Vec<AgentProfit>,
    pub wind: Vec<AgentProfit>,
    /// Absolute tolerance the profits were held to.
    pub tolerance: f64,
    pub violations: Vec<String>,
}

impl CostRecoveryReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueReport {
    pub load_payment: f64,
    pub generator_revenue: f64,
    pub wind_revenue: f64,
    /// `sum_k (mu_max - mu_min)_k f_k` over hours and lines.
    pub congestion_rent: f64,
    /// Load payment minus everything it funds.
    pub residual: f64,
    pub tolerance: f64,
    pub violations: Vec<String>,
}

impl RevenueReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_horizon(da: &DaDecision, prices: &PriceSeries) -> Result<(), PropertyError> {
    if prices.horizon() != da.p.len() {
        return Err(PropertyError::Dimension {
            what: "price hours",
            expected: da.p.len(),
            got: prices.horizon(),
        });
    }
    Ok(())
}

/// Scale of the money flows of a day, for relative tolerances.
fn money_scale(da: &DaDecision, prices: &PriceSeries) -> f64 {
    let mut s = 0.0;
    for (t, l) in prices.lambda.iter().enumerate() {
        for (n, v) in l.iter().enumerate() {
            s += v.abs() * (da.p[t][n] + da.w[t][n]);
        }
    }
    1.0 + s
}

/// Generator profits `sum_t (lambda - rho) p` and wind profits
/// `sum_t lambda w`, each required to be at least `-PROPERTY_TOL * scale`.
pub fn check_cost_recovery(
    market: &Market,
    da: &DaDecision,
    prices: &PriceSeries,
) -> Result<CostRecoveryReport, PropertyError> {
    check_horizon(da, prices)?;
    let inst = market.instance();
    let tolerance = PROPERTY_TOL * money_scale(da, prices);
    let profit = |n: usize, unit: &dyn Fn(usize) -> f64, q: &[Vec<f64>]| -> f64 {
        (0..da.p.len())
            .map(|t| (prices.lambda[t][n] - unit(n)) * q[t][n])
            .sum()
    };
    let rho = |n: usize| inst.generators.rho[n];
    let free = |_: usize| 0.0;
    let generators: Vec<AgentProfit> = inst
        .generators
        .nodes()
        .map(|n| AgentProfit {
            node: n,
            profit: profit(n, &rho, &da.p),
        })
        .collect();
    let wind: Vec<AgentProfit> = inst
        .wind
        .farm_nodes()
        .into_iter()
        .map(|n| AgentProfit {
            node: n,
            profit: profit(n, &free, &da.w),
        })
        .collect();
    let mut violations = Vec::new();
    for (kind, list) in [("generator", &generators), ("wind farm", &wind)] {
        for a in list.iter().filter(|a| a.profit < -tolerance) {
            violations.push(format!(
                "{kind} at node {} loses {:.6e}",
                a.node + 1,
                -a.profit
            ));
        }
    }
    Ok(CostRecoveryReport {
        generators,
        wind,
        tolerance,
        violations,
    })
}

/// Load payments against producer revenue plus congestion rent. The rent
/// is computed from line flows and line multipliers, independently of the
/// nodal prices, so the balance is a real check.
pub fn check_revenue_adequacy(
    market: &Market,
    loads: &[Vec<f64>],
    da: &DaDecision,
    prices: &PriceSeries,
) -> Result<RevenueReport, PropertyError> {
    check_horizon(da, prices)?;
    if loads.len() != da.p.len() {
        return Err(PropertyError::Dimension {
            what: "load hours",
            expected: da.p.len(),
            got: loads.len(),
        });
    }
    let net = &market.instance().network;
    let (mut load_payment, mut generator_revenue, mut wind_revenue, mut congestion_rent) =
        (0.0, 0.0, 0.0, 0.0);
    for t in 0..da.p.len() {
        let lam = &prices.lambda[t];
        let injection: Vec<f64> = (0..lam.len())
            .map(|n| da.p[t][n] + da.w[t][n] - loads[t][n])
            .collect();
        for n in 0..lam.len() {
            load_payment += lam[n] * loads[t][n];
            generator_revenue += lam[n] * da.p[t][n];
            wind_revenue += lam[n] * da.w[t][n];
        }
        let flows = net.flows(&injection);
        congestion_rent -= prices.congestion[t]
            .iter()
            .zip(&flows)
            .map(|(mu, f)| mu * f)
            .sum::<f64>();
    }
    let residual = load_payment - generator_revenue - wind_revenue - congestion_rent;
    let tolerance = PROPERTY_TOL * money_scale(da, prices).max(1.0 + load_payment.abs());
    let mut violations = Vec::new();
    if residual.abs() > tolerance {
        violations.push(format!("payments do not balance: residual {residual:.6e}"));
    }
    if congestion_rent < -tolerance {
        violations.push(format!("negative congestion rent {congestion_rent:.6e}"));
    }
    Ok(RevenueReport {
        load_payment,
        generator_revenue,
        wind_revenue,
        congestion_rent,
        residual,
        tolerance,
        violations,
    })
}

/// Prices and both checks for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub prices: PriceSeries,
    pub cost_recovery: CostRecoveryReport,
    pub revenue_adequacy: RevenueReport,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        self.cost_recovery.holds() && self.revenue_adequacy.holds()
    }

    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(out, self)
    }
}

pub fn audit(
    market: &Market,
    loads: &[Vec<f64>],
    da: &DaDecision,
) -> Result<PropertyReport, PropertyError> {
    let prices = nodal_prices(market, da)?;
    Ok(PropertyReport {
        cost_recovery: check_cost_recovery(market, da, &prices)?,
        revenue_adequacy: check_revenue_adequacy(market, loads, da, &prices)?,
        prices,
    })
}
