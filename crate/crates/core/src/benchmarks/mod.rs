//! Reference competitors and the evaluation harness: the quantile level
//! that maximizes wind profit, neighbour scenarios, stochastic clearing.

mod evaluate;
mod knn;
mod stochastic;

use thiserror::Error;

use crate::clearing::ClearingError;
use crate::data::DataError;
use crate::forecaster::ForecastError;
use crate::lp::LpError;
use crate::properties::PropertyError;
use crate::sysmodel::MarketInstance;

pub use crate::forecaster::train_quantile;
pub use evaluate::{
    day_scenarios, evaluate, stochastic_schedules, DayCost, EvaluationReport, ForecastSource,
    Neighbours,
};
pub use knn::{knn_scenarios, Scenarios};
pub use stochastic::{
    stochastic_clearing, stochastic_clearing_with, BendersOptions, StochasticSchedule,
};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("instance has no generator")]
    NoGenerator,
    #[error("regulation prices give no valid level: need rho_minus < rho < rho_plus, got {rho_minus} / {rho} / {rho_plus}")]
    Prices {
        rho: f64,
        rho_plus: f64,
        rho_minus: f64,
    },
    #[error("training set is empty")]
    EmptyTraining,
    #[error("asked for {k} neighbours out of {available}")]
    Neighbours { k: usize, available: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("scenario probabilities must be nonnegative and sum to one (sum {0})")]
    Probabilities(f64),
    #[error("stochastic master program: {0}")]
    Master(LpError),
    #[error("recourse at hour {hour}: {source}")]
    Recourse {
        hour: usize,
        #[source]
        source: LpError,
    },
    #[error("decomposition did not converge in {0} iterations")]
    NotConverged(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Property(#[from] PropertyError),
}

/// `(rho - rho_minus) / (rho_plus - rho_minus)` of the cheapest generator:
/// the quantile at which over- and under-forecasting cost the same at the
/// margin.
pub fn optimal_nominal_level(inst: &MarketInstance) -> Result<f64, BenchmarkError> {
    let g = &inst.generators;
    let n = g.cheapest().ok_or(BenchmarkError::NoGenerator)?;
    let (rho, rho_plus, rho_minus) = (g.rho[n], g.rho_plus[n], g.rho_minus[n]);
    if !(rho_minus <= rho && rho <= rho_plus && rho_minus < rho_plus) {
        return Err(BenchmarkError::Prices {
            rho,
            rho_plus,
            rho_minus,
        });
    }
    Ok((rho - rho_minus) / (rho_plus - rho_minus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::sysmodel::GeneratorFleet;

    fn with_prices(rho: f64, plus: f64, minus: f64) -> MarketInstance {
        let mut inst = cases::iso1();
        inst.generators.rho[0] = rho;
        inst.generators.rho_plus[0] = plus;
        inst.generators.rho_minus[0] = minus;
        inst
    }

    #[test]
    fn nominal_level_of_the_bundled_costs() {
        assert_eq!(optimal_nominal_level(&cases::iso1()).unwrap(), 1.0 / 16.0);
        assert_eq!(
            optimal_nominal_level(&with_prices(20.0, 25.0, 15.0)).unwrap(),
            0.5
        );
        assert!(optimal_nominal_level(&with_prices(20.0, 50.0, 19.999)).unwrap() < 1e-4);
    }

    #[test]
    fn nominal_level_needs_a_generator_and_ordered_prices() {
        let mut inst = cases::iso1();
        inst.generators = GeneratorFleet::empty(1);
        assert!(matches!(
            optimal_nominal_level(&inst),
            Err(BenchmarkError::NoGenerator)
        ));
        assert!(matches!(
            optimal_nominal_level(&with_prices(20.0, 18.0, 15.0)),
            Err(BenchmarkError::Prices { .. })
        ));
    }
}
