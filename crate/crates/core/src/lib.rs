//! Value-oriented forecasting of renewable output for sequential
//! day-ahead and real-time market clearing.
//!
//! Both markets are linear programs in a compact form whose right-hand side
//! moves with the forecast. Around an optimum the solution is an affine
//! function of that parameter, so the cost of a whole day of clearings is a
//! piecewise-linear function of the forecast with an analytic gradient.
//! A small residual network is trained against that cost.
//!
//! Modules, bottom-up:
//!
//! - [`sysmodel`]: networks, generator fleets, wind farms, loads.
//! - [`lp`]: the compact LP form, a dual simplex and affine local policies.
//! - [`clearing`]: DA and hourly RT clearing of one day.
//! - [`policies`]: local maps of each clearing, chained across the day.
//! - [`loss`]: the loss, its gradient and the policy buffer.
//! - [`data`]: datasets, CSV input and a synthetic generator.
//! - [`forecaster`]: the network and its training loops.
//! - [`benchmarks`]: quantile and stochastic competitors, evaluation.
//! - [`properties`]: nodal prices and settlement checks.

pub mod benchmarks;
pub mod cases;
pub mod clearing;
pub mod data;
pub mod forecaster;
pub mod loss;
pub mod lp;
pub mod policies;
pub mod properties;
pub mod sysmodel;

/// The guide's chapters, compiled so their code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/instances.md")]
    mod instances {}
    #[doc = include_str!("../../../book/src/lp.md")]
    mod lp {}
    #[doc = include_str!("../../../book/src/clearing.md")]
    mod clearing {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/loss.md")]
    mod loss {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/properties.md")]
    mod properties {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

use thiserror::Error;

/// Any error of the library, for callers that do not care which stage
/// failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Instance(#[from] sysmodel::InstanceError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Clearing(#[from] clearing::ClearingError),
    #[error(transparent)]
    Policy(#[from] policies::PolicyError),
    #[error(transparent)]
    Loss(#[from] loss::LossError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Forecast(#[from] forecaster::ForecastError),
    #[error(transparent)]
    Benchmark(#[from] benchmarks::BenchmarkError),
    #[error(transparent)]
    Property(#[from] properties::PropertyError),
}

/// Coarse classes of failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input.
    Validation,
    /// A clearing program has no feasible point.
    Infeasible,
    /// Anything else: numerical trouble, I/O.
    Other,
}

fn lp_kind(e: &lp::LpError) -> ErrorKind {
    match e {
        lp::LpError::Infeasible { .. } => ErrorKind::Infeasible,
        lp::LpError::Dimension { .. } | lp::LpError::NonFinite(_) => ErrorKind::Validation,
        _ => ErrorKind::Other,
    }
}

fn clearing_kind(e: &clearing::ClearingError) -> ErrorKind {
    use clearing::ClearingError as C;
    match e {
        C::Input(_) => ErrorKind::Validation,
        C::DayAhead(l) | C::RealTime { source: l, .. } => lp_kind(l),
    }
}

fn loss_kind(e: &loss::LossError) -> ErrorKind {
    match e {
        loss::LossError::Clearing(c) => clearing_kind(c),
        loss::LossError::Identity { .. } => ErrorKind::Other,
    }
}

fn forecast_kind(e: &forecaster::ForecastError) -> ErrorKind {
    use forecaster::ForecastError as F;
    match e {
        F::Dimension { .. } | F::Format(_) | F::Version { .. } | F::Config(_) | F::Data(_) => {
            ErrorKind::Validation
        }
        F::TooManySkipped { .. } => ErrorKind::Infeasible,
        F::Loss(l) => loss_kind(l),
        F::Io { .. } => ErrorKind::Other,
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use benchmarks::BenchmarkError as B;
        match self {
            Error::Instance(_) | Error::Data(_) | Error::Policy(_) => ErrorKind::Validation,
            Error::Lp(e) => lp_kind(e),
            Error::Clearing(e) => clearing_kind(e),
            Error::Loss(e) => loss_kind(e),
            Error::Forecast(e) => forecast_kind(e),
            Error::Property(_) => ErrorKind::Validation,
            Error::Benchmark(b) => match b {
                B::Master(l) | B::Recourse { source: l, .. } | B::Lp(l) => lp_kind(l),
                B::Clearing(c) => clearing_kind(c),
                B::Forecast(f) => forecast_kind(f),
                B::NotConverged(_) => ErrorKind::Other,
                _ => ErrorKind::Validation,
            },
        }
    }
}
