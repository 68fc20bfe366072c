//! Day-ahead and real-time clearing.
//!
//! Vector layouts (zero-based, `N` nodes, `T` hours):
//!
//! * DA decision `x = [x_1; ..; x_T]`, `x_t = [p_t; w_t]`, so `p[t][n]` sits
//!   at `2Nt + n` and `w[t][n]` at `2Nt + N + n`.
//! * Forecast `yhat[t][n]` sits at `Nt + n`.
//! * RT decision `z_t = [p_up; p_down; spill]`.
//! * RT parameters: hour 1 takes `[p*_1; w*_1]`, later hours take
//!   `[p*_t; w*_t; p*_{t-1}; p_up_{t-1}; p_down_{t-1}]`.

mod build;
mod day;
mod report;

pub use build::{build_da, build_rt, build_rt_first, DaLayout, RtLayout};
pub use day::{simulate_day, DaDecision, DayOutcome, Market, RtDecision, WarmStart};
pub use report::{outcome_rows, write_outcome_csv, OutcomeRow, OutcomeSummary};

use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearingError {
    #[error("day-ahead clearing failed: {0}")]
    DayAhead(#[source] LpError),
    #[error("real-time clearing failed at hour {hour}: {source}")]
    RealTime {
        /// One-based hour.
        hour: usize,
        #[source]
        source: LpError,
    },
    #[error("invalid input: {0}")]
    Input(String),
}

impl ClearingError {
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            ClearingError::DayAhead(LpError::Infeasible { .. })
                | ClearingError::RealTime {
                    source: LpError::Infeasible { .. },
                    ..
                }
        )
    }
}

/// Index sets that locate the slices of the stacked vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexMap {
    pub nodes: usize,
    pub horizon: usize,
}

impl IndexMap {
    pub fn new(nodes: usize, horizon: usize) -> Self {
        IndexMap { nodes, horizon }
    }

    pub fn da_len(&self) -> usize {
        2 * self.nodes * self.horizon
    }

    pub fn forecast_len(&self) -> usize {
        self.nodes * self.horizon
    }

    /// Rows of `x_d` holding `x_t`.
    pub fn hour(&self, t: usize) -> std::ops::Range<usize> {
        2 * self.nodes * t..2 * self.nodes * (t + 1)
    }

    /// Rows of `x_d` holding `p_t`.
    pub fn hour_p(&self, t: usize) -> std::ops::Range<usize> {
        2 * self.nodes * t..2 * self.nodes * t + self.nodes
    }

    pub fn p(&self, t: usize, n: usize) -> usize {
        2 * self.nodes * t + n
    }

    pub fn w(&self, t: usize, n: usize) -> usize {
        2 * self.nodes * t + self.nodes + n
    }

    /// Entries of `yhat_d` for hour `t`.
    pub fn forecast(&self, t: usize) -> std::ops::Range<usize> {
        self.nodes * t..self.nodes * (t + 1)
    }

    pub fn yhat(&self, t: usize, n: usize) -> usize {
        self.nodes * t + n
    }

    /// Rows of `z_t` holding `[p_up; p_down]`.
    pub fn pm(&self) -> std::ops::Range<usize> {
        0..2 * self.nodes
    }

    pub fn rt_len(&self) -> usize {
        3 * self.nodes
    }

    /// Parameter count of the RT problem at zero-based hour `t`.
    pub fn rt_params(&self, t: usize) -> usize {
        if t == 0 {
            2 * self.nodes
        } else {
            5 * self.nodes
        }
    }
}
