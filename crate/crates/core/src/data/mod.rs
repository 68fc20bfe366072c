//! Wind datasets: per day and hour, a context vector for every farm and the
//! realized output of every farm.

mod csvio;
mod synth;

pub use csvio::{load_csv, save_csv, ACTUALS_FILE, FEATURES_FILE, MANIFEST_FILE};
pub use synth::{generate, NoiseModel, SynthConfig, SynthModel};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sysmodel::MarketInstance;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("day {day} is missing hour {hour} for farm {farm}")]
    MissingHour { day: i64, hour: usize, farm: usize },
    #[error("day {day} hour {hour} farm {farm}: actual {value} outside [0, {cap}]")]
    OutOfRange {
        day: i64,
        hour: usize,
        farm: usize,
        value: f64,
        cap: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub label: i64,
    /// `features[t]` holds `feature_dim` entries per farm, farm-major.
    pub features: Vec<Vec<f64>>,
    /// `actual[t][farm]` in MW.
    pub actual: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_dim: usize,
    pub horizon: usize,
    /// Capacity of each farm in MW.
    pub caps: Vec<f64>,
    pub days: Vec<DayRecord>,
}

impl Dataset {
    pub fn farms(&self) -> usize {
        self.caps.len()
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Width of one network input: all farms' features for one hour.
    pub fn input_dim(&self) -> usize {
        self.farms() * self.feature_dim
    }

    /// Chronological split: the first `fraction` of days train.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset), DataError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(DataError::Config(format!(
                "split fraction {fraction} outside (0, 1)"
            )));
        }
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let cut = cut.clamp(1.min(self.len()), self.len());
        Ok((self.subset(0..cut), self.subset(cut..self.len())))
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            feature_dim: self.feature_dim,
            horizon: self.horizon,
            caps: self.caps.clone(),
            days: self.days[range].to_vec(),
        }
    }

    /// Checks that every value sits inside its farm's box and every day has
    /// `horizon` hours of the right width.
    pub fn validate(&self) -> Result<(), DataError> {
        let width = self.input_dim();
        for d in &self.days {
            if d.features.len() != self.horizon || d.actual.len() != self.horizon {
                let hour = d.features.len().min(d.actual.len()) + 1;
                return Err(DataError::MissingHour {
                    day: d.label,
                    hour,
                    farm: 1,
                });
            }
            for (t, (s, y)) in d.features.iter().zip(&d.actual).enumerate() {
                if s.len() != width || y.len() != self.farms() {
                    return Err(DataError::Schema(format!(
                        "day {} hour {} has {} features and {} actuals",
                        d.label,
                        t + 1,
                        s.len(),
                        y.len()
                    )));
                }
                for (f, (&v, &cap)) in y.iter().zip(&self.caps).enumerate() {
                    if !(0.0..=cap).contains(&v) {
                        return Err(DataError::OutOfRange {
                            day: d.label,
                            hour: t + 1,
                            farm: f + 1,
                            value: v,
                            cap,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that the farms line up with the instance's wind nodes.
    pub fn check_instance(&self, inst: &MarketInstance) -> Result<(), DataError> {
        let caps = inst.wind.farm_capacities();
        if caps.len() != self.farms() || self.horizon != inst.horizon() {
            return Err(DataError::Schema(format!(
                "dataset has {} farms over {} hours, instance has {} farms over {} hours",
                self.farms(),
                self.horizon,
                caps.len(),
                inst.horizon()
            )));
        }
        for (f, (a, b)) in caps.iter().zip(&self.caps).enumerate() {
            if (a - b).abs() > 1e-9 {
                return Err(DataError::Schema(format!(
                    "farm {} capacity {b} differs from the instance's {a}",
                    f + 1
                )));
            }
        }
        Ok(())
    }
}

/// Loads of the dataset day labelled `label`: the instance's load day with
/// the same position, wrapping around the stored days.
pub fn loads_for(inst: &MarketInstance, label: i64) -> &[Vec<f64>] {
    inst.loads
        .day(label.rem_euclid(inst.loads.len() as i64) as usize)
}

/// Spreads per-farm hourly values (`[t][farm]`) onto the stacked nodal
/// vector of a market instance.
pub fn to_nodal(inst: &MarketInstance, per_farm: &[Vec<f64>]) -> Vec<f64> {
    let n = inst.node_count();
    let nodes = inst.wind.farm_nodes();
    let mut out = vec![0.0; n * per_farm.len()];
    for (t, row) in per_farm.iter().enumerate() {
        for (f, &node) in nodes.iter().enumerate() {
            out[n * t + node] = row[f];
        }
    }
    out
}

/// Inverse of [`to_nodal`].
pub fn from_nodal(inst: &MarketInstance, stacked: &[f64]) -> Vec<Vec<f64>> {
    let n = inst.node_count();
    let nodes = inst.wind.farm_nodes();
    stacked
        .chunks(n)
        .map(|hour| nodes.iter().map(|&node| hour[node]).collect())
        .collect()
}
