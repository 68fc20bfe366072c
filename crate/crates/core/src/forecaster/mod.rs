//! A four-layer residual network with a capacity-scaled sigmoid output:
//!
//! ```text
//! h1 = relu(W1 s + b1)
//! h2 = relu(W2 h1 + b2)
//! h3 = relu(W3 h2 + b3) + h1
//! y  = cap * sigmoid(W4 h3 + b4)
//! ```
//!
//! Inputs are z-scored with statistics of the training split before the
//! first layer, so every forecast lies in `[0, cap]`.

mod train;

pub use train::{
    predict, train_mse, train_quantile, train_value, EpochRecord, History, OptimizerKind,
    TrainingConfig,
};

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::loss::LossError;

pub const CHECKPOINT_FORMAT: &str = "valcast-resnet";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("epoch {epoch}: {skipped} of {total} days skipped")]
    TooManySkipped {
        epoch: usize,
        skipped: usize,
        total: usize,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Fits to every hour of every day in `data`. Constant features keep
    /// unit scale.
    pub fn fit(data: &Dataset) -> Self {
        let dim = data.input_dim();
        let rows: Vec<&Vec<f64>> = data.days.iter().flat_map(|d| d.features.iter()).collect();
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let count = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / count;
            }
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m).powi(2) / count;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(raw.nrows(), raw.ncols(), |i, j| {
            (raw[(i, j)] - self.mean[i]) / self.scale[i]
        })
    }
}

/// Weights and biases; also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
    pub w4: DMatrix<f64>,
    pub b4: DVector<f64>,
}

impl Params {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Params {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(hidden, hidden),
            b2: DVector::zeros(hidden),
            w3: DMatrix::zeros(hidden, hidden),
            b3: DVector::zeros(hidden),
            w4: DMatrix::zeros(output, hidden),
            b4: DVector::zeros(output),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params::zeros(self.w1.ncols(), self.w1.nrows(), self.w4.nrows())
    }

    /// Every parameter slice in a fixed order.
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.w3.as_slice(),
            self.b3.as_slice(),
            self.w4.as_slice(),
            self.b4.as_slice(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w3.as_mut_slice(),
            self.b3.as_mut_slice(),
            self.w4.as_mut_slice(),
            self.b4.as_mut_slice(),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Params) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Activations kept by [`ResNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: DMatrix<f64>,
    z1: DMatrix<f64>,
    h1: DMatrix<f64>,
    z2: DMatrix<f64>,
    h2: DMatrix<f64>,
    z3: DMatrix<f64>,
    h3: DMatrix<f64>,
    /// `sigmoid(z4)`.
    sig: DMatrix<f64>,
    caps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNet {
    pub params: Params,
    pub scaler: Standardizer,
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn add_bias(mut m: DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        col += b;
    }
    m
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: ResNet,
}

impl ResNet {
    /// Uniform fan-in initialization from `seed`.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::zeros(input, hidden, output);
        let mut fill = |m: &mut DMatrix<f64>| {
            let bound = 1.0 / (m.ncols().max(1) as f64).sqrt();
            m.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..bound));
        };
        fill(&mut p.w1);
        fill(&mut p.w2);
        fill(&mut p.w3);
        fill(&mut p.w4);
        ResNet {
            params: p,
            scaler: Standardizer::identity(input),
        }
    }

    /// A network sized for `data` with its input statistics.
    pub fn for_dataset(data: &Dataset, hidden: usize, seed: u64) -> Self {
        let mut m = ResNet::new(data.input_dim(), hidden, data.farms(), seed);
        m.scaler = Standardizer::fit(data);
        m
    }

    pub fn input_dim(&self) -> usize {
        self.params.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.params.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.params.w4.nrows()
    }

    /// Forecasts for the columns of `raw` (one input per column), each row
    /// scaled by its entry of `caps`.
    pub fn forward(
        &self,
        raw: &DMatrix<f64>,
        caps: &[f64],
    ) -> Result<(DMatrix<f64>, ForwardCache), ForecastError> {
        if raw.nrows() != self.input_dim() {
            return Err(ForecastError::Dimension {
                what: "input features",
                expected: self.input_dim(),
                got: raw.nrows(),
            });
        }
        if caps.len() != self.output_dim() {
            return Err(ForecastError::Dimension {
                what: "output caps",
                expected: self.output_dim(),
                got: caps.len(),
            });
        }
        let p = &self.params;
        let x = self.scaler.apply(raw);
        let z1 = add_bias(&p.w1 * &x, &p.b1);
        let h1 = relu(&z1);
        let z2 = add_bias(&p.w2 * &h1, &p.b2);
        let h2 = relu(&z2);
        let z3 = add_bias(&p.w3 * &h2, &p.b3);
        let h3 = relu(&z3) + &h1;
        let z4 = add_bias(&p.w4 * &h3, &p.b4);
        let sig = z4.map(sigmoid);
        let out = DMatrix::from_fn(sig.nrows(), sig.ncols(), |i, j| caps[i] * sig[(i, j)]);
        let cache = ForwardCache {
            x,
            z1,
            h1,
            z2,
            h2,
            z3,
            h3,
            sig,
            caps: caps.to_vec(),
        };
        Ok((out, cache))
    }

    /// Gradient of `sum(upstream .* output)` with respect to the parameters.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &DMatrix<f64>,
    ) -> Result<Params, ForecastError> {
        if upstream.shape() != cache.sig.shape() {
            return Err(ForecastError::Dimension {
                what: "upstream gradient",
                expected: cache.sig.len(),
                got: upstream.len(),
            });
        }
        let p = &self.params;
        let step =
            |z: &DMatrix<f64>, g: DMatrix<f64>| g.zip_map(z, |g, z| if z > 0.0 { g } else { 0.0 });
        let dz4 = DMatrix::from_fn(upstream.nrows(), upstream.ncols(), |i, j| {
            let s = cache.sig[(i, j)];
            upstream[(i, j)] * cache.caps[i] * s * (1.0 - s)
        });
        let dw4 = &dz4 * cache.h3.transpose();
        let db4 = dz4.column_sum();
        let dh3 = p.w4.tr_mul(&dz4);
        let dz3 = step(&cache.z3, dh3.clone());
        let dw3 = &dz3 * cache.h2.transpose();
        let db3 = dz3.column_sum();
        let dz2 = step(&cache.z2, p.w3.tr_mul(&dz3));
        let dw2 = &dz2 * cache.h1.transpose();
        let db2 = dz2.column_sum();
        let dh1 = dh3 + p.w2.tr_mul(&dz2);
        let dz1 = step(&cache.z1, dh1);
        let dw1 = &dz1 * cache.x.transpose();
        let db1 = dz1.column_sum();
        Ok(Params {
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
            w3: dw3,
            b3: db3,
            w4: dw4,
            b4: db4,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ForecastError> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string(&ck).map_err(|e| ForecastError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ForecastError> {
        let text = std::fs::read_to_string(path).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ForecastError::Format(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(ForecastError::Format("not a forecaster checkpoint".into()));
        }
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(ForecastError::Version {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let ck: Checkpoint =
            serde_json::from_value(value).map_err(|e| ForecastError::Format(e.to_string()))?;
        Ok(ck.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn inputs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_weights_give_half_capacity() {
        let m = ResNet {
            params: Params::zeros(3, 4, 2),
            scaler: Standardizer::identity(3),
        };
        let (y, _) = m
            .forward(&DMatrix::from_element(3, 5, 0.7), &[60.0, 0.0])
            .unwrap();
        for j in 0..5 {
            assert_eq!(y[(0, j)], 30.0);
            assert_eq!(y[(1, j)], 0.0);
        }
    }

    #[test]
    fn saturated_output_reaches_the_cap() {
        let mut m = ResNet {
            params: Params::zeros(1, 2, 1),
            scaler: Standardizer::identity(1),
        };
        m.params.b4[0] = 40.0;
        let (y, _) = m.forward(&DMatrix::zeros(1, 1), &[105.0]).unwrap();
        assert!((y[(0, 0)] - 105.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let m = ResNet::new(3, 4, 1, 0);
        assert!(m.forward(&DMatrix::zeros(2, 1), &[1.0]).is_err());
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ResNet::new(3, 4, 2, 9);
        let x = inputs(&mut rng, 3, 6);
        let caps = [2.0, 3.0];
        let u = inputs(&mut rng, 2, 6);
        let (_, cache) = m.forward(&x, &caps).unwrap();
        let g = m.backward(&cache, &u).unwrap().flatten();
        let objective = |p: &ResNet| {
            let (y, _) = p.forward(&x, &caps).unwrap();
            y.component_mul(&u).sum()
        };
        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut k = 0;
        for s in 0..8 {
            let len = m.params.slices()[s].len();
            for i in 0..len {
                let mut plus = m.clone();
                plus.params.slices_mut()[s][i] += h;
                let mut minus = m.clone();
                minus.params.slices_mut()[s][i] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                worst = worst.max((fd - g[k]).abs() / (1e-3 + fd.abs()));
                k += 1;
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = ResNet::new(3, 4, 2, 1);
        let x = inputs(&mut rng, 3, 4);
        let u = inputs(&mut rng, 2, 4);
        let (_, cache) = m.forward(&x, &[1.0, 1.0]).unwrap();
        let g1 = m.backward(&cache, &u).unwrap().flatten();
        let g3 = m.backward(&cache, &(u * 3.0)).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g3) {
            assert_relative_eq!(3.0 * a, *b, epsilon = 1e-12);
        }
        let zero = m.backward(&cache, &DMatrix::zeros(2, 4)).unwrap();
        assert!(zero.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_and_version() {
        let m = ResNet::new(3, 5, 2, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(ResNet::load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            ResNet::load(&path),
            Err(ForecastError::Version { found: 9, .. })
        ));
    }
}
