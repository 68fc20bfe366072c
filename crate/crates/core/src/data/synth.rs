use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DataError, Dataset, DayRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `y = cap * sigmoid(a + b z + s e)` with standard normal `e`.
    GaussianLogit,
    /// `y = cap * Beta(k m, k (1 - m))` with `m = sigmoid(a + b z)` and
    /// `k = 1 / s^2`.
    Beta,
}

/// Settings of the synthetic wind generator.
///
/// Each farm has a standard normal latent signal `z` made of a day regime
/// shared by all farms plus an hourly AR(1) term. The first feature of a
/// farm is `z` itself, so the conditional law of its output given the
/// features is known in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Capacity per farm in MW.
    pub caps: Vec<f64>,
    pub feature_dim: usize,
    pub horizon: usize,
    pub noise: NoiseModel,
    /// `s` above; zero makes the output a function of the features.
    pub noise_scale: f64,
    /// Decay length of the hourly AR(1) term, in hours.
    pub correlation_hours: f64,
    /// `b` above.
    pub gain: f64,
    /// Target mean of `y / cap`; fixes `a`.
    pub mean_level: f64,
    /// Share of the latent variance carried by the day regime.
    pub regime_weight: f64,
    /// Standard deviation of the noise on the second feature.
    pub feature_noise: f64,
    pub split: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            caps: vec![60.0],
            feature_dim: 4,
            horizon: 24,
            noise: NoiseModel::GaussianLogit,
            noise_scale: 0.6,
            correlation_hours: 6.0,
            gain: 1.5,
            mean_level: 0.4,
            regime_weight: 0.5,
            feature_noise: 0.3,
            split: 0.8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        if self.caps.is_empty() || self.caps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("farm capacities must be positive".into());
        }
        if self.feature_dim == 0 || self.horizon == 0 {
            return bad("feature_dim and horizon must be positive".into());
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} outside (0, 1)", self.split));
        }
        if !(self.mean_level > 0.0 && self.mean_level < 1.0) {
            return bad(format!("mean level {} outside (0, 1)", self.mean_level));
        }
        if !(0.0..=1.0).contains(&self.regime_weight) {
            return bad(format!(
                "regime weight {} outside [0, 1]",
                self.regime_weight
            ));
        }
        if self.noise_scale < 0.0 || self.feature_noise < 0.0 || self.correlation_hours <= 0.0 {
            return bad(
                "noise scales must be nonnegative and the correlation length positive".into(),
            );
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The calibrated generating law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub noise: NoiseModel,
    pub offset: f64,
    pub gain: f64,
    pub noise_scale: f64,
    pub caps: Vec<f64>,
    pub feature_dim: usize,
}

/// `E[sigmoid(a + s g)]` for standard normal `g`, by quadrature.
fn mean_sigmoid(a: f64, s: f64) -> f64 {
    let steps = 1600;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / steps as f64;
    let pdf = |g: f64| (-0.5 * g * g).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (0..=steps)
        .map(|i| {
            let g = lo + h * i as f64;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * pdf(g) * sigmoid(a + s * g)
        })
        .sum::<f64>()
        * h
}

impl SynthModel {
    pub fn from_config(cfg: &SynthConfig) -> Result<Self, DataError> {
        cfg.validate()?;
        let spread = match cfg.noise {
            NoiseModel::GaussianLogit => (cfg.gain.powi(2) + cfg.noise_scale.powi(2)).sqrt(),
            NoiseModel::Beta => cfg.gain.abs(),
        };
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mean_sigmoid(mid, spread) < cfg.mean_level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(SynthModel {
            noise: cfg.noise,
            offset: 0.5 * (lo + hi),
            gain: cfg.gain,
            noise_scale: cfg.noise_scale,
            caps: cfg.caps.clone(),
            feature_dim: cfg.feature_dim,
        })
    }

    /// The latent signal of `farm` in one hour's feature row.
    pub fn latent(&self, features: &[f64], farm: usize) -> f64 {
        features[farm * self.feature_dim]
    }

    fn mean_fraction(&self, z: f64) -> f64 {
        sigmoid(self.offset + self.gain * z)
    }

    fn beta_params(&self, z: f64) -> Option<(f64, f64)> {
        if self.noise_scale == 0.0 {
            return None;
        }
        let m = self.mean_fraction(z).clamp(1e-9, 1.0 - 1e-9);
        let k = 1.0 / self.noise_scale.powi(2);
        Some((k * m, k * (1.0 - m)))
    }

    pub fn draw<R: Rng>(&self, farm: usize, z: f64, rng: &mut R) -> f64 {
        let cap = self.caps[farm];
        let y = match self.noise {
            NoiseModel::GaussianLogit => {
                let e: f64 = rng.sample(StandardNormal);
                cap * sigmoid(self.offset + self.gain * z + self.noise_scale * e)
            }
            NoiseModel::Beta => match self.beta_params(z) {
                None => cap * self.mean_fraction(z),
                Some((a, b)) => cap * Beta::new(a, b).expect("beta parameters").sample(rng),
            },
        };
        y.clamp(0.0, cap)
    }

    /// Conditional `level`-quantile of the output of `farm` given its latent.
    pub fn quantile(&self, farm: usize, z: f64, level: f64) -> f64 {
        let cap = self.caps[farm];
        match self.noise {
            NoiseModel::GaussianLogit => {
                let q = Normal::standard().inverse_cdf(level);
                cap * sigmoid(self.offset + self.gain * z + self.noise_scale * q)
            }
            NoiseModel::Beta => match self.beta_params(z) {
                None => cap * self.mean_fraction(z),
                Some((a, b)) => {
                    cap * statrs::distribution::Beta::new(a, b)
                        .expect("beta parameters")
                        .inverse_cdf(level)
                }
            },
        }
    }
}

/// Draws `days` days under `cfg`. The same configuration always yields the
/// same dataset.
pub fn generate(cfg: &SynthConfig, days: usize) -> Result<(Dataset, SynthModel), DataError> {
    let model = SynthModel::from_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let farms = cfg.caps.len();
    let phi = (-1.0 / cfg.correlation_hours).exp();
    let innov = (1.0 - phi * phi).sqrt();
    let (wr, wa) = (cfg.regime_weight.sqrt(), (1.0 - cfg.regime_weight).sqrt());
    let mut ar: Vec<f64> = (0..farms).map(|_| rng.sample(StandardNormal)).collect();
    let mut records = Vec::with_capacity(days);
    for d in 0..days {
        let regime: f64 = rng.sample(StandardNormal);
        let mut features = Vec::with_capacity(cfg.horizon);
        let mut actual = Vec::with_capacity(cfg.horizon);
        for t in 0..cfg.horizon {
            let angle = 2.0 * std::f64::consts::PI * t as f64 / cfg.horizon as f64;
            let mut row = Vec::with_capacity(farms * cfg.feature_dim);
            let mut out = Vec::with_capacity(farms);
            for (f, a) in ar.iter_mut().enumerate() {
                let u: f64 = rng.sample(StandardNormal);
                *a = phi * *a + innov * u;
                let z = wr * regime + wa * *a;
                for j in 0..cfg.feature_dim {
                    let v = match j {
                        0 => z,
                        2 => angle.sin(),
                        3 => angle.cos(),
                        _ => {
                            let e: f64 = rng.sample(StandardNormal);
                            z + cfg.feature_noise * e
                        }
                    };
                    row.push(v);
                }
                out.push(model.draw(f, z, &mut rng));
            }
            features.push(row);
            actual.push(out);
        }
        records.push(DayRecord {
            label: d as i64,
            features,
            actual,
        });
    }
    let data = Dataset {
        feature_dim: cfg.feature_dim,
        horizon: cfg.horizon,
        caps: cfg.caps.clone(),
        days: records,
    };
    Ok((data, model))
}
