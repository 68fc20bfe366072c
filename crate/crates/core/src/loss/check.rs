use serde::Serialize;

use crate::clearing::Market;

use super::{chain_digest, evaluate_warm, signatures_of, LossError, PolicyBuffer};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / (1 + |numeric|)`.
    pub rel_error: f64,
    /// A probe changed some active set or left the forecast box.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub step: f64,
    pub coordinates: Vec<CoordinateCheck>,
}

impl GradientCheck {
    fn interior(&self) -> impl Iterator<Item = &CoordinateCheck> {
        self.coordinates.iter().filter(|c| !c.boundary)
    }

    /// Largest error over coordinates away from boundaries.
    pub fn max_rel_error(&self) -> f64 {
        self.interior().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn boundary_count(&self) -> usize {
        self.coordinates.iter().filter(|c| c.boundary).count()
    }

    /// Fraction of interior coordinates with error at most `tol`.
    pub fn pass_fraction(&self, tol: f64) -> f64 {
        let total = self.interior().count();
        if total == 0 {
            return 1.0;
        }
        self.interior().filter(|c| c.rel_error <= tol).count() as f64 / total as f64
    }
}

/// Compares the analytic gradient against central differences of the
/// overall cost in every wind coordinate.
pub fn gradient_check(
    market: &Market,
    loads: &[Vec<f64>],
    forecast: &[f64],
    realization: &[f64],
    step: f64,
) -> Result<GradientCheck, LossError> {
    let buffer = PolicyBuffer::new();
    let base = evaluate_warm(market, loads, forecast, realization, &buffer, None)?;
    let chain = base.chain_digest();
    let warm = base.outcome.warm_start();
    let idx = market.index();
    let cap = &market.instance().wind.capacity;
    let mut coordinates = Vec::new();
    let mut probe = forecast.to_vec();
    for t in 0..idx.horizon {
        for (n, &c) in cap.iter().enumerate() {
            if c <= 0.0 {
                continue;
            }
            let i = idx.yhat(t, n);
            let analytic = base.gradient[i];
            if forecast[i] - step < 0.0 || forecast[i] + step > c {
                coordinates.push(CoordinateCheck {
                    coordinate: i,
                    analytic,
                    numeric: f64::NAN,
                    rel_error: f64::NAN,
                    boundary: true,
                });
                continue;
            }
            let mut side = |h: f64| -> Result<(f64, u64), LossError> {
                probe[i] = forecast[i] + h;
                let o = market.simulate(loads, &probe, realization, Some(&warm))?;
                probe[i] = forecast[i];
                Ok((o.overall_cost, chain_digest(&signatures_of(&o))))
            };
            let (up, up_chain) = side(step)?;
            let (down, down_chain) = side(-step)?;
            let numeric = (up - down) / (2.0 * step);
            coordinates.push(CoordinateCheck {
                coordinate: i,
                analytic,
                numeric,
                rel_error: (analytic - numeric).abs() / (1.0 + numeric.abs()),
                boundary: base.boundary || up_chain != chain || down_chain != chain,
            });
        }
    }
    Ok(GradientCheck { step, coordinates })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub value: f64,
    /// Digest of the signature chain at this point.
    pub chain: u64,
    /// Some entry of `base + t direction` was clamped into `[0, cap]`.
    pub clamped: bool,
}

/// Loss values along `base + t * direction` for each `t` in `grid`.
pub fn sweep_loss(
    market: &Market,
    loads: &[Vec<f64>],
    base: &[f64],
    direction: &[f64],
    grid: &[f64],
    realization: &[f64],
) -> Result<Vec<SweepPoint>, LossError> {
    let idx = market.index();
    let cap = &market.instance().wind.capacity;
    let buffer = PolicyBuffer::new();
    let mut warm = None;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut clamped = false;
        let mut point: Vec<f64> = base.iter().zip(direction).map(|(b, d)| b + t * d).collect();
        for s in 0..idx.horizon {
            for (n, &c) in cap.iter().enumerate() {
                let v = &mut point[idx.yhat(s, n)];
                let bounded = v.clamp(0.0, c);
                if (bounded - *v).abs() > 1e-12 {
                    clamped = true;
                }
                *v = bounded;
            }
        }
        if clamped {
            log::warn!("sweep point t = {t} left the forecast box and was clamped");
        }
        let e = evaluate_warm(market, loads, &point, realization, &buffer, warm.as_ref())?;
        warm = Some(e.outcome.warm_start());
        out.push(SweepPoint {
            t,
            value: e.value,
            chain: e.chain_digest(),
            clamped,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn iso1_interior_check_is_exact() {
        let m = Market::new(cases::iso1());
        let loads = m.instance().loads.day(0).to_vec();
        let r = gradient_check(&m, &loads, &[30.0; 24], &[20.0; 24], 1e-3).unwrap();
        assert_eq!(r.coordinates.len(), 24);
        assert_eq!(r.boundary_count(), 0);
        assert!(r.max_rel_error() <= 1e-6, "{}", r.max_rel_error());
    }

    #[test]
    fn straddling_a_kink_is_reported_as_boundary() {
        let m = Market::new(cases::iso1());
        let loads = m.instance().loads.day(0).to_vec();
        let mut y = [20.0; 24];
        y[5] = 30.0005;
        let r = gradient_check(&m, &loads, &[30.0; 24], &y, 1e-3).unwrap();
        assert!(r.coordinates[5].boundary);
        assert!(r.coordinates.iter().filter(|c| c.boundary).count() == 1);
    }

    #[test]
    fn sweep_has_two_slopes_and_clamps() {
        let m = Market::new(cases::iso1());
        let loads = m.instance().loads.day(0).to_vec();
        let mut dir = vec![0.0; 24];
        dir[0] = 1.0;
        let grid: Vec<f64> = (0..=8).map(|i| 5.0 * i as f64).collect();
        let pts = sweep_loss(&m, &loads, &[0.0; 24], &dir, &grid, &[20.0; 24]).unwrap();
        let slopes: Vec<f64> = pts
            .windows(2)
            .map(|w| (w[1].value - w[0].value) / 5.0)
            .collect();
        assert!((slopes[0] + 2.0).abs() < 1e-8);
        assert!((slopes[7] - 30.0).abs() < 1e-8);
        let one = sweep_loss(&m, &loads, &[0.0; 24], &dir, &[100.0], &[20.0; 24]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].clamped);
    }
}
