//! Affine maps from a day's stacked forecast to its DA schedule and to each
//! hour's RT adjustments, chained hour by hour.

mod map;

pub use map::{active_residual, local_map, LocalMap, MapMethod, CONSISTENCY_TOL, REPRODUCTION_TOL};

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::clearing::DaDecision;
use crate::clearing::{DayOutcome, IndexMap, RtDecision};
use crate::lp::{ActiveSetSignature, LpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("day-ahead policy: {0}")]
    DayAhead(#[source] LpError),
    #[error("real-time policy at hour {hour}: {source}")]
    RealTime {
        /// One-based hour.
        hour: usize,
        #[source]
        source: LpError,
    },
    #[error("rows {start}..{end} outside a policy with {rows} outputs")]
    OutOfRange {
        start: usize,
        end: usize,
        rows: usize,
    },
    #[error("policies to stack disagree on the forecast dimension")]
    Mismatch,
}

/// Which decision slice a policy produces. Hours are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// All DA decisions `x_d`.
    X,
    /// `x_{d,t}`.
    XHour(usize),
    /// `p_{d,t}`.
    P(usize),
    /// `z_{d,t}`.
    Z(usize),
    /// `[p_up; p_down]` at hour `t`.
    Pm(usize),
    /// Stacked RT parameters of hour `t`.
    Params(usize),
}

/// `out(yhat) = A yhat + b`, valid while every signature in the chain holds.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolicy {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub target: Target,
    pub signatures: Vec<ActiveSetSignature>,
    /// Some link of the chain is one-sided.
    pub boundary: bool,
}

impl LocalPolicy {
    pub fn eval(&self, forecast: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(forecast) + &self.b)
            .as_slice()
            .to_vec()
    }

    pub fn outputs(&self) -> usize {
        self.a.nrows()
    }

    /// Largest deviation from `expected`, scaled by `1 + |expected_i|`.
    pub fn reproduction_error(&self, forecast: &[f64], expected: &[f64]) -> f64 {
        self.eval(forecast)
            .iter()
            .zip(expected)
            .map(|(p, v)| (p - v).abs() / (1.0 + v.abs()))
            .fold(0.0, f64::max)
    }
}

/// Row restriction of a policy.
pub fn slice(
    policy: &LocalPolicy,
    rows: Range<usize>,
    target: Target,
) -> Result<LocalPolicy, PolicyError> {
    if rows.end > policy.outputs() || rows.start > rows.end {
        return Err(PolicyError::OutOfRange {
            start: rows.start,
            end: rows.end,
            rows: policy.outputs(),
        });
    }
    let len = rows.end - rows.start;
    Ok(LocalPolicy {
        a: policy.a.rows(rows.start, len).into_owned(),
        b: policy.b.rows(rows.start, len).into_owned(),
        target,
        signatures: policy.signatures.clone(),
        boundary: policy.boundary,
    })
}

/// Vertical concatenation.
pub fn stack(parts: &[&LocalPolicy], target: Target) -> Result<LocalPolicy, PolicyError> {
    let cols = parts.first().map_or(0, |p| p.a.ncols());
    if parts.iter().any(|p| p.a.ncols() != cols) {
        return Err(PolicyError::Mismatch);
    }
    let rows: usize = parts.iter().map(|p| p.outputs()).sum();
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let mut signatures: Vec<ActiveSetSignature> = Vec::new();
    let mut r = 0;
    for p in parts {
        a.rows_mut(r, p.outputs()).copy_from(&p.a);
        b.rows_mut(r, p.outputs()).copy_from(&p.b);
        r += p.outputs();
        for s in &p.signatures {
            if !signatures.contains(s) {
                signatures.push(s.clone());
            }
        }
    }
    Ok(LocalPolicy {
        a,
        b,
        target,
        signatures,
        boundary: parts.iter().any(|p| p.boundary),
    })
}

/// The DA policy `x_d(yhat)`.
pub fn policy_x(da: &DaDecision) -> Result<LocalPolicy, PolicyError> {
    let m = local_map(&da.lp, &da.solution, &da.forecast, None).map_err(PolicyError::DayAhead)?;
    Ok(LocalPolicy {
        a: m.a,
        b: m.b,
        target: Target::X,
        boundary: m.boundary,
        signatures: vec![m.signature],
    })
}

/// Composes the RT map of `rt` with the policy of its parameters.
fn compose(rt: &RtDecision, params: &LocalPolicy) -> Result<LocalPolicy, PolicyError> {
    let err = |source| PolicyError::RealTime {
        hour: rt.hour + 1,
        source,
    };
    let m = local_map(&rt.lp, &rt.solution, &rt.params, Some(&params.a)).map_err(err)?;
    let mut signatures = params.signatures.clone();
    signatures.push(m.signature);
    Ok(LocalPolicy {
        a: &m.a * &params.a,
        b: &m.a * &params.b + &m.b,
        target: Target::Z(rt.hour),
        boundary: params.boundary || m.boundary,
        signatures,
    })
}

/// `z_{d,1}(yhat)` from the first RT clearing and the DA policy of hour 1.
pub fn policy_z_first(rt: &RtDecision, x_first: &LocalPolicy) -> Result<LocalPolicy, PolicyError> {
    compose(rt, x_first)
}

/// `z_{d,t}(yhat)` for a later hour from the policies of its parameters.
pub fn policy_z(
    rt: &RtDecision,
    x_now: &LocalPolicy,
    p_prev: &LocalPolicy,
    pm_prev: &LocalPolicy,
) -> Result<LocalPolicy, PolicyError> {
    let params = stack(&[x_now, p_prev, pm_prev], Target::Params(rt.hour))?;
    compose(rt, &params)
}

/// The `[p_up; p_down]` rows of an RT policy.
pub fn extract_pm(z: &LocalPolicy, idx: &IndexMap) -> Result<LocalPolicy, PolicyError> {
    let hour = match z.target {
        Target::Z(t) => t,
        _ => 0,
    };
    slice(z, idx.pm(), Target::Pm(hour))
}

/// Every policy of one cleared day.
#[derive(Debug, Clone)]
pub struct DayPolicies {
    pub x: LocalPolicy,
    pub z: Vec<LocalPolicy>,
}

impl DayPolicies {
    pub fn boundary(&self) -> bool {
        self.x.boundary || self.z.iter().any(|z| z.boundary)
    }
}

/// Builds the chain hour by hour, reusing each hour's `[p_up; p_down]`
/// policy for the next.
pub fn chain_day(idx: &IndexMap, outcome: &DayOutcome) -> Result<DayPolicies, PolicyError> {
    let x = policy_x(&outcome.da)?;
    let mut z: Vec<LocalPolicy> = Vec::with_capacity(idx.horizon);
    let mut pm_prev: Option<LocalPolicy> = None;
    for (t, rt) in outcome.rt.iter().enumerate() {
        let x_now = slice(&x, idx.hour(t), Target::XHour(t))?;
        let zt = if t == 0 {
            policy_z_first(rt, &x_now)?
        } else {
            let p_prev = slice(&x, idx.hour_p(t - 1), Target::P(t - 1))?;
            policy_z(
                rt,
                &x_now,
                &p_prev,
                pm_prev.as_ref().expect("previous hour"),
            )?
        };
        pm_prev = Some(extract_pm(&zt, idx)?);
        z.push(zt);
    }
    Ok(DayPolicies { x, z })
}

/// Writes `output,input,value` triples; the intercept uses input `b`.
pub fn write_policy_csv<W: Write>(out: W, policy: &LocalPolicy) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["output", "input", "value"])?;
    for r in 0..policy.a.nrows() {
        for c in 0..policy.a.ncols() {
            let v = policy.a[(r, c)];
            if v != 0.0 {
                w.write_record([r.to_string(), c.to_string(), v.to_string()])?;
            }
        }
        w.write_record([r.to_string(), "b".to_string(), policy.b[r].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::clearing::Market;
    use approx::assert_relative_eq;

    fn iso1_day(yhat: f64, y: f64) -> (Market, DayOutcome) {
        let m = Market::new(cases::iso1());
        let loads = m.instance().loads.day(0).to_vec();
        let out = m.simulate(&loads, &[yhat; 24], &[y; 24], None).unwrap();
        (m, out)
    }

    #[test]
    fn iso1_day_ahead_slopes() {
        let (m, out) = iso1_day(30.0, 20.0);
        let idx = m.index();
        let x = policy_x(&out.da).unwrap();
        assert!(!x.boundary);
        for t in 0..24 {
            for s in 0..24 {
                let want = if s == t { 1.0 } else { 0.0 };
                assert_relative_eq!(x.a[(idx.p(t, 0), s)], -want, epsilon = 1e-12);
                assert_relative_eq!(x.a[(idx.w(t, 0), s)], want, epsilon = 1e-12);
            }
        }
        // Slice at p_t is yhat_t -> 100 - yhat_t.
        let p3 = slice(&x, idx.hour_p(3), Target::P(3)).unwrap();
        assert_relative_eq!(p3.eval(&[12.0; 24])[0], 88.0, epsilon = 1e-9);
    }

    #[test]
    fn slices_restack_to_the_whole() {
        let (m, out) = iso1_day(30.0, 20.0);
        let idx = m.index();
        let x = policy_x(&out.da).unwrap();
        let parts: Vec<LocalPolicy> = (0..24)
            .map(|t| slice(&x, idx.hour(t), Target::XHour(t)).unwrap())
            .collect();
        let refs: Vec<&LocalPolicy> = parts.iter().collect();
        let back = stack(&refs, Target::X).unwrap();
        assert_eq!(back.a, x.a);
        assert_eq!(back.b, x.b);
        assert!(slice(&x, 40..60, Target::X).is_err());
    }

    #[test]
    fn shortfall_and_surplus_regimes() {
        let (m, out) = iso1_day(30.0, 20.0);
        let pol = chain_day(&m.index(), &out).unwrap();
        for (t, z) in pol.z.iter().enumerate() {
            assert_relative_eq!(z.a[(0, t)], 1.0, epsilon = 1e-12);
            for s in (0..24).filter(|&s| s != t) {
                assert_relative_eq!(z.a[(0, s)], 0.0, epsilon = 1e-12);
            }
            assert!(z.reproduction_error(&[30.0; 24], &out.rt[t].solution.x) < 1e-9);
        }
        let (m, out) = iso1_day(30.0, 40.0);
        let pol = chain_day(&m.index(), &out).unwrap();
        for (t, z) in pol.z.iter().enumerate() {
            assert_relative_eq!(z.a[(1, t)], -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_dump_lists_intercepts() {
        let (_, out) = iso1_day(30.0, 20.0);
        let x = policy_x(&out.da).unwrap();
        let mut buf = Vec::new();
        write_policy_csv(&mut buf, &x).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("output,input,value\n"));
        assert!(text.contains("0,b,100"));
        assert!(text.contains("0,0,-1"));
    }
}
