use std::sync::{Arc, OnceLock};

use crate::lp::{solve_from, CompactLp, LpShape, LpSolution, SolverOptions};
use crate::sysmodel::MarketInstance;

use super::build::{build_da, build_rt, build_rt_first, DaLayout, RtLayout};
use super::{ClearingError, IndexMap};

/// Slack allowed when checking forecasts and realizations against `[0, cap]`.
const RANGE_TOL: f64 = 1e-9;

/// A market instance together with the cached LP shapes of its clearings.
///
/// Loads and realizations only move `psi`, so each of the three problem
/// families (DA, first-hour RT, later-hour RT) has one shape per instance.
/// Sharing it keeps the solver's cached start basis alive across days.
#[derive(Debug)]
pub struct Market {
    inst: Arc<MarketInstance>,
    da: OnceLock<(Arc<LpShape>, DaLayout)>,
    rt_first: OnceLock<(Arc<LpShape>, RtLayout)>,
    rt: OnceLock<(Arc<LpShape>, RtLayout)>,
}

/// Bases from an earlier day, used to start the next solves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WarmStart {
    pub da: Option<Vec<usize>>,
    pub rt: Vec<Option<Vec<usize>>>,
}

#[derive(Debug, Clone)]
pub struct DaDecision {
    /// `p[t][n]`.
    pub p: Vec<Vec<f64>>,
    /// `w[t][n]`.
    pub w: Vec<Vec<f64>>,
    /// The stacked forecast the schedule was cleared against.
    pub forecast: Vec<f64>,
    pub solution: LpSolution,
    pub lp: CompactLp,
}

impl DaDecision {
    /// Stacked `x_d`.
    pub fn x(&self) -> &[f64] {
        &self.solution.x
    }
}

#[derive(Debug, Clone)]
pub struct RtDecision {
    /// Zero-based hour.
    pub hour: usize,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
    pub spill: Vec<f64>,
    /// The parameter vector the problem was solved at.
    pub params: Vec<f64>,
    pub solution: LpSolution,
    pub lp: CompactLp,
}

#[derive(Debug, Clone)]
pub struct DayOutcome {
    pub da: DaDecision,
    pub rt: Vec<RtDecision>,
    pub da_cost: f64,
    pub rt_cost: f64,
    pub overall_cost: f64,
}

impl DayOutcome {
    /// `sum_t rho' p*_t + rho_plus' p_up_t - rho_minus' p_down_t`, computed
    /// from the decisions rather than from the LP objectives.
    pub fn cost_from_decisions(&self, inst: &MarketInstance) -> f64 {
        let g = &inst.generators;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let da: f64 = self.da.p.iter().map(|p| dot(&g.rho, p)).sum();
        let rt: f64 = self
            .rt
            .iter()
            .map(|r| dot(&g.rho_plus, &r.p_up) - dot(&g.rho_minus, &r.p_down))
            .sum();
        da + rt
    }

    /// Bases of this day's solves, to start a similar day from.
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            da: Some(self.da.solution.basis.clone()),
            rt: self
                .rt
                .iter()
                .map(|r| Some(r.solution.basis.clone()))
                .collect(),
        }
    }
}

impl Market {
    pub fn new(inst: MarketInstance) -> Self {
        Market::from_arc(Arc::new(inst))
    }

    pub fn from_arc(inst: Arc<MarketInstance>) -> Self {
        Market {
            inst,
            da: OnceLock::new(),
            rt_first: OnceLock::new(),
            rt: OnceLock::new(),
        }
    }

    pub fn instance(&self) -> &MarketInstance {
        &self.inst
    }

    pub fn shared_instance(&self) -> Arc<MarketInstance> {
        Arc::clone(&self.inst)
    }

    pub fn index(&self) -> IndexMap {
        IndexMap::new(self.inst.node_count(), self.inst.horizon())
    }

    fn zero_loads(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.inst.node_count()]; self.inst.horizon()]
    }

    fn da_cached(&self) -> &(Arc<LpShape>, DaLayout) {
        self.da.get_or_init(|| {
            let (lp, layout) = build_da(&self.inst, &self.zero_loads());
            (lp.shape, layout)
        })
    }

    fn rt_cached(&self, t: usize) -> &(Arc<LpShape>, RtLayout) {
        let zeros = vec![0.0; self.inst.node_count()];
        if t == 0 {
            self.rt_first.get_or_init(|| {
                let (lp, layout) = build_rt_first(&self.inst, &zeros, &zeros);
                (lp.shape, layout)
            })
        } else {
            self.rt.get_or_init(|| {
                let (lp, layout) = build_rt(&self.inst, &zeros, &zeros);
                (lp.shape, layout)
            })
        }
    }

    pub fn da_layout(&self) -> &DaLayout {
        &self.da_cached().1
    }

    pub fn rt_layout(&self, t: usize) -> &RtLayout {
        &self.rt_cached(t).1
    }

    /// The DA program for one day of loads, sharing the cached shape.
    pub fn da_lp(&self, loads: &[Vec<f64>]) -> CompactLp {
        let (lp, _) = build_da(&self.inst, loads);
        CompactLp {
            shape: Arc::clone(&self.da_cached().0),
            psi: lp.psi,
        }
    }

    /// The RT program at zero-based hour `t`.
    pub fn rt_lp(&self, t: usize, load: &[f64], y: &[f64]) -> CompactLp {
        let lp = if t == 0 {
            build_rt_first(&self.inst, load, y).0
        } else {
            build_rt(&self.inst, load, y).0
        };
        CompactLp {
            shape: Arc::clone(&self.rt_cached(t).0),
            psi: lp.psi,
        }
    }

    /// RT parameter vector at hour `t`.
    pub fn rt_params(&self, t: usize, da: &DaDecision, prev: Option<&RtDecision>) -> Vec<f64> {
        let idx = self.index();
        let mut out = Vec::with_capacity(idx.rt_params(t));
        out.extend_from_slice(&da.p[t]);
        out.extend_from_slice(&da.w[t]);
        if t > 0 {
            let prev = prev.expect("previous hour decision");
            out.extend_from_slice(&da.p[t - 1]);
            out.extend_from_slice(&prev.p_up);
            out.extend_from_slice(&prev.p_down);
        }
        out
    }

    pub fn check_loads(&self, loads: &[Vec<f64>]) -> Result<(), ClearingError> {
        let (n, h) = (self.inst.node_count(), self.inst.horizon());
        if loads.len() != h || loads.iter().any(|l| l.len() != n) {
            return Err(ClearingError::Input(format!(
                "expected {h} hours of {n} nodal loads"
            )));
        }
        Ok(())
    }

    /// Checks a stacked wind vector against `[0, cap]` per entry.
    pub fn check_wind(&self, what: &str, v: &[f64]) -> Result<(), ClearingError> {
        let idx = self.index();
        if v.len() != idx.forecast_len() {
            return Err(ClearingError::Input(format!(
                "{what} has {} entries, expected {}",
                v.len(),
                idx.forecast_len()
            )));
        }
        let cap = &self.inst.wind.capacity;
        for t in 0..idx.horizon {
            for (n, &c) in cap.iter().enumerate() {
                let x = v[idx.yhat(t, n)];
                if !x.is_finite() || x < -RANGE_TOL || x > c + RANGE_TOL {
                    return Err(ClearingError::Input(format!(
                        "{what} at hour {} node {} is {x}, outside [0, {c}]",
                        t + 1,
                        n + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn solve_da(
        &self,
        loads: &[Vec<f64>],
        forecast: &[f64],
        hint: Option<&[usize]>,
    ) -> Result<DaDecision, ClearingError> {
        self.check_loads(loads)?;
        self.check_wind("forecast", forecast)?;
        let lp = self.da_lp(loads);
        let solution = solve_from(&lp, forecast, hint, &SolverOptions::default())
            .map_err(ClearingError::DayAhead)?;
        Ok(self.da_decision(lp, solution, forecast.to_vec()))
    }

    /// Wraps a solved DA program; also used for schedules fixed elsewhere.
    pub fn da_decision(
        &self,
        lp: CompactLp,
        solution: LpSolution,
        forecast: Vec<f64>,
    ) -> DaDecision {
        let idx = self.index();
        let x = &solution.x;
        let p = (0..idx.horizon)
            .map(|t| (0..idx.nodes).map(|n| x[idx.p(t, n)]).collect())
            .collect();
        let w = (0..idx.horizon)
            .map(|t| (0..idx.nodes).map(|n| x[idx.w(t, n)]).collect())
            .collect();
        DaDecision {
            p,
            w,
            forecast,
            solution,
            lp,
        }
    }

    pub fn solve_rt(
        &self,
        t: usize,
        load: &[f64],
        y: &[f64],
        params: Vec<f64>,
        hint: Option<&[usize]>,
    ) -> Result<RtDecision, ClearingError> {
        let n = self.inst.node_count();
        let lp = self.rt_lp(t, load, y);
        let solution = solve_from(&lp, &params, hint, &SolverOptions::default()).map_err(|e| {
            ClearingError::RealTime {
                hour: t + 1,
                source: e,
            }
        })?;
        let x = &solution.x;
        Ok(RtDecision {
            hour: t,
            p_up: x[..n].to_vec(),
            p_down: x[n..2 * n].to_vec(),
            spill: x[2 * n..].to_vec(),
            params,
            solution,
            lp,
        })
    }

    /// Runs the T real-time clearings after a given DA decision.
    pub fn run_real_time(
        &self,
        loads: &[Vec<f64>],
        da: DaDecision,
        realization: &[f64],
        warm: Option<&WarmStart>,
    ) -> Result<DayOutcome, ClearingError> {
        self.check_wind("realization", realization)?;
        let idx = self.index();
        let mut rt: Vec<RtDecision> = Vec::with_capacity(idx.horizon);
        for t in 0..idx.horizon {
            let params = self.rt_params(t, &da, rt.last());
            let hint = warm.and_then(|w| w.rt.get(t)).and_then(|h| h.as_deref());
            let y = &realization[idx.forecast(t)];
            rt.push(self.solve_rt(t, &loads[t], y, params, hint)?);
        }
        let da_cost = da.solution.objective;
        let rt_cost = rt.iter().map(|r| r.solution.objective).sum::<f64>();
        Ok(DayOutcome {
            da,
            rt,
            da_cost,
            rt_cost,
            overall_cost: da_cost + rt_cost,
        })
    }

    /// DA clearing against `forecast`, then the hourly RT clearings against
    /// `realization`.
    pub fn simulate(
        &self,
        loads: &[Vec<f64>],
        forecast: &[f64],
        realization: &[f64],
        warm: Option<&WarmStart>,
    ) -> Result<DayOutcome, ClearingError> {
        let da = self.solve_da(loads, forecast, warm.and_then(|w| w.da.as_deref()))?;
        self.run_real_time(loads, da, realization, warm)
    }
}

/// Sequential clearing of one day: DA once, then RT hour by hour.
pub fn simulate_day(
    market: &Market,
    loads: &[Vec<f64>],
    forecast: &[f64],
    realization: &[f64],
) -> Result<DayOutcome, ClearingError> {
    market.simulate(loads, forecast, realization, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::sysmodel::LoadSeries;
    use approx::assert_relative_eq;

    fn iso1() -> Market {
        Market::new(cases::iso1())
    }

    fn flat(market: &Market, v: f64) -> Vec<f64> {
        vec![v; market.index().forecast_len()]
    }

    #[test]
    fn iso1_day_ahead_balances_load() {
        let m = iso1();
        let loads = m.instance().loads.day(0).to_vec();
        let da = m.solve_da(&loads, &flat(&m, 30.0), None).unwrap();
        assert_relative_eq!(da.p[0][0], 70.0, epsilon = 1e-9);
        assert_relative_eq!(da.w[0][0], 30.0, epsilon = 1e-9);
        assert_relative_eq!(da.solution.objective, 24.0 * 1400.0, epsilon = 1e-6);
        assert_relative_eq!(da.solution.dual_objective, 24.0 * 1400.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_forecast_leaves_load_to_generators() {
        let m = iso1();
        let loads = m.instance().loads.day(0).to_vec();
        let da = m.solve_da(&loads, &flat(&m, 0.0), None).unwrap();
        assert!(da.w.iter().all(|w| w[0].abs() < 1e-9));
        assert!(da.p.iter().all(|p| (p[0] - 100.0).abs() < 1e-9));
    }

    #[test]
    fn iso1_shortfall_day() {
        let m = iso1();
        let loads = m.instance().loads.day(0).to_vec();
        let out = simulate_day(&m, &loads, &flat(&m, 30.0), &flat(&m, 20.0)).unwrap();
        for r in &out.rt {
            assert_relative_eq!(r.p_up[0], 10.0, epsilon = 1e-9);
            assert_relative_eq!(r.solution.objective, 500.0, epsilon = 1e-7);
        }
        assert_relative_eq!(out.overall_cost, 45_600.0, epsilon = 1e-6);
        assert_relative_eq!(
            out.cost_from_decisions(m.instance()),
            45_600.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn iso1_surplus_uses_down_regulation() {
        let m = iso1();
        let loads = m.instance().loads.day(0).to_vec();
        let out = simulate_day(&m, &loads, &flat(&m, 30.0), &flat(&m, 40.0)).unwrap();
        for r in &out.rt {
            assert_relative_eq!(r.p_down[0], 10.0, epsilon = 1e-9);
            assert_relative_eq!(r.solution.objective, -180.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn perfect_forecast_has_no_real_time_cost() {
        let m = Market::new(cases::nine_bus());
        let loads = m.instance().loads.day(0).to_vec();
        let y: Vec<f64> = (0..m.index().forecast_len())
            .map(|i| 40.0 + (i % 7) as f64 * 3.0)
            .collect();
        let y = mask_wind(&m, y);
        let out = simulate_day(&m, &loads, &y, &y).unwrap();
        assert!(out.rt_cost.abs() < 1e-7, "rt cost {}", out.rt_cost);
        assert_relative_eq!(out.overall_cost, out.da_cost, epsilon = 1e-7);
    }

    fn mask_wind(m: &Market, mut v: Vec<f64>) -> Vec<f64> {
        let idx = m.index();
        for t in 0..idx.horizon {
            for n in 0..idx.nodes {
                if m.instance().wind.capacity[n] == 0.0 {
                    v[idx.yhat(t, n)] = 0.0;
                }
            }
        }
        v
    }

    #[test]
    fn forecast_out_of_range_is_rejected() {
        let m = iso1();
        let loads = m.instance().loads.day(0).to_vec();
        let err = m.solve_da(&loads, &flat(&m, 61.0), None).unwrap_err();
        assert!(matches!(err, ClearingError::Input(_)));
    }

    #[test]
    fn shortfall_beyond_regulation_names_the_hour() {
        let mut inst = cases::iso1();
        inst.generators.up_max[0] = 5.0;
        let m = Market::new(inst);
        let loads = m.instance().loads.day(0).to_vec();
        let err = simulate_day(&m, &loads, &flat(&m, 30.0), &flat(&m, 20.0)).unwrap_err();
        assert!(err.is_infeasible());
        assert!(matches!(err, ClearingError::RealTime { hour: 1, .. }));
    }

    #[test]
    fn ramp_box_tracks_previous_adjustment() {
        // With ramp 10 and a flat schedule, an up adjustment of 5 in the
        // previous hour leaves 15 up and 5 down.
        let mut inst = cases::iso1();
        inst.generators.ramp[0] = 10.0;
        let m = Market::new(inst);
        let load = vec![100.0];
        let lp = m.rt_lp(1, &load, &[0.0]);
        let params = vec![70.0, 30.0, 70.0, 5.0, 0.0];
        let h = lp.rhs(&params).unwrap();
        let up = lp.shape.find_row("upramp_1").unwrap();
        let dn = lp.shape.find_row("dnramp_1").unwrap();
        assert_relative_eq!(h[up], 15.0);
        assert_relative_eq!(h[dn], 5.0);
    }

    #[test]
    fn inactive_coupling_matches_first_hour() {
        let m = Market::new(cases::nine_bus());
        let loads = m.instance().loads.day(0).to_vec();
        let yhat = mask_wind(&m, flat(&m, 50.0));
        let da = m.solve_da(&loads, &yhat, None).unwrap();
        let y = vec![0.0, 0.0, 0.0, 0.0, 40.0, 0.0, 60.0, 0.0, 0.0];
        let first = m
            .solve_rt(
                0,
                &loads[3],
                &y,
                [da.p[3].clone(), da.w[3].clone()].concat(),
                None,
            )
            .unwrap();
        let zeros = vec![0.0; 9];
        let later_params = [
            da.p[3].clone(),
            da.w[3].clone(),
            da.p[3].clone(),
            zeros.clone(),
            zeros,
        ]
        .concat();
        let later = m.solve_rt(3, &loads[3], &y, later_params, None).unwrap();
        for (a, b) in first.solution.x.iter().zip(&later.solution.x) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn no_simultaneous_up_and_down() {
        let m = Market::new(cases::nine_bus());
        let loads = m.instance().loads.day(0).to_vec();
        let yhat = mask_wind(&m, flat(&m, 60.0));
        let y = mask_wind(&m, flat(&m, 35.0));
        let out = simulate_day(&m, &loads, &yhat, &y).unwrap();
        for r in &out.rt {
            for n in 0..9 {
                assert!(r.p_up[n].min(r.p_down[n]) < 1e-9);
            }
        }
        assert_relative_eq!(
            out.overall_cost,
            out.cost_from_decisions(m.instance()),
            epsilon = 1e-6
        );
    }

    #[test]
    fn warm_start_reproduces_cold_result() {
        let m = Market::new(cases::nine_bus());
        let loads = m.instance().loads.day(0).to_vec();
        let a = mask_wind(&m, flat(&m, 60.0));
        let b = mask_wind(&m, flat(&m, 55.0));
        let y = mask_wind(&m, flat(&m, 50.0));
        let first = m.simulate(&loads, &a, &y, None).unwrap();
        let cold = m.simulate(&loads, &b, &y, None).unwrap();
        let warm = m
            .simulate(&loads, &b, &y, Some(&first.warm_start()))
            .unwrap();
        assert_relative_eq!(cold.overall_cost, warm.overall_cost, epsilon = 1e-8);
    }

    #[test]
    fn loads_of_wrong_shape_are_rejected() {
        let m = iso1();
        let loads = LoadSeries::constant(3, vec![100.0]);
        assert!(m.check_loads(loads.day(0)).is_err());
    }
}
