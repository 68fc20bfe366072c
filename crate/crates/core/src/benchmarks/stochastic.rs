//! Two-stage stochastic day-ahead clearing solved by Benders decomposition.
//!
//! First stage: the DA program with wind bounded by installed capacity.
//! Second stage: for every scenario and hour, the first-hour RT program at
//! that hour's DA schedule. Expected recourse of hour `t` is tracked by a
//! variable `theta_t` bounded below by aggregated optimality cuts; recourse
//! infeasibility produces feasibility cuts from the solver's Farkas ray.

use crate::clearing::{DaDecision, Market};
use crate::lp::{solve_from, CompactLp, LpBuilder, LpError, LpSolution, SolverOptions};

use super::BenchmarkError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendersOptions {
    pub max_iterations: usize,
    /// Stop once `upper - lower <= tol * (1 + |upper|)`.
    pub tol: f64,
}

impl Default for BendersOptions {
    fn default() -> Self {
        BendersOptions {
            max_iterations: 300,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StochasticSchedule {
    /// The first-stage schedule; its multipliers are those of the final
    /// master program restricted to the DA rows.
    pub da: DaDecision,
    /// DA cost plus expected recourse at the returned schedule.
    pub expected_cost: f64,
    /// Master objective at termination.
    pub lower_bound: f64,
    pub iterations: usize,
    pub optimality_cuts: usize,
    pub feasibility_cuts: usize,
}

struct Cut {
    entries: Vec<(usize, f64)>,
    rhs: f64,
}

fn master(da: &CompactLp, h: &[f64], theta_floor: f64, horizon: usize, cuts: &[Cut]) -> CompactLp {
    let shape = &da.shape;
    let n_da = shape.n();
    let mut names: Vec<String> = (0..n_da).map(|j| shape.var_name(j).to_string()).collect();
    names.extend((0..horizon).map(|t| format!("theta_{}", t + 1)));
    let mut b = LpBuilder::new("stochastic-master", names, 0);
    for (j, &c) in shape.c().iter().enumerate() {
        b.set_cost(j, c);
    }
    for t in 0..horizon {
        b.set_cost(n_da + t, 1.0);
    }
    for i in 0..shape.m() {
        b.le(shape.row_name(i), shape.g().row(i), h[i], &[]);
    }
    for t in 0..horizon {
        b.le(
            format!("theta_floor_{}", t + 1),
            &[(n_da + t, -1.0)],
            -theta_floor,
            &[],
        );
    }
    for (k, c) in cuts.iter().enumerate() {
        b.le(format!("cut_{}", k + 1), &c.entries, c.rhs, &[]);
    }
    b.build()
}

/// Restricts a master solution to the DA program.
fn da_part(da: &CompactLp, h: &[f64], sol: &LpSolution) -> LpSolution {
    let (n, m) = (da.shape.n(), da.shape.m());
    let x = sol.x[..n].to_vec();
    let sigma = sol.sigma[..m].to_vec();
    let objective = da.shape.c().iter().zip(&x).map(|(c, v)| c * v).sum();
    let dual_objective = -sigma.iter().zip(h).map(|(s, v)| s * v).sum::<f64>();
    LpSolution {
        x,
        sigma,
        objective,
        dual_objective,
        rhs: h.to_vec(),
        active_set: sol.active_set.iter().copied().filter(|&i| i < m).collect(),
        basis: sol.basis.iter().copied().filter(|&i| i < m).collect(),
        iterations: sol.iterations,
        primal_degenerate: sol.primal_degenerate,
        dual_degenerate: sol.dual_degenerate,
    }
}

fn check_scenarios(
    market: &Market,
    scenarios: &[Vec<f64>],
    probabilities: Option<&[f64]>,
) -> Result<Vec<f64>, BenchmarkError> {
    if scenarios.is_empty() {
        return Err(BenchmarkError::EmptyTraining);
    }
    for s in scenarios {
        market.check_wind("scenario", s)?;
    }
    let p = match probabilities {
        None => vec![1.0 / scenarios.len() as f64; scenarios.len()],
        Some(p) => p.to_vec(),
    };
    if p.len() != scenarios.len() {
        return Err(BenchmarkError::Dimension {
            what: "probabilities",
            expected: scenarios.len(),
            got: p.len(),
        });
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(BenchmarkError::Probabilities(total));
    }
    Ok(p)
}

/// DA schedule minimizing DA cost plus expected hourly recourse cost over
/// `scenarios` (stacked nodal realizations), equiprobable unless
/// `probabilities` is given.
pub fn stochastic_clearing(
    market: &Market,
    loads: &[Vec<f64>],
    scenarios: &[Vec<f64>],
    probabilities: Option<&[f64]>,
) -> Result<StochasticSchedule, BenchmarkError> {
    stochastic_clearing_with(
        market,
        loads,
        scenarios,
        probabilities,
        &BendersOptions::default(),
    )
}

pub fn stochastic_clearing_with(
    market: &Market,
    loads: &[Vec<f64>],
    scenarios: &[Vec<f64>],
    probabilities: Option<&[f64]>,
    opts: &BendersOptions,
) -> Result<StochasticSchedule, BenchmarkError> {
    market.check_loads(loads)?;
    let prob = check_scenarios(market, scenarios, probabilities)?;
    let inst = market.instance();
    let idx = market.index();
    let (n_nodes, horizon) = (idx.nodes, idx.horizon);
    let caps: Vec<f64> = (0..horizon)
        .flat_map(|_| inst.wind.capacity.iter().copied())
        .collect();
    let da = market.da_lp(loads);
    let h = da.rhs(&caps)?;
    let n_da = da.shape.n();
    let g = &inst.generators;
    let theta_floor = -g
        .nodes()
        .map(|n| g.rho_minus[n].max(0.0) * g.down_max[n].min(g.p_max[n]))
        .sum::<f64>()
        - 1.0;

    let recourse: Vec<Vec<CompactLp>> = scenarios
        .iter()
        .map(|y| {
            (0..horizon)
                .map(|t| market.rt_lp(0, &loads[t], &y[idx.forecast(t)]))
                .collect()
        })
        .collect();
    let mut hints: Vec<Vec<Option<Vec<usize>>>> = vec![vec![None; horizon]; scenarios.len()];
    let solver = SolverOptions::default();

    let mut cuts: Vec<Cut> = Vec::new();
    let (mut n_opt, mut n_feas) = (0, 0);
    let mut master_hint: Option<Vec<usize>> = None;
    for iteration in 1..=opts.max_iterations {
        let lp = master(&da, &h, theta_floor, horizon, &cuts);
        let sol = solve_from(&lp, &[], master_hint.as_deref(), &solver)
            .map_err(BenchmarkError::Master)?;
        master_hint = Some(sol.basis.clone());
        let lower = sol.objective;
        let x = &sol.x;
        let da_cost: f64 = da.shape.c().iter().zip(x).map(|(c, v)| c * v).sum();

        let mut expected = 0.0;
        let mut feasible = true;
        let mut added = 0;
        for t in 0..horizon {
            let omega: Vec<f64> = (0..n_nodes)
                .map(|n| x[idx.p(t, n)])
                .chain((0..n_nodes).map(|n| x[idx.w(t, n)]))
                .collect();
            let mut q = 0.0;
            let mut coef = vec![0.0; 2 * n_nodes];
            let mut rhs = 0.0;
            let mut hour_feasible = true;
            for (s, lps) in recourse.iter().enumerate() {
                let rt = &lps[t];
                match solve_from(rt, &omega, hints[s][t].as_deref(), &solver) {
                    Ok(r) => {
                        let a = rt.shape.f().tr_mul_vec(&r.sigma);
                        let sp: f64 = r.sigma.iter().zip(&rt.psi).map(|(a, b)| a * b).sum();
                        for (c, v) in coef.iter_mut().zip(&a) {
                            *c += prob[s] * v;
                        }
                        rhs += prob[s] * sp;
                        q += prob[s] * r.objective;
                        hints[s][t] = Some(r.basis);
                    }
                    Err(LpError::Infeasible { ray: Some(ray) }) => {
                        // ray' (psi + F omega) >= 0 for every feasible omega.
                        let a = rt.shape.f().tr_mul_vec(&ray);
                        let rp: f64 = ray.iter().zip(&rt.psi).map(|(a, b)| a * b).sum();
                        let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
                        let entries = (0..n_nodes)
                            .map(|n| (idx.p(t, n), -a[n] / norm))
                            .chain((0..n_nodes).map(|n| (idx.w(t, n), -a[n_nodes + n] / norm)))
                            .collect();
                        cuts.push(Cut {
                            entries,
                            rhs: rp / norm,
                        });
                        n_feas += 1;
                        added += 1;
                        hour_feasible = false;
                        break;
                    }
                    Err(e) => {
                        return Err(BenchmarkError::Recourse {
                            hour: t + 1,
                            source: e,
                        })
                    }
                }
            }
            if !hour_feasible {
                feasible = false;
                continue;
            }
            expected += q;
            let theta = x[n_da + t];
            if theta < q - opts.tol * (1.0 + q.abs()) {
                let mut entries = vec![(n_da + t, -1.0)];
                for n in 0..n_nodes {
                    entries.push((idx.p(t, n), -coef[n]));
                    entries.push((idx.w(t, n), -coef[n_nodes + n]));
                }
                cuts.push(Cut { entries, rhs });
                n_opt += 1;
                added += 1;
            }
        }
        let upper = da_cost + expected;
        let converged = feasible && (added == 0 || upper - lower <= opts.tol * (1.0 + upper.abs()));
        if converged {
            log::debug!(
                "stochastic clearing converged after {iteration} iterations, {} cuts",
                cuts.len()
            );
            let forecast = caps.clone();
            let solution = da_part(&da, &h, &sol);
            return Ok(StochasticSchedule {
                da: market.da_decision(da, solution, forecast),
                expected_cost: upper,
                lower_bound: lower,
                iterations: iteration,
                optimality_cuts: n_opt,
                feasibility_cuts: n_feas,
            });
        }
    }
    Err(BenchmarkError::NotConverged(opts.max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use approx::assert_relative_eq;

    fn flat(market: &Market, v: f64) -> Vec<f64> {
        let inst = market.instance();
        (0..inst.horizon())
            .flat_map(|_| {
                inst.wind
                    .capacity
                    .iter()
                    .map(move |&c| if c > 0.0 { v.min(c) } else { 0.0 })
            })
            .collect()
    }

    #[test]
    fn two_scenarios_hedge_low() {
        let m = Market::new(cases::iso1());
        let loads = m.instance().loads.day(0).to_vec();
        let s = stochastic_clearing(&m, &loads, &[flat(&m, 20.0), flat(&m, 40.0)], None).unwrap();
        for w in &s.da.w {
            assert_relative_eq!(w[0], 20.0, epsilon = 1e-7);
        }
        // DA 80 MW at 20, then half the time 20 MW down-regulated at 18.
        let hours = m.instance().horizon() as f64;
        assert_relative_eq!(
            s.expected_cost,
            hours * (1600.0 - 0.5 * 360.0),
            epsilon = 1e-6
        );
        assert!(s.lower_bound <= s.expected_cost + 1e-6);
    }

    #[test]
    fn single_scenario_collapses_to_perfect_foresight() {
        for inst in [cases::iso1(), cases::nine_bus()] {
            let m = Market::new(inst);
            let loads = m.instance().loads.day(0).to_vec();
            let y = flat(&m, 37.0);
            let s = stochastic_clearing(&m, &loads, std::slice::from_ref(&y), None).unwrap();
            let perfect = m.simulate(&loads, &y, &y, None).unwrap();
            assert_relative_eq!(s.expected_cost, perfect.overall_cost, max_relative = 1e-7);
            let fixed = m.run_real_time(&loads, s.da, &y, None).unwrap();
            assert_relative_eq!(
                fixed.overall_cost,
                perfect.overall_cost,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn shortfall_beyond_regulation_is_cut_off() {
        // With only 5 MW of up-regulation, scheduling more than y + 5 of wind
        // makes the recourse infeasible; the capacity bound alone allows 60.
        let mut inst = cases::iso1();
        inst.generators.up_max[0] = 5.0;
        let m = Market::new(inst);
        let loads = m.instance().loads.day(0).to_vec();
        let s = stochastic_clearing(&m, &loads, &[flat(&m, 10.0)], None).unwrap();
        for w in &s.da.w {
            assert!(w[0] <= 15.0 + 1e-7);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let m = Market::new(cases::iso1());
        let loads = m.instance().loads.day(0).to_vec();
        let y = flat(&m, 10.0);
        assert!(stochastic_clearing(&m, &loads, &[], None).is_err());
        assert!(matches!(
            stochastic_clearing(&m, &loads, &[y.clone(), y.clone()], Some(&[0.7, 0.7])),
            Err(BenchmarkError::Probabilities(_))
        ));
        assert!(stochastic_clearing(&m, &loads, &[vec![70.0; 24]], None).is_err());
    }
}
