use crate::lp::{CompactLp, LpBuilder};
use crate::sysmodel::MarketInstance;

use super::IndexMap;

/// Row positions in the DA program needed for prices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaLayout {
    /// `(le, ge)` balance rows per hour.
    pub balance: Vec<(usize, usize)>,
    /// `H (p + w) <= ...` rows, `[hour][line]`.
    pub flow_max: Vec<Vec<usize>>,
    /// `-H (p + w) <= ...` rows, `[hour][line]`.
    pub flow_min: Vec<Vec<usize>>,
}

/// Row positions in an RT program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtLayout {
    pub balance: (usize, usize),
    pub flow_max: Vec<usize>,
    pub flow_min: Vec<usize>,
}

fn ptdf_load(inst: &MarketInstance, load: &[f64]) -> Vec<f64> {
    inst.network.flows(load)
}

/// DA clearing for one day of loads (`loads[t][n]`). The parameter is the
/// stacked forecast `yhat_d`, which enters only the wind upper bounds.
///
/// Nodes without a generator get `p = 0` and nodes without wind get `w = 0`
/// as equality pairs, so forecast entries at those nodes have no effect.
pub fn build_da(inst: &MarketInstance, loads: &[Vec<f64>]) -> (CompactLp, DaLayout) {
    let n_nodes = inst.node_count();
    let horizon = inst.horizon();
    assert_eq!(loads.len(), horizon, "one load vector per hour");
    let idx = IndexMap::new(n_nodes, horizon);
    let mut names = vec![String::new(); idx.da_len()];
    for t in 0..horizon {
        for n in 0..n_nodes {
            names[idx.p(t, n)] = format!("p_{}_{}", t + 1, n + 1);
            names[idx.w(t, n)] = format!("w_{}_{}", t + 1, n + 1);
        }
    }
    let mut b = LpBuilder::new("da", names, idx.forecast_len());
    let g = &inst.generators;
    let net = &inst.network;
    let cap = &inst.wind.capacity;
    for t in 0..horizon {
        for n in 0..n_nodes {
            b.set_cost(idx.p(t, n), g.rho[n]);
        }
    }

    let mut layout = DaLayout {
        balance: Vec::with_capacity(horizon),
        flow_max: Vec::with_capacity(horizon),
        flow_min: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let l = &loads[t];
        let h = t + 1;
        let all: Vec<(usize, f64)> = (0..n_nodes)
            .flat_map(|n| [(idx.p(t, n), 1.0), (idx.w(t, n), 1.0)])
            .collect();
        layout
            .balance
            .push(b.eq(&format!("bal_{h}"), &all, l.iter().sum(), &[]));

        let hl = ptdf_load(inst, l);
        let mut fmax = Vec::with_capacity(net.line_count());
        let mut fmin = Vec::with_capacity(net.line_count());
        for k in 0..net.line_count() {
            let row = net.ptdf_row(k);
            let pos: Vec<(usize, f64)> = (0..n_nodes)
                .flat_map(|n| [(idx.p(t, n), row[n]), (idx.w(t, n), row[n])])
                .collect();
            let neg: Vec<(usize, f64)> = pos.iter().map(|&(j, v)| (j, -v)).collect();
            let fbar = net.lines[k].capacity;
            fmax.push(b.le(format!("fmax_{h}_{}", k + 1), &pos, fbar + hl[k], &[]));
            fmin.push(b.le(format!("fmin_{h}_{}", k + 1), &neg, fbar - hl[k], &[]));
        }
        layout.flow_max.push(fmax);
        layout.flow_min.push(fmin);

        for n in 0..n_nodes {
            let p = idx.p(t, n);
            if g.present[n] {
                b.le(format!("pmax_{h}_{}", n + 1), &[(p, 1.0)], g.p_max[n], &[]);
                b.le(format!("pmin_{h}_{}", n + 1), &[(p, -1.0)], 0.0, &[]);
                if t > 0 {
                    let q = idx.p(t - 1, n);
                    b.le(
                        format!("rup_{h}_{}", n + 1),
                        &[(p, 1.0), (q, -1.0)],
                        g.ramp[n],
                        &[],
                    );
                    b.le(
                        format!("rdn_{h}_{}", n + 1),
                        &[(p, -1.0), (q, 1.0)],
                        g.ramp[n],
                        &[],
                    );
                }
            } else {
                b.eq(&format!("pfix_{h}_{}", n + 1), &[(p, 1.0)], 0.0, &[]);
            }
        }
        for n in 0..n_nodes {
            let w = idx.w(t, n);
            if cap[n] > 0.0 {
                b.le(
                    format!("wmax_{h}_{}", n + 1),
                    &[(w, 1.0)],
                    0.0,
                    &[(idx.yhat(t, n), 1.0)],
                );
                b.le(format!("wmin_{h}_{}", n + 1), &[(w, -1.0)], 0.0, &[]);
            } else {
                b.eq(&format!("wfix_{h}_{}", n + 1), &[(w, 1.0)], 0.0, &[]);
            }
        }
    }
    (b.build(), layout)
}

fn rt_names(n_nodes: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * n_nodes);
    for prefix in ["pup", "pdn", "spill"] {
        for n in 0..n_nodes {
            names.push(format!("{prefix}_{}", n + 1));
        }
    }
    names
}

/// Shared rows of every RT program: balance, flows, regulation limits, the
/// simplified generation box and the spill bound. `p_star` is the parameter
/// column of `p*_t`, `w_star` that of `w*_t`.
fn rt_common(
    inst: &MarketInstance,
    family: &str,
    params: usize,
    load: &[f64],
    y: &[f64],
) -> (LpBuilder, RtLayout) {
    let n_nodes = inst.node_count();
    let g = &inst.generators;
    let net = &inst.network;
    let cap = &inst.wind.capacity;
    let up = |n: usize| n;
    let dn = |n: usize| n_nodes + n;
    let sp = |n: usize| 2 * n_nodes + n;
    let p_star = |n: usize| n;
    let w_star = |n: usize| n_nodes + n;

    let mut b = LpBuilder::new(family, rt_names(n_nodes), params);
    for n in 0..n_nodes {
        b.set_cost(up(n), g.rho_plus[n]);
        b.set_cost(dn(n), -g.rho_minus[n]);
    }

    // 1'(p_up - p_down - spill) = 1'(w* - y)
    let bal: Vec<(usize, f64)> = (0..n_nodes)
        .flat_map(|n| [(up(n), 1.0), (dn(n), -1.0), (sp(n), -1.0)])
        .collect();
    let f_bal: Vec<(usize, f64)> = (0..n_nodes).map(|n| (w_star(n), 1.0)).collect();
    let balance = b.eq("bal", &bal, -y.iter().sum::<f64>(), &f_bal);

    // H (p* + p_up - p_down + y - spill - l) within +-fbar; w* cancels.
    let hy = net.flows(y);
    let hl = net.flows(load);
    let mut flow_max = Vec::with_capacity(net.line_count());
    let mut flow_min = Vec::with_capacity(net.line_count());
    for k in 0..net.line_count() {
        let row = net.ptdf_row(k);
        let pos: Vec<(usize, f64)> = (0..n_nodes)
            .flat_map(|n| [(up(n), row[n]), (dn(n), -row[n]), (sp(n), -row[n])])
            .collect();
        let neg: Vec<(usize, f64)> = pos.iter().map(|&(j, v)| (j, -v)).collect();
        let f_pos: Vec<(usize, f64)> = (0..n_nodes).map(|n| (p_star(n), -row[n])).collect();
        let f_neg: Vec<(usize, f64)> = (0..n_nodes).map(|n| (p_star(n), row[n])).collect();
        let fbar = net.lines[k].capacity;
        flow_max.push(b.le(
            format!("fmax_{}", k + 1),
            &pos,
            fbar + hl[k] - hy[k],
            &f_pos,
        ));
        flow_min.push(b.le(
            format!("fmin_{}", k + 1),
            &neg,
            fbar - hl[k] + hy[k],
            &f_neg,
        ));
    }

    for n in 0..n_nodes {
        let i = n + 1;
        if g.present[n] {
            b.le(format!("upmax_{i}"), &[(up(n), 1.0)], g.up_max[n], &[]);
            b.le(format!("upmin_{i}"), &[(up(n), -1.0)], 0.0, &[]);
            b.le(format!("dnmax_{i}"), &[(dn(n), 1.0)], g.down_max[n], &[]);
            b.le(format!("dnmin_{i}"), &[(dn(n), -1.0)], 0.0, &[]);
            // p_up <= pmax - p*,  p_down <= p*
            b.le(
                format!("upgen_{i}"),
                &[(up(n), 1.0)],
                g.p_max[n],
                &[(p_star(n), -1.0)],
            );
            b.le(
                format!("dngen_{i}"),
                &[(dn(n), 1.0)],
                0.0,
                &[(p_star(n), 1.0)],
            );
        } else {
            b.eq(&format!("upfix_{i}"), &[(up(n), 1.0)], 0.0, &[]);
            b.eq(&format!("dnfix_{i}"), &[(dn(n), 1.0)], 0.0, &[]);
        }
        if cap[n] > 0.0 {
            b.le(format!("spmax_{i}"), &[(sp(n), 1.0)], y[n], &[]);
            b.le(format!("spmin_{i}"), &[(sp(n), -1.0)], 0.0, &[]);
        } else {
            b.eq(&format!("spfix_{i}"), &[(sp(n), 1.0)], 0.0, &[]);
        }
    }
    (
        b,
        RtLayout {
            balance,
            flow_max,
            flow_min,
        },
    )
}

/// RT clearing at the first hour. Parameters: `[p*_1; w*_1]`; the
/// realization `y` and load enter `psi`.
pub fn build_rt_first(inst: &MarketInstance, load: &[f64], y: &[f64]) -> (CompactLp, RtLayout) {
    let (b, layout) = rt_common(inst, "rt1", 2 * inst.node_count(), load, y);
    (b.build(), layout)
}

/// RT clearing at a later hour. Parameters:
/// `[p*_t; w*_t; p*_{t-1}; p_up_{t-1}; p_down_{t-1}]`. The ramp coupling to
/// the previous hour's eventual output is written as two upper bounds:
///
/// ```text
/// p_up   <= r + (p*_{t-1} + p_up_{t-1} - p_down_{t-1}) - p*_t
/// p_down <= p*_t - (p*_{t-1} + p_up_{t-1} - p_down_{t-1}) + r
/// ```
pub fn build_rt(inst: &MarketInstance, load: &[f64], y: &[f64]) -> (CompactLp, RtLayout) {
    let n_nodes = inst.node_count();
    let (mut b, layout) = rt_common(inst, "rt", 5 * n_nodes, load, y);
    let g = &inst.generators;
    for n in 0..n_nodes {
        if !g.present[n] {
            continue;
        }
        let i = n + 1;
        let (p_now, p_prev, up_prev, dn_prev) =
            (n, 2 * n_nodes + n, 3 * n_nodes + n, 4 * n_nodes + n);
        b.le(
            format!("upramp_{i}"),
            &[(n, 1.0)],
            g.ramp[n],
            &[
                (p_prev, 1.0),
                (up_prev, 1.0),
                (dn_prev, -1.0),
                (p_now, -1.0),
            ],
        );
        b.le(
            format!("dnramp_{i}"),
            &[(n_nodes + n, 1.0)],
            g.ramp[n],
            &[
                (p_now, 1.0),
                (p_prev, -1.0),
                (up_prev, -1.0),
                (dn_prev, 1.0),
            ],
        );
    }
    (b.build(), layout)
}
