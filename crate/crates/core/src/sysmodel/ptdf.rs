use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

use super::Line;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtdfError {
    #[error("network has no nodes")]
    Empty,
    #[error("slack node {slack} out of range for {nodes} nodes")]
    SlackOutOfRange { slack: usize, nodes: usize },
    #[error("line {line} references node {node} outside 1..={nodes}")]
    BadEndpoint {
        line: usize,
        node: usize,
        nodes: usize,
    },
    #[error("line {line} has non-positive reactance {reactance}")]
    BadReactance { line: usize, reactance: f64 },
    #[error("network is disconnected: node {node} unreachable from the slack")]
    Disconnected { node: usize },
    #[error("reduced susceptance matrix is singular")]
    Singular,
}

/// Builds the line-by-node PTDF matrix (row-major) with the slack absorbing
/// the residual injection.
///
/// The reduced nodal susceptance matrix (slack row and column removed) is
/// inverted; a line `k = (i, j)` with reactance `x` then has
/// `H[k, n] = (X[i, n] - X[j, n]) / x` where `X` is that inverse padded with
/// zeros at the slack.
pub fn compute_ptdf(
    node_count: usize,
    lines: &[Line],
    slack: usize,
) -> Result<Vec<f64>, PtdfError> {
    if node_count == 0 {
        return Err(PtdfError::Empty);
    }
    if slack >= node_count {
        return Err(PtdfError::SlackOutOfRange {
            slack,
            nodes: node_count,
        });
    }
    for (k, l) in lines.iter().enumerate() {
        for node in [l.from, l.to] {
            if node >= node_count {
                return Err(PtdfError::BadEndpoint {
                    line: k + 1,
                    node: node + 1,
                    nodes: node_count,
                });
            }
        }
        if !(l.reactance > 0.0) {
            return Err(PtdfError::BadReactance {
                line: k + 1,
                reactance: l.reactance,
            });
        }
    }
    check_connected(node_count, lines, slack)?;

    let reduced = |n: usize| if n < slack { n } else { n - 1 };
    let m = node_count - 1;
    let mut b = DMatrix::<f64>::zeros(m, m);
    for l in lines {
        let y = 1.0 / l.reactance;
        let (i, j) = (l.from, l.to);
        if i != slack {
            b[(reduced(i), reduced(i))] += y;
        }
        if j != slack {
            b[(reduced(j), reduced(j))] += y;
        }
        if i != slack && j != slack {
            b[(reduced(i), reduced(j))] -= y;
            b[(reduced(j), reduced(i))] -= y;
        }
    }
    let x = if m == 0 {
        DMatrix::zeros(0, 0)
    } else {
        b.lu().try_inverse().ok_or(PtdfError::Singular)?
    };
    let entry = |i: usize, n: usize| {
        if i == slack || n == slack {
            0.0
        } else {
            x[(reduced(i), reduced(n))]
        }
    };

    let mut h = vec![0.0; lines.len() * node_count];
    for (k, l) in lines.iter().enumerate() {
        for n in 0..node_count {
            h[k * node_count + n] = (entry(l.from, n) - entry(l.to, n)) / l.reactance;
        }
    }
    Ok(h)
}

fn check_connected(node_count: usize, lines: &[Line], slack: usize) -> Result<(), PtdfError> {
    let mut adj = vec![Vec::new(); node_count];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; node_count];
    let mut queue = VecDeque::from([slack]);
    seen[slack] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(node) => Err(PtdfError::Disconnected { node: node + 1 }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(from: usize, to: usize, reactance: f64) -> Line {
        Line {
            from,
            to,
            reactance,
            capacity: 100.0,
        }
    }

    #[test]
    fn two_node_full_transfer() {
        let h = compute_ptdf(2, &[line(0, 1, 0.1)], 0).unwrap();
        assert_eq!(h, vec![0.0, -1.0]);
    }

    #[test]
    fn three_node_ring() {
        let lines = [line(0, 1, 1.0), line(1, 2, 1.0), line(2, 0, 1.0)];
        let h = compute_ptdf(3, &lines, 0).unwrap();
        assert_abs_diff_eq!(h[1], -2.0 / 3.0, epsilon = 1e-12);
        for k in 0..3 {
            assert_eq!(h[k * 3], 0.0);
        }
    }

    #[test]
    fn single_node_has_no_lines() {
        assert!(compute_ptdf(1, &[], 0).unwrap().is_empty());
    }

    #[test]
    fn disconnected_rejected() {
        let err = compute_ptdf(3, &[line(0, 1, 1.0)], 0).unwrap_err();
        assert_eq!(err, PtdfError::Disconnected { node: 3 });
    }

    /// Direct DC power flow: solve the reduced system for angles and read
    /// off `(theta_i - theta_j) / x` on every line.
    fn dc_flows(n: usize, lines: &[Line], slack: usize, inj: &[f64]) -> Vec<f64> {
        let mut b = DMatrix::<f64>::zeros(n, n);
        for l in lines {
            let y = 1.0 / l.reactance;
            b[(l.from, l.from)] += y;
            b[(l.to, l.to)] += y;
            b[(l.from, l.to)] -= y;
            b[(l.to, l.from)] -= y;
        }
        // Pin the slack angle by replacing its equation.
        let mut rhs = nalgebra::DVector::from_column_slice(inj);
        for c in 0..n {
            b[(slack, c)] = if c == slack { 1.0 } else { 0.0 };
        }
        rhs[slack] = 0.0;
        let theta = b.lu().solve(&rhs).unwrap();
        lines
            .iter()
            .map(|l| (theta[l.from] - theta[l.to]) / l.reactance)
            .collect()
    }

    proptest! {
        #[test]
        fn superposition_matches_dc_solve(
            n in 2usize..=3,
            xs in proptest::collection::vec(0.05f64..2.0, 3),
            raw in proptest::collection::vec(-50.0f64..50.0, 3),
            slack in 0usize..3,
        ) {
            let slack = slack % n;
            let lines: Vec<Line> = if n == 2 {
                vec![line(0, 1, xs[0])]
            } else {
                vec![line(0, 1, xs[0]), line(1, 2, xs[1]), line(2, 0, xs[2])]
            };
            let mut inj = raw[..n].to_vec();
            let mean = inj.iter().sum::<f64>() / n as f64;
            inj.iter_mut().for_each(|u| *u -= mean);

            let h = compute_ptdf(n, &lines, slack).unwrap();
            let direct = dc_flows(n, &lines, slack, &inj);
            for k in 0..lines.len() {
                let f: f64 = (0..n).map(|j| h[k * n + j] * inj[j]).sum();
                prop_assert!((f - direct[k]).abs() <= 1e-10 * (1.0 + direct[k].abs()));
            }
        }
    }
}
