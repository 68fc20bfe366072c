//! Market instances: network, generator and wind fleets, loads.
//!
//! Every per-node quantity is a length-`N` vector, one generator and one wind
//! farm slot per node. Nodes without a generator carry zero capacities, nodes
//! without wind carry zero wind capacity. Node indices are zero-based in code
//! and one-based in instance files.

mod io;
mod ptdf;

pub use io::{load_instance, parse_instance, write_instance, InstanceFile};
pub use ptdf::{compute_ptdf, PtdfError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A transmission line. Flow is positive from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Per-unit series reactance.
    pub reactance: f64,
    /// Thermal limit in MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub node_count: usize,
    pub lines: Vec<Line>,
    pub slack: usize,
    /// Line-by-node PTDF matrix, row-major (`lines.len() * node_count`).
    ptdf: Vec<f64>,
}

impl Network {
    pub fn new(node_count: usize, lines: Vec<Line>, slack: usize) -> Result<Self, PtdfError> {
        let ptdf = compute_ptdf(node_count, &lines, slack)?;
        Ok(Network {
            node_count,
            lines,
            slack,
            ptdf,
        })
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// Sensitivity of the flow on `line` to an injection at `node`.
    #[inline]
    pub fn ptdf(&self, line: usize, node: usize) -> f64 {
        self.ptdf[line * self.node_count + node]
    }

    pub fn ptdf_row(&self, line: usize) -> &[f64] {
        &self.ptdf[line * self.node_count..(line + 1) * self.node_count]
    }

    /// Line flows `H * injection`.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        assert_eq!(injection.len(), self.node_count);
        (0..self.line_count())
            .map(|k| {
                self.ptdf_row(k)
                    .iter()
                    .zip(injection)
                    .map(|(h, u)| h * u)
                    .sum()
            })
            .collect()
    }
}

/// Generator data indexed by node. See the module docs for the convention.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratorFleet {
    pub rho: Vec<f64>,
    pub p_max: Vec<f64>,
    pub ramp: Vec<f64>,
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
    pub up_max: Vec<f64>,
    pub down_max: Vec<f64>,
    /// Whether a generator is connected at each node.
    pub present: Vec<bool>,
}

impl GeneratorFleet {
    pub fn empty(node_count: usize) -> Self {
        GeneratorFleet {
            rho: vec![0.0; node_count],
            p_max: vec![0.0; node_count],
            ramp: vec![0.0; node_count],
            rho_plus: vec![0.0; node_count],
            rho_minus: vec![0.0; node_count],
            up_max: vec![0.0; node_count],
            down_max: vec![0.0; node_count],
            present: vec![false; node_count],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.present
            .iter()
            .enumerate()
            .filter_map(|(n, &p)| p.then_some(n))
    }

    /// The generator with the lowest day-ahead marginal cost.
    pub fn cheapest(&self) -> Option<usize> {
        self.nodes()
            .min_by(|&a, &b| self.rho[a].total_cmp(&self.rho[b]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindFleet {
    /// Installed capacity per node (zero where no farm is connected).
    pub capacity: Vec<f64>,
    /// Context dimension per farm.
    pub feature_dim: usize,
}

impl WindFleet {
    /// Nodes hosting a farm, in node order. Farm `i` of a dataset is the
    /// `i`-th entry.
    pub fn farm_nodes(&self) -> Vec<usize> {
        self.capacity
            .iter()
            .enumerate()
            .filter_map(|(n, &c)| (c > 0.0).then_some(n))
            .collect()
    }

    pub fn farm_count(&self) -> usize {
        self.capacity.iter().filter(|&&c| c > 0.0).count()
    }

    pub fn farm_capacities(&self) -> Vec<f64> {
        self.farm_nodes()
            .iter()
            .map(|&n| self.capacity[n])
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.capacity.iter().sum()
    }
}

/// Hourly nodal loads for a sequence of days.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub horizon: usize,
    /// Calendar labels of the stored days, as read from the load file.
    pub day_labels: Vec<i64>,
    /// `days[d][tau][n]` in MW.
    days: Vec<Vec<Vec<f64>>>,
}

impl LoadSeries {
    pub fn new(horizon: usize, day_labels: Vec<i64>, days: Vec<Vec<Vec<f64>>>) -> Self {
        assert_eq!(day_labels.len(), days.len());
        LoadSeries {
            horizon,
            day_labels,
            days,
        }
    }

    /// The same hourly profile repeated for every day.
    pub fn constant(horizon: usize, per_node: Vec<f64>) -> Self {
        LoadSeries {
            horizon,
            day_labels: vec![1],
            days: vec![vec![per_node; horizon]],
        }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Loads of day `d`. Day indices wrap around the stored days, so a
    /// single-day file serves every day of a dataset.
    pub fn day(&self, d: usize) -> &[Vec<f64>] {
        &self.days[d % self.days.len()]
    }

    pub fn days(&self) -> &[Vec<Vec<f64>>] {
        &self.days
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    pub name: String,
    pub network: Network,
    pub generators: GeneratorFleet,
    pub wind: WindFleet,
    pub loads: LoadSeries,
}

/// A failed instance invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.check, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid instance: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Network(#[from] PtdfError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl InstanceError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            InstanceError::Invalid(v) => v,
            _ => &[],
        }
    }

    pub fn has_check(&self, check: &str) -> bool {
        self.violations().iter().any(|v| v.check == check)
    }
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl MarketInstance {
    pub fn node_count(&self) -> usize {
        self.network.node_count
    }

    pub fn horizon(&self) -> usize {
        self.loads.horizon
    }

    /// Checks every invariant and collects all violations.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(InstanceError::Invalid(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        macro_rules! fail {
            ($check:expr, $detail:expr $(,)?) => {
                out.push(Violation {
                    check: $check.to_string(),
                    detail: $detail,
                })
            };
        }
        let n = self.node_count();
        let g = &self.generators;

        for (name, len) in [
            ("rho", g.rho.len()),
            ("p_max", g.p_max.len()),
            ("ramp", g.ramp.len()),
            ("rho_plus", g.rho_plus.len()),
            ("rho_minus", g.rho_minus.len()),
            ("up_max", g.up_max.len()),
            ("down_max", g.down_max.len()),
            ("present", g.present.len()),
            ("wind capacity", self.wind.capacity.len()),
        ] {
            if len != n {
                fail!(
                    "dimension mismatch",
                    format!("{name} has {len} entries for {n} nodes"),
                );
            }
        }
        if !out.is_empty() {
            return out;
        }

        for (k, line) in self.network.lines.iter().enumerate() {
            if !(line.reactance > 0.0) {
                fail!(
                    "non-positive reactance",
                    format!("line {} has reactance {}", k + 1, line.reactance),
                );
            }
            if !(line.capacity > 0.0) {
                fail!(
                    "non-positive line capacity",
                    format!("line {} has capacity {}", k + 1, line.capacity),
                );
            }
        }

        for node in 0..n {
            let label = node + 1;
            if !g.present[node] {
                if g.p_max[node] != 0.0 || g.up_max[node] != 0.0 || g.down_max[node] != 0.0 {
                    fail!(
                        "capacity without generator",
                        format!("node {label} has no generator but nonzero limits"),
                    );
                }
                continue;
            }
            if !(g.rho_plus[node] > g.rho[node]) {
                fail!(
                    "non-positive up-regulation opportunity loss",
                    format!(
                        "node {label}: rho_plus {} <= rho {}",
                        g.rho_plus[node], g.rho[node]
                    ),
                );
            }
            if !(g.rho[node] > g.rho_minus[node]) {
                fail!(
                    "non-positive down-regulation opportunity loss",
                    format!(
                        "node {label}: rho {} <= rho_minus {}",
                        g.rho[node], g.rho_minus[node]
                    ),
                );
            }
            if !(g.rho_minus[node] > 0.0) {
                fail!(
                    "non-positive down-regulation utility",
                    format!("node {label}: rho_minus {}", g.rho_minus[node]),
                );
            }
            for (name, value) in [
                ("p_max", g.p_max[node]),
                ("ramp", g.ramp[node]),
                ("up_max", g.up_max[node]),
                ("down_max", g.down_max[node]),
            ] {
                if !(value >= 0.0) || !value.is_finite() {
                    fail!(
                        "negative generator limit",
                        format!("node {label}: {name} = {value}"),
                    );
                }
            }
        }

        for (check, values) in [
            ("marginal costs not pairwise distinct", &g.rho),
            ("up-regulation costs not pairwise distinct", &g.rho_plus),
            (
                "down-regulation utilities not pairwise distinct",
                &g.rho_minus,
            ),
        ] {
            let nodes: Vec<usize> = g.nodes().collect();
            for (i, &a) in nodes.iter().enumerate() {
                for &b in &nodes[i + 1..] {
                    if values[a] == values[b] {
                        fail!(
                            check,
                            format!("nodes {} and {} both at {}", a + 1, b + 1, values[a]),
                        );
                    }
                }
            }
        }

        if self.wind.capacity.iter().any(|&c| !(c >= 0.0)) {
            fail!(
                "negative wind capacity",
                "wind capacity must be >= 0".into()
            );
        }
        if !self.wind.capacity.iter().any(|&c| c > 0.0) {
            fail!(
                "no wind capacity",
                "at least one node must host wind".into()
            );
        }

        if self.loads.is_empty() {
            fail!("empty load series", "no load days".into());
        }
        for (d, day) in self.loads.days().iter().enumerate() {
            if day.len() != self.loads.horizon {
                fail!(
                    "incomplete load day",
                    format!(
                        "day {} has {} hours, expected {}",
                        self.loads.day_labels[d],
                        day.len(),
                        self.loads.horizon
                    ),
                );
            }
            for hour in day {
                if hour.len() != n {
                    fail!(
                        "dimension mismatch",
                        format!("load vector of length {}", hour.len())
                    );
                } else if hour.iter().any(|&l| !(l >= 0.0)) {
                    fail!(
                        "negative load",
                        format!("day {} has a negative load", self.loads.day_labels[d]),
                    );
                }
            }
        }
        out
    }

    /// Warnings for instances whose real-time market may run out of
    /// up-regulation when wind falls far short of the schedule.
    pub fn validate_flexibility(&self) -> Vec<String> {
        let up: f64 = self.generators.up_max.iter().sum();
        let wind = self.wind.total();
        if up < wind {
            vec![format!(
                "total up-regulation capacity {up} MW is below total wind capacity {wind} MW; \
                 real-time clearing may be infeasible for extreme shortfalls"
            )]
        } else {
            Vec::new()
        }
    }
}
