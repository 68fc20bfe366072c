//! Instance files: a TOML description plus a `day,hour,node,load_mw` CSV.
//!
//! ```toml
//! name = "two-node"
//! horizon = 24
//! feature_dim = 4
//!
//! [nodes]
//! count = 2
//!
//! [slack]
//! node = 1
//!
//! [[lines]]
//! from = 1
//! to = 2
//! reactance = 0.1
//! capacity = 50.0
//!
//! [[generators]]
//! node = 1
//! rho = 20.0
//! p_max = 150.0
//! ramp = 90.0
//! rho_plus = 50.0
//! rho_minus = 18.0
//! up_max = 60.0
//! down_max = 60.0
//!
//! [[wind]]
//! node = 2
//! capacity = 80.0
//!
//! [loads]
//! file = "two-node-loads.csv"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    GeneratorFleet, InstanceError, Line, LoadSeries, MarketInstance, Network, Violation, WindFleet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    pub nodes: NodesSection,
    pub slack: SlackSection,
    #[serde(default)]
    pub lines: Vec<LineRow>,
    #[serde(default)]
    pub generators: Vec<GeneratorRow>,
    #[serde(default)]
    pub wind: Vec<WindRow>,
    pub loads: LoadsSection,
}

fn default_horizon() -> usize {
    24
}

fn default_feature_dim() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesSection {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackSection {
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRow {
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRow {
    pub node: usize,
    pub rho: f64,
    pub p_max: f64,
    pub ramp: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub up_max: f64,
    pub down_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindRow {
    pub node: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsSection {
    /// Path of the load CSV, relative to the instance file.
    pub file: String,
}

#[derive(Debug, Deserialize)]
struct LoadRecord {
    day: i64,
    hour: usize,
    node: usize,
    load_mw: f64,
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<MarketInstance, InstanceError> {
    let path = path.as_ref();
    let text = read(path)?;
    let file: InstanceFile = toml::from_str(&text).map_err(|e| InstanceError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let loads_path: PathBuf = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&file.loads.file);
    let csv = read(&loads_path)?;
    build(file, &csv, &loads_path.display().to_string())
}

/// Parses an instance from in-memory TOML and load CSV text.
pub fn parse_instance(toml_text: &str, loads_csv: &str) -> Result<MarketInstance, InstanceError> {
    let file: InstanceFile = toml::from_str(toml_text).map_err(|e| InstanceError::Parse {
        path: "<instance>".into(),
        message: e.to_string(),
    })?;
    build(file, loads_csv, "<loads>")
}

fn read(path: &Path) -> Result<String, InstanceError> {
    fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn build(
    file: InstanceFile,
    loads_csv: &str,
    loads_name: &str,
) -> Result<MarketInstance, InstanceError> {
    let n = file.nodes.count;
    let mut violations = Vec::new();
    let mut node_index = |what: &str, node: usize| -> Option<usize> {
        if node == 0 || node > n {
            violations.push(Violation {
                check: "node out of range".into(),
                detail: format!("{what} references node {node}, expected 1..={n}"),
            });
            None
        } else {
            Some(node - 1)
        }
    };

    let slack = node_index("slack", file.slack.node);
    let mut lines = Vec::with_capacity(file.lines.len());
    for (k, l) in file.lines.iter().enumerate() {
        let label = format!("line {}", k + 1);
        if let (Some(from), Some(to)) = (node_index(&label, l.from), node_index(&label, l.to)) {
            lines.push(Line {
                from,
                to,
                reactance: l.reactance,
                capacity: l.capacity,
            });
        }
    }

    let mut generators = GeneratorFleet::empty(n);
    let mut duplicate_gen = Vec::new();
    for g in &file.generators {
        let Some(i) = node_index("generator", g.node) else {
            continue;
        };
        if generators.present[i] {
            duplicate_gen.push(g.node);
        }
        generators.present[i] = true;
        generators.rho[i] = g.rho;
        generators.p_max[i] = g.p_max;
        generators.ramp[i] = g.ramp;
        generators.rho_plus[i] = g.rho_plus;
        generators.rho_minus[i] = g.rho_minus;
        generators.up_max[i] = g.up_max;
        generators.down_max[i] = g.down_max;
    }
    let mut wind = vec![0.0; n];
    for w in &file.wind {
        if let Some(i) = node_index("wind farm", w.node) {
            wind[i] += w.capacity;
        }
    }
    for node in duplicate_gen {
        violations.push(Violation {
            check: "multiple generators at node".into(),
            detail: format!("node {node}; model extra units as additional nodes"),
        });
    }

    let loads = match parse_loads(loads_csv, n, file.horizon) {
        Ok(l) => Some(l),
        Err(message) => {
            return Err(InstanceError::Parse {
                path: loads_name.into(),
                message,
            })
        }
    };
    if !violations.is_empty() {
        return Err(InstanceError::Invalid(violations));
    }
    let network = Network::new(n, lines, slack.expect("checked above"))?;
    let instance = MarketInstance {
        name: file.name,
        network,
        generators,
        wind: WindFleet {
            capacity: wind,
            feature_dim: file.feature_dim,
        },
        loads: loads.expect("checked above"),
    };
    instance.validate()?;
    Ok(instance)
}

fn parse_loads(text: &str, n: usize, horizon: usize) -> Result<LoadSeries, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut days: BTreeMap<i64, Vec<Vec<f64>>> = BTreeMap::new();
    let mut seen: BTreeMap<i64, Vec<bool>> = BTreeMap::new();
    for (row, rec) in reader.deserialize::<LoadRecord>().enumerate() {
        // Header is line 1, first record line 2.
        let line = row + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        if rec.hour == 0 || rec.hour > horizon {
            return Err(format!(
                "line {line}: hour {} outside 1..={horizon}",
                rec.hour
            ));
        }
        if rec.node == 0 || rec.node > n {
            return Err(format!("line {line}: node {} outside 1..={n}", rec.node));
        }
        let day = days
            .entry(rec.day)
            .or_insert_with(|| vec![vec![0.0; n]; horizon]);
        day[rec.hour - 1][rec.node - 1] = rec.load_mw;
        seen.entry(rec.day).or_insert_with(|| vec![false; horizon])[rec.hour - 1] = true;
    }
    if days.is_empty() {
        return Err("no load records".into());
    }
    for (day, hours) in &seen {
        if let Some(h) = hours.iter().position(|s| !s) {
            return Err(format!("day {day} is missing hour {}", h + 1));
        }
    }
    let labels = days.keys().copied().collect();
    Ok(LoadSeries::new(
        horizon,
        labels,
        days.into_values().collect(),
    ))
}

impl InstanceFile {
    pub fn from_instance(inst: &MarketInstance, loads_file: &str) -> Self {
        let g = &inst.generators;
        InstanceFile {
            name: inst.name.clone(),
            horizon: inst.horizon(),
            feature_dim: inst.wind.feature_dim,
            nodes: NodesSection {
                count: inst.node_count(),
            },
            slack: SlackSection {
                node: inst.network.slack + 1,
            },
            lines: inst
                .network
                .lines
                .iter()
                .map(|l| LineRow {
                    from: l.from + 1,
                    to: l.to + 1,
                    reactance: l.reactance,
                    capacity: l.capacity,
                })
                .collect(),
            generators: g
                .nodes()
                .map(|i| GeneratorRow {
                    node: i + 1,
                    rho: g.rho[i],
                    p_max: g.p_max[i],
                    ramp: g.ramp[i],
                    rho_plus: g.rho_plus[i],
                    rho_minus: g.rho_minus[i],
                    up_max: g.up_max[i],
                    down_max: g.down_max[i],
                })
                .collect(),
            wind: inst
                .wind
                .farm_nodes()
                .into_iter()
                .map(|i| WindRow {
                    node: i + 1,
                    capacity: inst.wind.capacity[i],
                })
                .collect(),
            loads: LoadsSection {
                file: loads_file.into(),
            },
        }
    }
}

pub(crate) fn loads_to_csv(loads: &LoadSeries) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "hour", "node", "load_mw"]).unwrap();
    for (label, day) in loads.day_labels.iter().zip(loads.days()) {
        for (tau, hour) in day.iter().enumerate() {
            for (n, l) in hour.iter().enumerate() {
                w.serialize((label, tau + 1, n + 1, l)).unwrap();
            }
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Writes `<stem>.toml` and `<stem>-loads.csv` into `dir`, returning the
/// instance file path.
pub fn write_instance(
    inst: &MarketInstance,
    dir: &Path,
    stem: &str,
) -> Result<PathBuf, InstanceError> {
    let loads_name = format!("{stem}-loads.csv");
    let file = InstanceFile::from_instance(inst, &loads_name);
    let toml_text = toml::to_string(&file).expect("instance serializes");
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| InstanceError::Io { path: p, source }
    };
    let toml_path = dir.join(format!("{stem}.toml"));
    let csv_path = dir.join(&loads_name);
    fs::write(&toml_path, toml_text).map_err(io(&toml_path))?;
    fs::write(&csv_path, loads_to_csv(&inst.loads)).map_err(io(&csv_path))?;
    Ok(toml_path)
}
