//! File plumbing shared by the subcommands.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use valcast::clearing::{DaDecision, Market};
use valcast::data::{load_csv, Dataset, ACTUALS_FILE, FEATURES_FILE};
use valcast::lp::LpSolution;
use valcast::sysmodel::{load_instance, MarketInstance};

/// Bad command-line input that the library never saw.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// An audit found a settlement violation.
#[derive(Debug)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Violation {}

/// Lifts a library error into [`valcast::Error`] so the exit code can see
/// its kind.
pub trait Lib<T> {
    fn lib(self) -> Result<T>;
}

impl<T, E> Lib<T> for std::result::Result<T, E>
where
    valcast::Error: From<E>,
{
    fn lib(self) -> Result<T> {
        self.map_err(|e| valcast::Error::from(e).into())
    }
}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// A path to an instance file, or the name of a bundled case.
pub fn resolve_instance(name: &str) -> Result<MarketInstance> {
    let path = Path::new(name);
    if path.exists() {
        return load_instance(path)
            .lib()
            .with_context(|| format!("loading instance {name}"));
    }
    valcast::cases::by_name(name)
        .ok_or_else(|| invalid(format!("no instance file or bundled case named {name:?}")))
}

pub fn load_dataset(dir: &Path, inst: &MarketInstance) -> Result<Dataset> {
    load_csv(
        &dir.join(FEATURES_FILE),
        &dir.join(ACTUALS_FILE),
        &inst.wind.farm_capacities(),
        inst.horizon(),
    )
    .lib()
    .with_context(|| format!("loading dataset from {}", dir.display()))
}

#[derive(Debug, Deserialize)]
struct WindRow {
    hour: usize,
    node: usize,
    value: f64,
}

/// Reads a `hour,node,value` file into the stacked nodal vector. Hours and
/// nodes are one-based; missing entries are zero.
pub fn read_wind(path: &Path, inst: &MarketInstance) -> Result<Vec<f64>> {
    let (horizon, nodes) = (inst.horizon(), inst.node_count());
    let mut out = vec![0.0; horizon * nodes];
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    for (i, row) in rdr.deserialize::<WindRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| invalid(format!("{}:{line}: {e}", path.display())))?;
        if row.hour == 0 || row.hour > horizon || row.node == 0 || row.node > nodes {
            return Err(invalid(format!(
                "{}:{line}: hour {} / node {} outside {horizon} hours x {nodes} nodes",
                path.display(),
                row.hour,
                row.node
            )));
        }
        out[(row.hour - 1) * nodes + row.node - 1] = row.value;
    }
    Ok(out)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// A stored DA clearing: enough to rerun real time or audit settlement.
#[derive(Debug, Serialize, Deserialize)]
pub struct DaRecord {
    pub instance: String,
    pub day: i64,
    /// `p[t][n]`.
    pub p: Vec<Vec<f64>>,
    /// `w[t][n]`.
    pub w: Vec<Vec<f64>>,
    pub forecast: Vec<f64>,
    pub solution: LpSolution,
}

impl DaRecord {
    pub fn new(inst: &MarketInstance, day: i64, da: &DaDecision) -> Self {
        DaRecord {
            instance: inst.name.clone(),
            day,
            p: da.p.clone(),
            w: da.w.clone(),
            forecast: da.forecast.clone(),
            solution: da.solution.clone(),
        }
    }

    /// Rebuilds the decision against the program of `loads`. The schedule
    /// is taken from the stored solution vector.
    pub fn decision(self, market: &Market, loads: &[Vec<f64>]) -> Result<DaDecision> {
        let lp = market.da_lp(loads);
        let idx = market.index();
        let (n, m) = (lp.shape.n(), lp.shape.m());
        if self.solution.x.len() != n {
            return Err(invalid(format!(
                "stored x has {} entries, program has {n}",
                self.solution.x.len()
            )));
        }
        if self.solution.sigma.len() != m {
            return Err(invalid(format!(
                "stored duals have {} entries, program has {m} rows",
                self.solution.sigma.len()
            )));
        }
        if self.forecast.len() != idx.forecast_len() {
            return Err(invalid(format!(
                "stored forecast has {} entries, expected {}",
                self.forecast.len(),
                idx.forecast_len()
            )));
        }
        Ok(market.da_decision(lp, self.solution, self.forecast))
    }
}

/// Output directory with the run manifest already written.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path, manifest: &serde_json::Value) -> Result<Self> {
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        write_json(&path.join("manifest.json"), manifest)?;
        Ok(RunDir {
            path: path.to_path_buf(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}
