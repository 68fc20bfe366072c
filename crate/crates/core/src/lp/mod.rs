//! Parametric linear programs `min c'x  s.t.  G x <= psi + F w`.
//!
//! Equalities are stored as two opposite `<=` rows. The shape (`c`, `G`, `F`)
//! is shared behind an [`Arc`] so that repeated solves with different `psi`
//! and parameter vectors reuse cached factorizations of the start basis.

mod linalg;
mod policy;
mod signature;
mod simplex;

pub use linalg::{pinv_solve, PinvSolution};
pub use policy::{local_policy, AffinePolicy};
pub use signature::ActiveSetSignature;
pub use simplex::{solve, solve_from, SolverOptions};

use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A row is active when its slack is within this fraction of `1 + |rhs|`.
pub const ACTIVE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    /// `ray` is a nonnegative row combination with `ray' G = 0` and
    /// `ray' (psi + F w) < 0`.
    #[error("linear program is infeasible")]
    Infeasible { ray: Option<Vec<f64>> },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("degenerate active set: policy misses the solution by {residual:.3e}")]
    DegenerateActiveSet { residual: f64 },
}

/// Sparse row storage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        SparseRows {
            ncols,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, entries: &[(usize, f64)]) {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for &(j, v) in entries {
            assert!(j < self.ncols, "column {j} out of range {}", self.ncols);
            if v == 0.0 {
                continue;
            }
            match row.iter_mut().find(|(c, _)| *c == j) {
                Some(e) => e.1 += v,
                None => row.push((j, v)),
            }
        }
        row.retain(|&(_, v)| v != 0.0);
        row.sort_by_key(|&(j, _)| j);
        self.rows.push(row);
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    #[inline]
    pub fn dot(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.dot(i, x)).collect()
    }

    /// `y' A` for a row-space vector `y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, row) in self.rows.iter().enumerate() {
            if y[i] != 0.0 {
                for &(j, v) in row {
                    out[j] += y[i] * v;
                }
            }
        }
        out
    }

    /// Dense copy of the selected rows.
    pub fn dense_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows.len(), self.ncols);
        for (r, &i) in rows.iter().enumerate() {
            for &(j, v) in &self.rows[i] {
                m[(r, j)] = v;
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.nrows()).collect();
        self.dense_rows(&all)
    }

    fn hash_into(&self, h: &mut DefaultHasher) {
        self.ncols.hash(h);
        for row in &self.rows {
            row.len().hash(h);
            for &(j, v) in row {
                j.hash(h);
                v.to_bits().hash(h);
            }
        }
    }
}

/// The parameter-independent part of a compact LP.
#[derive(Debug)]
pub struct LpShape {
    family: String,
    c: Vec<f64>,
    g: SparseRows,
    f: SparseRows,
    eq_pairs: Vec<(usize, usize)>,
    row_names: Vec<String>,
    var_names: Vec<String>,
    tag: u64,
    row_norms: Vec<f64>,
    start_basis: OnceLock<Option<Vec<usize>>>,
}

impl LpShape {
    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn g(&self) -> &SparseRows {
        &self.g
    }

    pub fn f(&self) -> &SparseRows {
        &self.f
    }

    pub fn eq_pairs(&self) -> &[(usize, usize)] {
        &self.eq_pairs
    }

    pub fn row_name(&self, i: usize) -> &str {
        &self.row_names[i]
    }

    pub fn var_name(&self, j: usize) -> &str {
        &self.var_names[j]
    }

    /// Row index by name, mostly for tests and dumps.
    pub fn find_row(&self, name: &str) -> Option<usize> {
        self.row_names.iter().position(|r| r == name)
    }

    pub fn find_var(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|r| r == name)
    }

    /// Identity tag: hash of the family name and all coefficients.
    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.g.nrows()
    }

    pub fn k(&self) -> usize {
        self.f.ncols()
    }

    pub(crate) fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub(crate) fn start_basis(&self) -> &OnceLock<Option<Vec<usize>>> {
        &self.start_basis
    }
}

#[derive(Debug, Clone)]
pub struct CompactLp {
    pub shape: Arc<LpShape>,
    pub psi: Vec<f64>,
}

impl CompactLp {
    pub fn new(shape: Arc<LpShape>, psi: Vec<f64>) -> Result<Self, LpError> {
        if psi.len() != shape.m() {
            return Err(LpError::Dimension {
                what: "psi",
                expected: shape.m(),
                got: psi.len(),
            });
        }
        Ok(CompactLp { shape, psi })
    }

    /// `psi + F w`.
    pub fn rhs(&self, omega: &[f64]) -> Result<Vec<f64>, LpError> {
        let s = &self.shape;
        if omega.len() != s.k() {
            return Err(LpError::Dimension {
                what: "omega",
                expected: s.k(),
                got: omega.len(),
            });
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("omega"));
        }
        Ok(self
            .psi
            .iter()
            .enumerate()
            .map(|(i, p)| p + s.f.dot(i, omega))
            .collect())
    }

    /// Plain-text listing in CPLEX LP syntax with the parameter substituted.
    pub fn to_lp_text(&self, omega: &[f64]) -> Result<String, LpError> {
        let h = self.rhs(omega)?;
        let s = &self.shape;
        let term = |out: &mut String, first: bool, v: f64, name: &str| {
            let _ = match (v < 0.0, first) {
                (true, _) => write!(out, " - {} {name}", v.abs()),
                (false, true) => write!(out, " {v} {name}"),
                (false, false) => write!(out, " + {v} {name}"),
            };
        };
        let mut out = format!("\\ family {}\nMinimize\n obj:", s.family);
        let mut first = true;
        for (j, &cj) in s.c.iter().enumerate() {
            if cj != 0.0 {
                term(&mut out, first, cj, &s.var_names[j]);
                first = false;
            }
        }
        if first {
            out.push_str(" 0 ");
            out.push_str(&s.var_names[0]);
        }
        out.push_str("\nSubject To\n");
        for i in 0..s.m() {
            let _ = write!(out, " {}:", s.row_names[i]);
            let row = s.g.row(i);
            if row.is_empty() {
                out.push_str(" 0 ");
                out.push_str(&s.var_names[0]);
            }
            for (t, &(j, v)) in row.iter().enumerate() {
                term(&mut out, t == 0, v, &s.var_names[j]);
            }
            let _ = writeln!(out, " <= {}", h[i]);
        }
        out.push_str("Bounds\n");
        for name in &s.var_names {
            let _ = writeln!(out, " {name} free");
        }
        out.push_str("End\n");
        Ok(out)
    }
}

/// Row-by-row construction of an [`LpShape`] and its `psi`.
#[derive(Debug)]
pub struct LpBuilder {
    family: String,
    c: Vec<f64>,
    g: SparseRows,
    f: SparseRows,
    psi: Vec<f64>,
    eq_pairs: Vec<(usize, usize)>,
    row_names: Vec<String>,
    var_names: Vec<String>,
}

impl LpBuilder {
    pub fn new(family: impl Into<String>, var_names: Vec<String>, params: usize) -> Self {
        let n = var_names.len();
        LpBuilder {
            family: family.into(),
            c: vec![0.0; n],
            g: SparseRows::new(n),
            f: SparseRows::new(params),
            psi: Vec::new(),
            eq_pairs: Vec::new(),
            row_names: Vec::new(),
            var_names,
        }
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.c[j] = cost;
    }

    /// Adds `g x <= psi + f w` and returns its row index.
    pub fn le(
        &mut self,
        name: impl Into<String>,
        g: &[(usize, f64)],
        psi: f64,
        f: &[(usize, f64)],
    ) -> usize {
        self.g.push(g);
        self.f.push(f);
        self.psi.push(psi);
        self.row_names.push(name.into());
        self.psi.len() - 1
    }

    /// Adds `g x = psi + f w` as the pair `(g x <= .., -g x <= -..)`.
    pub fn eq(
        &mut self,
        name: &str,
        g: &[(usize, f64)],
        psi: f64,
        f: &[(usize, f64)],
    ) -> (usize, usize) {
        let neg = |v: &[(usize, f64)]| v.iter().map(|&(j, a)| (j, -a)).collect::<Vec<_>>();
        let a = self.le(format!("{name}_le"), g, psi, f);
        let b = self.le(format!("{name}_ge"), &neg(g), -psi, &neg(f));
        self.eq_pairs.push((a, b));
        (a, b)
    }

    pub fn rows(&self) -> usize {
        self.psi.len()
    }

    pub fn finish(self) -> (LpShape, Vec<f64>) {
        let mut h = DefaultHasher::new();
        self.family.hash(&mut h);
        for v in &self.c {
            v.to_bits().hash(&mut h);
        }
        self.g.hash_into(&mut h);
        self.f.hash_into(&mut h);
        let tag = h.finish();
        let row_norms = (0..self.g.nrows())
            .map(|i| {
                self.g
                    .row(i)
                    .iter()
                    .map(|(_, v)| v * v)
                    .sum::<f64>()
                    .sqrt()
                    .max(1e-12)
            })
            .collect();
        let shape = LpShape {
            family: self.family,
            c: self.c,
            g: self.g,
            f: self.f,
            eq_pairs: self.eq_pairs,
            row_names: self.row_names,
            var_names: self.var_names,
            tag,
            row_norms,
            start_basis: OnceLock::new(),
        };
        (shape, self.psi)
    }

    pub fn build(self) -> CompactLp {
        let (shape, psi) = self.finish();
        CompactLp {
            shape: Arc::new(shape),
            psi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One nonnegative multiplier per row.
    pub sigma: Vec<f64>,
    pub objective: f64,
    /// `-sigma' (psi + F w)`.
    pub dual_objective: f64,
    /// `psi + F w` at the solve.
    pub rhs: Vec<f64>,
    /// Sorted indices of rows with (near) zero slack.
    pub active_set: Vec<usize>,
    /// Rows forming the final simplex basis.
    pub basis: Vec<usize>,
    pub iterations: usize,
    /// A basic multiplier sits at zero, so `x` may not be unique.
    pub primal_degenerate: bool,
    /// More rows are active than the basis holds, so `sigma` may not be unique.
    pub dual_degenerate: bool,
}

impl LpSolution {
    pub fn slack(&self, shape: &LpShape, i: usize) -> f64 {
        self.rhs[i] - shape.g.dot(i, &self.x)
    }

    pub fn signature(&self, lp: &CompactLp) -> ActiveSetSignature {
        ActiveSetSignature::new(lp.shape.tag(), self.active_set.clone())
    }

    /// Whether the optimum may not be unique in either space.
    pub fn possibly_nonunique(&self) -> bool {
        self.primal_degenerate || self.dual_degenerate
    }
}

/// `-sigma' (psi + F w)`.
pub fn dual_objective(lp: &CompactLp, omega: &[f64], sigma: &[f64]) -> Result<f64, LpError> {
    if sigma.len() != lp.shape.m() {
        return Err(LpError::Dimension {
            what: "sigma",
            expected: lp.shape.m(),
            got: sigma.len(),
        });
    }
    let h = lp.rhs(omega)?;
    Ok(-sigma.iter().zip(&h).map(|(s, v)| s * v).sum::<f64>())
}
