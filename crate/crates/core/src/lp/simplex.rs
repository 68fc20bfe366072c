//! Revised primal simplex on the dual of `min c'x s.t. G x <= h`:
//!
//! ```text
//! min h' s   s.t.   G' s = -c,  s >= 0.
//! ```
//!
//! A basis is a set of `n` rows of `G`. Its simplex multipliers solve
//! `G_B x = h_B`, which is the primal point, and the reduced cost of row `j`
//! is the primal slack `h_j - G_j x`. The dual feasible region does not depend
//! on `h`, so a phase-1 basis found once per shape warm-starts every later
//! solve, and any optimal basis of an earlier solve is a valid start too.
//! An unbounded phase-2 ray is a Farkas certificate of primal infeasibility.

use nalgebra::DMatrix;

use super::{CompactLp, LpError, LpSolution, SparseRows, ACTIVE_TOL};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// `None` picks a limit from the problem size.
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_limit: usize,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: None,
            refactor_every: 64,
            stall_limit: 50,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
        }
    }
}

pub fn solve(lp: &CompactLp, omega: &[f64]) -> Result<LpSolution, LpError> {
    solve_from(lp, omega, None, &SolverOptions::default())
}

/// Solves starting from `hint`, a basis of an earlier solve of the same shape
/// (for instance [`LpSolution::basis`]). Unusable hints are ignored.
pub fn solve_from(
    lp: &CompactLp,
    omega: &[f64],
    hint: Option<&[usize]>,
    opts: &SolverOptions,
) -> Result<LpSolution, LpError> {
    let shape = &lp.shape;
    if lp.psi.iter().any(|v| v.is_nan()) || shape.c().iter().any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite("lp data"));
    }
    let h = lp.rhs(omega)?;
    let g = shape.g();
    let n = shape.n();
    let m = shape.m();
    let limit = opts
        .max_iterations
        .unwrap_or_else(|| (20 * (m + n)).max(10_000));
    let all_finite = h.iter().all(|v| v.is_finite());
    let allowed: Vec<bool> = h.iter().map(|v| v.is_finite()).collect();
    let b: Vec<f64> = shape.c().iter().map(|v| -v).collect();

    let mut t = Tableau::new(g, shape.row_norms(), b.clone(), &allowed, *opts);
    let mut started = false;
    if let Some(hint) = hint {
        started = t.try_start(hint);
    }
    if !started && all_finite {
        if let Some(Some(basis)) = shape.start_basis().get() {
            started = t.try_start(basis);
        }
    }
    if !started {
        match t.phase1(limit)? {
            true => {
                if all_finite {
                    let _ = shape.start_basis().set(Some(t.basis.clone()));
                }
            }
            false => {
                // Dual infeasible: the primal is unbounded if it is feasible.
                let zeros = vec![0.0; n];
                let mut f = Tableau::new(g, shape.row_norms(), zeros, &allowed, *opts);
                f.phase1(limit)?;
                return match f.phase2(&h, limit)? {
                    Phase2::Optimal => Err(LpError::Unbounded),
                    Phase2::Ray(ray) => Err(LpError::Infeasible { ray: Some(ray) }),
                };
            }
        }
    }
    if let Phase2::Ray(ray) = t.phase2(&h, limit)? {
        return Err(LpError::Infeasible { ray: Some(ray) });
    }
    Ok(t.finish(lp, h))
}

enum Phase2 {
    Optimal,
    Ray(Vec<f64>),
}

struct Tableau<'a> {
    g: &'a SparseRows,
    norms: &'a [f64],
    allowed: &'a [bool],
    opts: SolverOptions,
    n: usize,
    m: usize,
    b: Vec<f64>,
    art_sign: Vec<f64>,
    /// Column ids; `id >= m` is artificial `id - m`.
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: DMatrix<f64>,
    xb: Vec<f64>,
    pi: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn new(
        g: &'a SparseRows,
        norms: &'a [f64],
        b: Vec<f64>,
        allowed: &'a [bool],
        opts: SolverOptions,
    ) -> Self {
        let n = g.ncols();
        let m = g.nrows();
        let art_sign: Vec<f64> = b
            .iter()
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        Tableau {
            g,
            norms,
            allowed,
            opts,
            n,
            m,
            b,
            art_sign,
            basis: Vec::new(),
            is_basic: vec![false; m + n],
            binv: DMatrix::zeros(n, n),
            xb: vec![0.0; n],
            pi: vec![0.0; n],
            since_refactor: 0,
            iterations: 0,
        }
    }

    fn is_artificial(&self, id: usize) -> bool {
        id >= self.m
    }

    fn set_basis(&mut self, basis: &[usize]) {
        self.is_basic.iter_mut().for_each(|b| *b = false);
        for &id in basis {
            self.is_basic[id] = true;
        }
        self.basis = basis.to_vec();
    }

    /// Installs a known basis if it is nonsingular and dual feasible.
    fn try_start(&mut self, basis: &[usize]) -> bool {
        if basis.len() != self.n
            || basis
                .iter()
                .any(|&id| id >= self.m + self.n || (id < self.m && !self.allowed[id]))
        {
            return false;
        }
        let mut seen = vec![false; self.m + self.n];
        for &id in basis {
            if std::mem::replace(&mut seen[id], true) {
                return false;
            }
        }
        self.set_basis(basis);
        if !self.refactor() {
            return false;
        }
        self.recompute_xb();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let ok = self.basis.iter().zip(&self.xb).all(|(&id, &v)| {
            if self.is_artificial(id) {
                v.abs() <= 1e-9 * scale
            } else {
                v >= -1e-9 * scale
            }
        });
        if ok {
            for v in self.xb.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        ok
    }

    /// Dense column `a_id` of the dual constraint matrix `G'`.
    fn ftran(&self, id: usize) -> Vec<f64> {
        let n = self.n;
        let data = self.binv.as_slice();
        let mut out = vec![0.0; n];
        let mut axpy = |k: usize, v: f64| {
            let col = &data[k * n..(k + 1) * n];
            for (o, c) in out.iter_mut().zip(col) {
                *o += v * c;
            }
        };
        if self.is_artificial(id) {
            let i = id - self.m;
            axpy(i, self.art_sign[i]);
        } else {
            for &(k, v) in self.g.row(id) {
                axpy(k, v);
            }
        }
        out
    }

    fn refactor(&mut self) -> bool {
        let n = self.n;
        if n == 0 {
            return true;
        }
        let mut bm = DMatrix::<f64>::zeros(n, n);
        for (p, &id) in self.basis.iter().enumerate() {
            if self.is_artificial(id) {
                let i = id - self.m;
                bm[(i, p)] = self.art_sign[i];
            } else {
                for &(k, v) in self.g.row(id) {
                    bm[(k, p)] = v;
                }
            }
        }
        match bm.lu().try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) => {
                self.binv = inv;
                self.since_refactor = 0;
                true
            }
            _ => false,
        }
    }

    fn recompute_xb(&mut self) {
        let n = self.n;
        let data = self.binv.as_slice();
        let mut xb = vec![0.0; n];
        for k in 0..n {
            let bk = self.b[k];
            if bk != 0.0 {
                for (x, c) in xb.iter_mut().zip(&data[k * n..(k + 1) * n]) {
                    *x += bk * c;
                }
            }
        }
        self.xb = xb;
    }

    fn recompute_pi(&mut self, cost: &impl Fn(usize) -> f64) {
        let n = self.n;
        let data = self.binv.as_slice();
        let cb: Vec<f64> = self.basis.iter().map(|&id| cost(id)).collect();
        self.pi = (0..n)
            .map(|k| {
                data[k * n..(k + 1) * n]
                    .iter()
                    .zip(&cb)
                    .map(|(a, c)| a * c)
                    .sum()
            })
            .collect();
    }

    fn pivot(&mut self, q: usize, r: usize, delta: &[f64], theta: f64, dq: f64) {
        let n = self.n;
        for (x, d) in self.xb.iter_mut().zip(delta) {
            *x -= theta * d;
        }
        self.xb[r] = theta;
        let piv = delta[r];
        let data = self.binv.as_mut_slice();
        for k in 0..n {
            let col = &mut data[k * n..(k + 1) * n];
            let v = col[r] / piv;
            if v != 0.0 {
                for (c, d) in col.iter_mut().zip(delta) {
                    *c -= d * v;
                }
            }
            col[r] = v;
        }
        for k in 0..n {
            self.pi[k] += dq * data[k * n + r];
        }
        let out = self.basis[r];
        self.is_basic[out] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    /// Runs simplex iterations over real columns with costs `cost`.
    /// Returns `Some((q, delta))` on an unbounded direction.
    fn iterate(
        &mut self,
        cost: &impl Fn(usize) -> f64,
        phase2: bool,
        limit: usize,
    ) -> Result<Option<(usize, Vec<f64>)>, LpError> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            if self.since_refactor >= self.opts.refactor_every {
                if !self.refactor() {
                    return Err(LpError::NonFinite("basis factorization"));
                }
                self.recompute_xb();
                self.recompute_pi(cost);
            }

            // Pricing: most negative normalized reduced cost, or the first
            // improving column under Bland's rule.
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.m {
                if self.is_basic[j] || !self.allowed[j] {
                    continue;
                }
                let cj = cost(j);
                let d = cj - self.g.dot(j, &self.pi);
                let tol = if phase2 {
                    self.opts.optimality_tol * (1.0 + cj.abs())
                } else {
                    self.opts.optimality_tol
                };
                if d < -tol {
                    if bland {
                        entering = Some((j, d, d));
                        break;
                    }
                    let score = d / self.norms[j];
                    if entering.map_or(true, |(_, s, _)| score < s) {
                        entering = Some((j, score, d));
                    }
                }
            }
            let Some((q, _, dq)) = entering else {
                if self.since_refactor > 0 {
                    // Confirm optimality on fresh factors.
                    if !self.refactor() {
                        return Err(LpError::NonFinite("basis factorization"));
                    }
                    self.recompute_xb();
                    self.recompute_pi(cost);
                    continue;
                }
                return Ok(None);
            };

            let delta = self.ftran(q);
            let mut leave: Option<(usize, f64, f64)> = None;
            for (i, &di) in delta.iter().enumerate() {
                let id = self.basis[i];
                let ratio = if self.is_artificial(id) && phase2 {
                    if di.abs() <= self.opts.pivot_tol {
                        continue;
                    }
                    0.0
                } else {
                    if di <= self.opts.pivot_tol {
                        continue;
                    }
                    self.xb[i].max(0.0) / di
                };
                let better = match leave {
                    None => true,
                    Some((r, best, mag)) => {
                        if ratio < best - 1e-12 * (1.0 + best) {
                            true
                        } else if ratio <= best + 1e-12 * (1.0 + best) {
                            if bland {
                                id < self.basis[r]
                            } else {
                                di.abs() > mag
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio, di.abs()));
                }
            }
            let Some((r, theta, _)) = leave else {
                return Ok(Some((q, delta)));
            };
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > self.opts.stall_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            self.pivot(q, r, &delta, theta, dq);
        }
    }

    /// Returns whether a dual feasible basis exists.
    fn phase1(&mut self, limit: usize) -> Result<bool, LpError> {
        let n = self.n;
        let m = self.m;
        let basis: Vec<usize> = (0..n).map(|i| m + i).collect();
        self.set_basis(&basis);
        self.binv = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.art_sign));
        self.xb = self.b.iter().map(|v| v.abs()).collect();
        self.pi = self.art_sign.clone();
        self.since_refactor = 0;
        let cost = |id: usize| if id >= m { 1.0 } else { 0.0 };
        if self.iterate(&cost, false, limit)?.is_some() {
            // The phase-1 objective is bounded below by zero.
            return Err(LpError::NonFinite("phase one"));
        }
        let residual: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(&id, _)| id >= m)
            .map(|(_, v)| v.abs())
            .sum();
        let scale = 1.0 + self.b.iter().map(|v| v.abs()).sum::<f64>();
        if residual > 1e-9 * scale {
            return Ok(false);
        }

        // Drive zero-level artificials out of the basis where possible.
        for r in 0..n {
            if self.basis[r] < m {
                continue;
            }
            let row: Vec<f64> = (0..n).map(|k| self.binv[(r, k)]).collect();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                if self.is_basic[j] || !self.allowed[j] {
                    continue;
                }
                let alpha: f64 = self.g.row(j).iter().map(|&(k, v)| v * row[k]).sum();
                if alpha.abs() > 1e-7 && best.map_or(true, |(_, a)| alpha.abs() > a) {
                    best = Some((j, alpha.abs()));
                }
            }
            if let Some((j, _)) = best {
                let delta = self.ftran(j);
                self.pivot(j, r, &delta, 0.0, 0.0);
                self.xb[r] = 0.0;
            }
        }
        if !self.refactor() {
            return Err(LpError::NonFinite("basis factorization"));
        }
        self.recompute_xb();
        Ok(true)
    }

    fn phase2(&mut self, h: &[f64], limit: usize) -> Result<Phase2, LpError> {
        let m = self.m;
        let cost = |id: usize| if id >= m { 0.0 } else { h[id] };
        self.recompute_pi(&cost);
        match self.iterate(&cost, true, limit)? {
            None => Ok(Phase2::Optimal),
            Some((q, delta)) => {
                let mut ray = vec![0.0; m];
                ray[q] = 1.0;
                for (i, &id) in self.basis.iter().enumerate() {
                    if id < m {
                        ray[id] = (-delta[i]).max(0.0);
                    }
                }
                Ok(Phase2::Ray(ray))
            }
        }
    }

    fn finish(mut self, lp: &CompactLp, h: Vec<f64>) -> LpSolution {
        let m = self.m;
        let shape = &lp.shape;
        if self.since_refactor > 0 && self.refactor() {
            self.recompute_xb();
        }
        let cost = |id: usize| if id >= m { 0.0 } else { h[id] };
        self.recompute_pi(&cost);
        let x = self.pi.clone();

        let mut sigma = vec![0.0; m];
        let mut primal_degenerate = false;
        let mut real_basics = 0;
        for (&id, &v) in self.basis.iter().zip(&self.xb) {
            if id >= m {
                primal_degenerate = true;
                continue;
            }
            real_basics += 1;
            if v <= 1e-9 {
                primal_degenerate = true;
            }
            sigma[id] = v.max(0.0);
        }

        let g = shape.g();
        let mut active = Vec::new();
        for i in 0..m {
            if h[i].is_finite() {
                let slack = h[i] - g.dot(i, &x);
                if slack.abs() <= ACTIVE_TOL * (1.0 + h[i].abs()) {
                    active.push(i);
                }
            }
        }
        let mut partner = vec![usize::MAX; m];
        for &(a, b) in shape.eq_pairs() {
            partner[a] = b;
            partner[b] = a;
        }
        let distinct_active = active
            .iter()
            .filter(|&&i| {
                let p = partner[i];
                p == usize::MAX || active.binary_search(&p).is_err() || i < p
            })
            .count();
        let dual_degenerate = distinct_active > real_basics;

        let objective: f64 = shape.c().iter().zip(&x).map(|(c, v)| c * v).sum();
        let dual_objective: f64 = -sigma
            .iter()
            .zip(&h)
            .filter(|(s, _)| **s != 0.0)
            .map(|(s, v)| s * v)
            .sum::<f64>();
        let mut basis: Vec<usize> = self.basis.iter().copied().filter(|&id| id < m).collect();
        if basis.len() < self.n {
            // Keep artificial ids so the basis still warm-starts this shape.
            basis = self.basis.clone();
        }
        LpSolution {
            x,
            sigma,
            objective,
            dual_objective,
            rhs: h,
            active_set: active,
            basis,
            iterations: self.iterations,
            primal_degenerate,
            dual_degenerate,
        }
    }
}
