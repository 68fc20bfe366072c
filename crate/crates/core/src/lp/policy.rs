use nalgebra::{DMatrix, DVector};

use super::{pinv_solve, ActiveSetSignature, CompactLp, LpError};

/// Drop tolerance of the rank-revealing factorization, relative to the
/// largest pivot.
pub const RANK_TOL: f64 = 1e-10;

/// `x(w) = A w + b`, valid on the critical region of one active set.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Numerical rank of the active constraint block.
    pub rank: usize,
    pub signature: ActiveSetSignature,
}

impl AffinePolicy {
    pub fn eval(&self, omega: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(omega);
        (&self.a * w + &self.b).as_slice().to_vec()
    }

    /// Largest deviation from `x`, scaled by `1 + |x_i|`.
    pub fn reproduction_error(&self, omega: &[f64], x: &[f64]) -> f64 {
        self.eval(omega)
            .iter()
            .zip(x)
            .map(|(p, v)| (p - v).abs() / (1.0 + v.abs()))
            .fold(0.0, f64::max)
    }

    /// Fails with [`LpError::DegenerateActiveSet`] when the policy misses
    /// `x` by more than `tol`.
    pub fn verify(&self, omega: &[f64], x: &[f64], tol: f64) -> Result<(), LpError> {
        let residual = self.reproduction_error(omega, x);
        if residual <= tol {
            Ok(())
        } else {
            Err(LpError::DegenerateActiveSet { residual })
        }
    }

    /// Largest entry of `(G_J A - F_J) D`: zero when every parameter move
    /// along the columns of `D` keeps all active rows tight. `None` uses
    /// `D = I`.
    pub fn consistency_residual(&self, lp: &CompactLp, directions: Option<&DMatrix<f64>>) -> f64 {
        let rows = self.signature.rows();
        let g = lp.shape.g();
        let f = lp.shape.f();
        let k = self.a.ncols();
        let mut worst = 0.0f64;
        let mut line = vec![0.0; k];
        for &i in rows {
            line.iter_mut().for_each(|v| *v = 0.0);
            for &(j, v) in g.row(i) {
                for (c, l) in line.iter_mut().enumerate() {
                    *l += v * self.a[(j, c)];
                }
            }
            for &(c, v) in f.row(i) {
                line[c] -= v;
            }
            let err = match directions {
                None => line.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                Some(d) => (0..d.ncols())
                    .map(|c| (0..k).map(|r| line[r] * d[(r, c)]).sum::<f64>().abs())
                    .fold(0.0, f64::max),
            };
            worst = worst.max(err);
        }
        worst
    }
}

/// `A = G_J^+ F_J`, `b = G_J^+ psi_J` for the rows `J` of `active`.
pub fn local_policy(lp: &CompactLp, active: &ActiveSetSignature) -> Result<AffinePolicy, LpError> {
    let shape = &lp.shape;
    let rows = active.rows();
    if let Some(&bad) = rows.iter().find(|&&i| i >= shape.m()) {
        return Err(LpError::Dimension {
            what: "active row",
            expected: shape.m(),
            got: bad,
        });
    }
    let n = shape.n();
    let k = shape.k();
    let g_j = shape.g().dense_rows(rows);
    let mut rhs = DMatrix::<f64>::zeros(rows.len(), k + 1);
    for (r, &i) in rows.iter().enumerate() {
        for &(c, v) in shape.f().row(i) {
            rhs[(r, c)] = v;
        }
        rhs[(r, k)] = lp.psi[i];
    }
    let sol = pinv_solve(&g_j, &rhs, RANK_TOL);
    let a = sol.x.columns(0, k).into_owned();
    let b = DVector::from_iterator(n, sol.x.column(k).iter().copied());
    Ok(AffinePolicy {
        a,
        b,
        rank: sol.rank,
        signature: active.clone(),
    })
}
