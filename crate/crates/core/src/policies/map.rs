use nalgebra::{DMatrix, DVector};

use crate::lp::{local_policy, ActiveSetSignature, CompactLp, LpError, LpSolution};

/// Reproduction tolerance for a local map at its generating parameter.
pub const REPRODUCTION_TOL: f64 = 1e-6;
/// Largest `|(G_J A - F_J) D|` entry treated as zero.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMethod {
    /// `G_B^-1 [F_B | psi_B]` over the rows of the optimal basis.
    Basis,
    /// `G_J^+ [F_J | psi_J]` over all active rows.
    PseudoInverse,
}

/// The affine solution map of one LP around one solve, in its own
/// parameter space.
#[derive(Debug, Clone)]
pub struct LocalMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub signature: ActiveSetSignature,
    pub method: MapMethod,
    /// Some parameter direction of interest moves an active row off its
    /// bound, so the map is one-sided: the solve sits on a region boundary.
    pub boundary: bool,
    /// The map keeps every active row tight for every parameter move, so it
    /// depends on the signature alone and may be cached under it.
    pub region_exact: bool,
}

impl LocalMap {
    pub fn eval(&self, omega: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(omega) + &self.b)
            .as_slice()
            .to_vec()
    }
}

/// Max entry of `(G_J A - F_J) D` over the active rows (`D = I` if `None`).
pub fn active_residual(
    lp: &CompactLp,
    rows: &[usize],
    a: &DMatrix<f64>,
    directions: Option<&DMatrix<f64>>,
) -> f64 {
    let g = lp.shape.g();
    let f = lp.shape.f();
    let k = a.ncols();
    let mut worst = 0.0f64;
    let mut line = vec![0.0; k];
    for &i in rows {
        line.iter_mut().for_each(|v| *v = 0.0);
        for &(j, v) in g.row(i) {
            for (c, l) in line.iter_mut().enumerate() {
                *l += v * a[(j, c)];
            }
        }
        for &(c, v) in f.row(i) {
            line[c] -= v;
        }
        let err = match directions {
            None => line.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Some(d) => (0..d.ncols())
                .map(|c| (0..k).map(|r| line[r] * d[(r, c)]).sum::<f64>().abs())
                .fold(0.0, f64::max),
        };
        worst = worst.max(err);
    }
    worst
}

fn basis_map(lp: &CompactLp, basis: &[usize]) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let shape = &lp.shape;
    let (n, k) = (shape.n(), shape.k());
    if basis.len() != n || basis.iter().any(|&i| i >= shape.m()) {
        return None;
    }
    let g_b = shape.g().dense_rows(basis);
    let mut rhs = DMatrix::<f64>::zeros(n, k + 1);
    for (r, &i) in basis.iter().enumerate() {
        for &(c, v) in shape.f().row(i) {
            rhs[(r, c)] = v;
        }
        rhs[(r, k)] = lp.psi[i];
    }
    let sol = g_b.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let a = sol.columns(0, k).into_owned();
    let b = DVector::from_iterator(n, sol.column(k).iter().copied());
    Some((a, b))
}

/// Builds the local map of a solved LP at parameter `omega`.
///
/// When the optimal basis is made of real rows and the active system is
/// consistent, `G_B^-1 F_B` is the unique solution of `G_J A = F_J` and so
/// equals `G_J^+ F_J`; the basis route is used because it solves an `n x n`
/// system instead of a least-squares problem over every active row. If the
/// active system is inconsistent along `directions`, the basis map is the
/// one-sided derivative of the reported vertex and the result is flagged.
pub fn local_map(
    lp: &CompactLp,
    sol: &LpSolution,
    omega: &[f64],
    directions: Option<&DMatrix<f64>>,
) -> Result<LocalMap, LpError> {
    let signature = sol.signature(lp);
    let (a, b, method) = match basis_map(lp, &sol.basis) {
        Some((a, b)) => (a, b, MapMethod::Basis),
        None => {
            let p = local_policy(lp, &signature)?;
            (p.a, p.b, MapMethod::PseudoInverse)
        }
    };
    let full = active_residual(lp, signature.rows(), &a, None);
    let region_exact = full <= CONSISTENCY_TOL;
    let boundary = !region_exact
        && match directions {
            Some(d) => active_residual(lp, signature.rows(), &a, Some(d)) > CONSISTENCY_TOL,
            None => true,
        };
    if boundary && method == MapMethod::PseudoInverse {
        return Err(LpError::DegenerateActiveSet { residual: full });
    }
    let map = LocalMap {
        a,
        b,
        signature,
        method,
        boundary,
        region_exact,
    };
    let residual = map
        .eval(omega)
        .iter()
        .zip(&sol.x)
        .map(|(p, v)| (p - v).abs() / (1.0 + v.abs()))
        .fold(0.0, f64::max);
    if residual > REPRODUCTION_TOL {
        return Err(LpError::DegenerateActiveSet { residual });
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, LpBuilder};
    use approx::assert_relative_eq;

    fn two_var() -> CompactLp {
        // min 2a + 3b, a + b = w0, a <= w1, a, b >= 0.
        let mut b = LpBuilder::new("p", vec!["a".into(), "b".into()], 2);
        b.set_cost(0, 2.0);
        b.set_cost(1, 3.0);
        b.eq("sum", &[(0, 1.0), (1, 1.0)], 0.0, &[(0, 1.0)]);
        b.le("cap", &[(0, 1.0)], 0.0, &[(1, 1.0)]);
        b.le("a>=0", &[(0, -1.0)], 0.0, &[]);
        b.le("b>=0", &[(1, -1.0)], 0.0, &[]);
        b.build()
    }

    #[test]
    fn basis_route_matches_pseudo_inverse() {
        let lp = two_var();
        let w = [5.0, 2.0];
        let s = solve(&lp, &w).unwrap();
        let m = local_map(&lp, &s, &w, None).unwrap();
        assert_eq!(m.method, MapMethod::Basis);
        assert!(m.region_exact && !m.boundary);
        let p = local_policy(&lp, &s.signature(&lp)).unwrap();
        assert_relative_eq!(m.a, p.a, epsilon = 1e-12);
        assert_relative_eq!(m.b, p.b, epsilon = 1e-12);
        assert_relative_eq!(m.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]));
    }

    #[test]
    fn kink_is_flagged() {
        // w0 == w1: the cap and b >= 0 are both active.
        let lp = two_var();
        let w = [2.0, 2.0];
        let s = solve(&lp, &w).unwrap();
        let m = local_map(&lp, &s, &w, None).unwrap();
        assert!(m.boundary);
        assert!(!m.region_exact);
        // Along a direction that keeps both rows tight the map is exact.
        let d = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let m = local_map(&lp, &s, &w, Some(&d)).unwrap();
        assert!(!m.boundary);
    }
}
