//! Minimum-norm least-squares solves through a complete orthogonal
//! decomposition: Householder QR with column-norm pivoting, then an
//! unpivoted QR of the leading rows when the matrix is rank deficient.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct PinvSolution {
    /// `A^+ B`.
    pub x: DMatrix<f64>,
    pub rank: usize,
}

/// Computes `A^+ B`. Pivots whose magnitude falls below `rel_tol` times the
/// largest pivot are dropped.
pub fn pinv_solve(a: &DMatrix<f64>, rhs: &DMatrix<f64>, rel_tol: f64) -> PinvSolution {
    let (m, n) = a.shape();
    assert_eq!(rhs.nrows(), m, "right-hand side rows");
    let p = rhs.ncols();
    if m == 0 || n == 0 {
        return PinvSolution {
            x: DMatrix::zeros(n, p),
            rank: 0,
        };
    }
    let mut qr = a.clone();
    let (tau, perm, rank) = householder_qrcp(&mut qr, rel_tol);

    // c = Q' B, leading `rank` rows.
    let mut c = rhs.clone();
    apply_reflectors_t(&qr, &tau[..rank], &mut c);

    let mut y = DMatrix::<f64>::zeros(n, p);
    if rank == n {
        back_substitute(&qr, n, &c, &mut y);
    } else if rank > 0 {
        // R_top (rank x n) = [R11 R12]; factor R_top' = Z T.
        let mut rt = DMatrix::<f64>::zeros(n, rank);
        for i in 0..rank {
            for j in i..n {
                rt[(j, i)] = qr[(i, j)];
            }
        }
        let tau2 = householder_qr(&mut rt);
        // Solve T' u = c[..rank] (T' lower triangular).
        let mut u = DMatrix::<f64>::zeros(n, p);
        for col in 0..p {
            for i in 0..rank {
                let mut s = c[(i, col)];
                for k in 0..i {
                    s -= rt[(k, i)] * u[(k, col)];
                }
                u[(i, col)] = s / rt[(i, i)];
            }
        }
        // y = Z [u; 0].
        apply_reflectors(&rt, &tau2, &mut u);
        y = u;
    }

    let mut x = DMatrix::<f64>::zeros(n, p);
    for (k, &orig) in perm.iter().enumerate() {
        for col in 0..p {
            x[(orig, col)] = y[(k, col)];
        }
    }
    PinvSolution { x, rank }
}

/// In-place QR with column pivoting. Returns reflector scalars, the column
/// permutation (`perm[k]` is the original column at position `k`) and the
/// numerical rank.
fn householder_qrcp(a: &mut DMatrix<f64>, rel_tol: f64) -> (Vec<f64>, Vec<usize>, usize) {
    let (m, n) = a.shape();
    let steps = m.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut exact = norms.clone();
    let mut tau = Vec::with_capacity(steps);
    let first = norms.iter().cloned().fold(0.0, f64::max);
    if first == 0.0 {
        return (tau, perm, 0);
    }
    let threshold = rel_tol * first;
    let mut rank = 0;
    for k in 0..steps {
        let (pj, &pn) = norms[k..]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i + k, v))
            .unwrap();
        if pn <= threshold {
            break;
        }
        if pj != k {
            a.swap_columns(k, pj);
            perm.swap(k, pj);
            norms.swap(k, pj);
            exact.swap(k, pj);
        }
        let t = make_reflector(a, k, k);
        tau.push(t);
        if t != 0.0 {
            apply_reflector_right_cols(a, k, t, k + 1);
        }
        rank += 1;
        // Downdate the remaining column norms.
        for j in k + 1..n {
            if norms[j] == 0.0 {
                continue;
            }
            let r = a[(k, j)].abs() / norms[j];
            let t1 = (1.0 - r * r).max(0.0);
            let t2 = t1 * (norms[j] / exact[j]).powi(2);
            if t2 <= f64::EPSILON.sqrt() {
                let v = a.view((k + 1, j), (m - k - 1, 1)).norm();
                norms[j] = v;
                exact[j] = v;
            } else {
                norms[j] *= t1.sqrt();
            }
        }
    }
    (tau, perm, rank)
}

/// Unpivoted QR; returns reflector scalars for every column.
fn householder_qr(a: &mut DMatrix<f64>) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut tau = Vec::with_capacity(n);
    for k in 0..n.min(m) {
        let t = make_reflector(a, k, k);
        tau.push(t);
        if t != 0.0 {
            apply_reflector_right_cols(a, k, t, k + 1);
        }
    }
    tau
}

/// Builds the reflector zeroing `a[k+1.., col]`, stores `v` (with implicit
/// leading 1) below the diagonal and `beta` on it, and returns `tau`.
fn make_reflector(a: &mut DMatrix<f64>, k: usize, col: usize) -> f64 {
    let m = a.nrows();
    let alpha = a[(k, col)];
    let tail: f64 = (k + 1..m).map(|i| a[(i, col)].powi(2)).sum();
    if tail == 0.0 {
        return 0.0;
    }
    let norm = (alpha * alpha + tail).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let scale = 1.0 / (alpha - beta);
    for i in k + 1..m {
        a[(i, col)] *= scale;
    }
    a[(k, col)] = beta;
    (beta - alpha) / beta
}

/// Applies `I - tau v v'` (reflector stored in column `k`) to columns
/// `from..` of `a` itself.
fn apply_reflector_right_cols(a: &mut DMatrix<f64>, k: usize, tau: f64, from: usize) {
    let (m, n) = a.shape();
    let data = a.as_mut_slice();
    let (head, tail) = data.split_at_mut(from * m);
    let v = &head[k * m..(k + 1) * m];
    for j in 0..n - from {
        let col = &mut tail[j * m..(j + 1) * m];
        let mut s = col[k];
        for i in k + 1..m {
            s += v[i] * col[i];
        }
        s *= tau;
        if s != 0.0 {
            col[k] -= s;
            for i in k + 1..m {
                col[i] -= s * v[i];
            }
        }
    }
}

/// `B <- Q' B` for the first `tau.len()` reflectors stored in `qr`.
fn apply_reflectors_t(qr: &DMatrix<f64>, tau: &[f64], b: &mut DMatrix<f64>) {
    for (k, &t) in tau.iter().enumerate() {
        apply_one(qr, k, t, b);
    }
}

/// `B <- Q B` (reflectors in reverse order).
fn apply_reflectors(qr: &DMatrix<f64>, tau: &[f64], b: &mut DMatrix<f64>) {
    for (k, &t) in tau.iter().enumerate().rev() {
        apply_one(qr, k, t, b);
    }
}

fn apply_one(qr: &DMatrix<f64>, k: usize, tau: f64, b: &mut DMatrix<f64>) {
    if tau == 0.0 {
        return;
    }
    let m = qr.nrows();
    let v = &qr.as_slice()[k * m..(k + 1) * m];
    let bm = b.nrows();
    debug_assert_eq!(bm, m);
    for col in b.as_mut_slice().chunks_mut(bm) {
        let mut s = col[k];
        for i in k + 1..m {
            s += v[i] * col[i];
        }
        s *= tau;
        if s != 0.0 {
            col[k] -= s;
            for i in k + 1..m {
                col[i] -= s * v[i];
            }
        }
    }
}

/// Solves `R[..n, ..n] y = c[..n]`.
fn back_substitute(r: &DMatrix<f64>, n: usize, c: &DMatrix<f64>, y: &mut DMatrix<f64>) {
    for col in 0..c.ncols() {
        for i in (0..n).rev() {
            let mut s = c[(i, col)];
            for k in i + 1..n {
                s -= r[(i, k)] * y[(k, col)];
            }
            y[(i, col)] = s / r[(i, i)];
        }
    }
}
