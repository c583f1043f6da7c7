//! Small dense helpers the active-set solvers need and nalgebra does not
//! expose directly: a Householder QR with the full orthogonal factor, and a
//! greedy row-rank filter.

use nalgebra::{DMatrix, DVector};

/// `a = q * r` with `q` square orthogonal and `r` upper trapezoidal.
pub(crate) struct FullQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub(crate) fn full_qr(a: &DMatrix<f64>) -> FullQr {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut v = DVector::<f64>::zeros(m);
    for j in 0..n.min(m.saturating_sub(1)) {
        let len = m - j;
        let mut norm2 = 0.0;
        for i in j..m {
            norm2 += r[(i, j)] * r[(i, j)];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r[(j, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut vnorm2 = 0.0;
        for i in 0..len {
            let vi = if i == 0 { x0 - alpha } else { r[(j + i, j)] };
            v[i] = vi;
            vnorm2 += vi * vi;
        }
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        // R[j.., j..] -= scale * v (v^T R[j.., j..])
        for c in j..n {
            let mut dot = 0.0;
            for i in 0..len {
                dot += v[i] * r[(j + i, c)];
            }
            let f = scale * dot;
            if f != 0.0 {
                for i in 0..len {
                    r[(j + i, c)] -= f * v[i];
                }
            }
        }
        // Q[:, j..] -= scale * (Q[:, j..] v) v^T
        for row in 0..m {
            let mut dot = 0.0;
            for i in 0..len {
                dot += q[(row, j + i)] * v[i];
            }
            let f = scale * dot;
            if f != 0.0 {
                for i in 0..len {
                    q[(row, j + i)] -= f * v[i];
                }
            }
        }
        for i in (j + 1)..m {
            r[(i, j)] = 0.0;
        }
    }
    FullQr { q, r }
}

/// Solves `r[..k, ..k] x = b` for upper-triangular `r`.
pub(crate) fn back_substitute(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = b.len();
    let mut x = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut s = b[i];
        for c in (i + 1)..k {
            s -= r[(i, c)] * x[c];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Indices of a maximal linearly independent subset of the rows of `a`,
/// chosen greedily in row order.
pub(crate) fn independent_rows(a: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..a.nrows() {
        let row = a.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let mut residual = row.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&residual);
                residual.axpy(-c, b, 1.0);
            }
        }
        let rn = residual.norm();
        if rn > rel_tol * norm {
            basis.push(residual / rn);
            keep.push(i);
        }
    }
    keep
}
