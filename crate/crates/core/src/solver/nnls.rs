//! Nonnegative least squares, `min ‖R t - b‖ s.t. t >= 0`, by the
//! Lawson–Hanson active-set method.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub t: DVector<f64>,
    /// `‖R t - b‖`.
    pub residual: f64,
}

pub fn solve_nnls(r: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    if r.nrows() != b.len() {
        return Err(Error::Dimension {
            context: "NNLS right-hand side",
            expected: r.nrows(),
            actual: b.len(),
        });
    }
    let n = r.ncols();
    let mut t = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * (1.0 + (r.transpose() * b).amax()) * (1.0 + r.amax());

    // single-column systems are common (one tendon per finger) and closed-form
    if n == 1 {
        let col = r.column(0);
        let denom = col.norm_squared();
        if denom > 0.0 {
            t[0] = (col.dot(b) / denom).max(0.0);
        }
        let residual = (r * &t - b).norm();
        return Ok(NnlsSolution { t, residual });
    }

    let max_outer = 3 * n + 3;
    for _ in 0..max_outer {
        let w = r.transpose() * (b - r * &t);
        let mut entering: Option<usize> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol && entering.is_none_or(|e| w[j] > w[e]) {
                entering = Some(j);
            }
        }
        let Some(j) = entering else { break };
        passive[j] = true;

        let mut inner = 0;
        loop {
            inner += 1;
            let s = passive_lstsq(r, b, &passive);
            let blocked: Vec<usize> = (0..n).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if blocked.is_empty() {
                t = s;
                break;
            }
            let mut alpha = 1.0f64;
            for &i in &blocked {
                let denom = t[i] - s[i];
                if denom > 0.0 {
                    alpha = alpha.min(t[i] / denom);
                }
            }
            t += (&s - &t) * alpha;
            for i in 0..n {
                if passive[i] && t[i] <= tol {
                    t[i] = 0.0;
                    passive[i] = false;
                }
            }
            if inner > 3 * n {
                break;
            }
        }
    }
    let residual = (r * &t - b).norm();
    Ok(NnlsSolution { t, residual })
}

/// Unconstrained least squares over the passive columns; zeros elsewhere.
fn passive_lstsq(r: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let mut sub = DMatrix::zeros(r.nrows(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        sub.set_column(c, &r.column(j));
    }
    let svd = sub.svd(true, true);
    let eps = 1e-12 * svd.singular_values.amax();
    let sol = svd.solve(b, eps).expect("both factors were computed");
    let mut full = DVector::zeros(passive.len());
    for (c, &j) in cols.iter().enumerate() {
        full[j] = sol[c];
    }
    full
}
