//! Independent reference computations used to freeze and check expected values.
//! Nothing here calls into the solver paths it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum of a convex QP by enumerating every subset of the inequality
/// constraints as active, solving each equality-constrained subproblem through
/// its KKT system, and keeping the best primal-feasible candidate.
///
/// Only general inequalities `a_in x <= b_in` and equalities are supported.
pub fn qp_by_active_set_enumeration(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
) -> Option<(f64, DVector<f64>)> {
    let n = q.len();
    let m = a_in.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = a_eq.nrows() + rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(p);
        for j in 0..n {
            rhs[j] = -q[j];
        }
        let mut r = n;
        for e in 0..a_eq.nrows() {
            for j in 0..n {
                kkt[(r, j)] = a_eq[(e, j)];
                kkt[(j, r)] = a_eq[(e, j)];
            }
            rhs[r] = b_eq[e];
            r += 1;
        }
        for &i in &rows {
            for j in 0..n {
                kkt[(r, j)] = a_in[(i, j)];
                kkt[(j, r)] = a_in[(i, j)];
            }
            rhs[r] = b_in[i];
            r += 1;
        }
        let svd = kkt.clone().svd(true, true);
        let eps = 1e-11 * svd.singular_values.amax().max(1.0);
        let Ok(sol) = svd.solve(&rhs, eps) else {
            continue;
        };
        // the pseudo-inverse answer must actually solve the system
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let feasible = (a_eq * &x - b_eq).amax() <= 1e-8
            && (0..m).all(|i| a_in.row(i).dot(&x.transpose()) <= b_in[i] + 1e-8);
        if !feasible {
            continue;
        }
        let obj = 0.5 * x.dot(&(p * &x)) + q.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best
}

/// `min ‖R t - b‖, t >= 0` for one or two columns by a 1e-4-resolution scan of
/// the first coordinate; the second coordinate, if any, is minimized in closed
/// form for each scanned value.
pub fn nnls_by_scan(r: &DMatrix<f64>, b: &DVector<f64>, t_max: f64) -> f64 {
    assert!(r.ncols() == 1 || r.ncols() == 2);
    let steps = (t_max / 1e-4).ceil() as usize;
    let mut best = f64::INFINITY;
    for s in 0..=steps {
        let t1 = s as f64 * 1e-4;
        let rem = b - r.column(0) * t1;
        let res = if r.ncols() == 1 {
            rem.norm()
        } else {
            let c = r.column(1);
            let denom = c.norm_squared();
            let t2 = if denom > 0.0 {
                (c.dot(&rem) / denom).max(0.0)
            } else {
                0.0
            };
            (rem - c * t2).norm()
        };
        best = best.min(res);
    }
    best
}

/// `min ‖R t - b‖, t >= 0` by enumerating every support pattern: solve the
/// unconstrained least-squares problem on each subset of columns and keep the
/// best nonnegative solution.
pub fn nnls_by_sign_patterns(r: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = r.ncols();
    let mut best = b.norm();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut sub = DMatrix::zeros(r.nrows(), cols.len());
        for (c, &j) in cols.iter().enumerate() {
            sub.set_column(c, &r.column(j));
        }
        let normal = sub.transpose() * &sub;
        let Some(chol) = normal.cholesky() else {
            continue;
        };
        let t = chol.solve(&(sub.transpose() * b));
        if t.iter().all(|&v| v >= 0.0) {
            best = best.min((&sub * t - b).norm());
        }
    }
    best
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[(b, b)].partial_cmp(&m[(a, a)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &v.column(i));
    }
    (values, vectors)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random convex QP with a known feasible point. The Hessian is
/// positive definite or, for every third instance, rank-deficient with `q`
/// in its range so the problem stays bounded below.
pub struct RandomQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    /// finite entries count toward the constraint budget
    pub lb: DVector<f64>,
}

impl RandomQp {
    /// Inequalities with the finite lower bounds folded in as `-x_i <= -lb_i`.
    pub fn stacked_inequalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.q.len();
        let bounded: Vec<usize> = (0..n).filter(|&i| self.lb[i].is_finite()).collect();
        let m = self.a_in.nrows();
        let mut a = DMatrix::zeros(m + bounded.len(), n);
        let mut b = DVector::zeros(m + bounded.len());
        a.rows_mut(0, m).copy_from(&self.a_in);
        b.rows_mut(0, m).copy_from(&self.b_in);
        for (k, &i) in bounded.iter().enumerate() {
            a[(m + k, i)] = -1.0;
            b[m + k] = -self.lb[i];
        }
        (a, b)
    }
}

pub fn random_qp(rng: &mut ChaCha8Rng, index: usize) -> RandomQp {
    let n = rng.gen_range(1..=6);
    let m_total = rng.gen_range(0..=4usize);
    let m_eq = if n > 1 && m_total > 0 {
        rng.gen_range(0..=m_total.min(n - 1).min(1))
    } else {
        0
    };
    let m_in = m_total - m_eq;
    let rank = if index % 3 == 2 && n > 1 {
        rng.gen_range(1..n)
    } else {
        n
    };
    let f = random_matrix(rng, rank, n);
    let mut p = f.transpose() * &f;
    if rank == n {
        p += DMatrix::identity(n, n) * 0.1;
    }
    // q = Pᵀ w keeps a singular problem bounded below
    let q = if rank == n {
        random_vector(rng, n)
    } else {
        &p * random_vector(rng, n)
    };
    let xf = random_vector(rng, n);
    let a_eq = random_matrix(rng, m_eq, n);
    let b_eq = &a_eq * &xf;
    let a_in = random_matrix(rng, m_in, n);
    let slack = DVector::from_fn(m_in, |_, _| rng.gen_range(0.0..0.5));
    let b_in = &a_in * &xf + slack;
    let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
    if index % 4 == 3 {
        for i in 0..n.min(4 - m_total) {
            lb[i] = xf[i] - rng.gen_range(0.0..0.5);
        }
    }
    RandomQp {
        p,
        q,
        a_eq,
        b_eq,
        a_in,
        b_in,
        lb,
    }
}

/// Right-handed frame whose first column is `n`.
pub fn frame_with_normal(n: &nalgebra::Vector3<f64>) -> nalgebra::Matrix3<f64> {
    let helper = if n.x.abs() < 0.9 {
        nalgebra::Vector3::x()
    } else {
        nalgebra::Vector3::y()
    };
    let t1 = (helper - n * n.dot(&helper)).normalize();
    nalgebra::Matrix3::from_columns(&[*n, t1, n.cross(&t1)])
}

/// `G` and block-diagonal `D` for contacts pushing along `-position` on a
/// sphere centered at the object origin.
pub fn sphere_grasp(
    points: &[nalgebra::Vector3<f64>],
    mu: f64,
    edges: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    use synergy::grasp::{build_contact_basis, grasp_map, Contact};
    let contacts: Vec<Contact> = points
        .iter()
        .map(|p| Contact::new("x", *p, -p.normalize(), mu).with_edges(edges))
        .collect();
    let frames: Vec<_> = contacts
        .iter()
        .map(|c| frame_with_normal(&c.normal))
        .collect();
    let g = grasp_map(&frames, &contacts, &nalgebra::Isometry3::identity()).unwrap();
    let bases: Vec<DMatrix<f64>> = contacts
        .iter()
        .map(|c| build_contact_basis(c).unwrap().d)
        .collect();
    let cols = bases.iter().map(|b| b.ncols()).sum();
    let mut d = DMatrix::zeros(3 * contacts.len(), cols);
    let mut c = 0;
    for (k, b) in bases.iter().enumerate() {
        d.view_mut((3 * k, c), b.shape()).copy_from(b);
        c += b.ncols();
    }
    (g, d)
}

/// Unit vectors to the vertices of a regular tetrahedron.
pub fn tetrahedron() -> Vec<nalgebra::Vector3<f64>> {
    [
        (1.0, 1.0, 1.0),
        (1.0, -1.0, -1.0),
        (-1.0, 1.0, -1.0),
        (-1.0, -1.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| nalgebra::Vector3::new(x, y, z).normalize())
    .collect()
}
