//! Dense convex QP by a primal active-set method.
//!
//! The Hessian only needs to be positive semidefinite. Each iteration works in
//! the null space of the working constraints: along directions of positive
//! curvature it takes a Newton step, and where the reduced Hessian is singular
//! and the reduced gradient has a component in its kernel, it follows that
//! zero-curvature descent ray to the nearest blocking constraint. With
//! `P = 0` this reduces to a vertex-following LP method, which is what the
//! phase-1 feasibility problem uses.
//!
//! Lower bounds are handled by fixing variables rather than as general rows,
//! which keeps the working matrices small for the grasp QPs (mostly bounds).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{back_substitute, full_qr, independent_rows};
use crate::error::{Error, Result};

/// `minimize ½ xᵀPx + qᵀx + constant`
/// subject to `a_eq x = b_eq`, `a_in x <= b_in`, `x >= lb`.
#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub constant: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    /// Entries may be `-inf`.
    pub lb: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        QuadraticProgram {
            p,
            q,
            constant: 0.0,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
        }
    }

    /// Linear program: zero Hessian.
    pub fn linear(c: DVector<f64>) -> Self {
        let n = c.len();
        Self::new(DMatrix::zeros(n, n), c)
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_lower_bounds(mut self, lb: DVector<f64>) -> Self {
        self.lb = lb;
        self
    }

    pub fn nonnegative(self) -> Self {
        let n = self.n();
        self.with_lower_bounds(DVector::zeros(n))
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + self.constant
    }

    fn check_dimensions(&self) -> Result<()> {
        let n = self.n();
        let dims = [
            ("Hessian rows", self.p.nrows(), n),
            ("Hessian columns", self.p.ncols(), n),
            ("equality matrix columns", self.a_eq.ncols(), n),
            (
                "equality right-hand side",
                self.b_eq.len(),
                self.a_eq.nrows(),
            ),
            ("inequality matrix columns", self.a_in.ncols(), n),
            (
                "inequality right-hand side",
                self.b_in.len(),
                self.a_in.nrows(),
            ),
            ("lower bounds", self.lb.len(), n),
        ];
        for (context, actual, expected) in dims {
            if actual != expected {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    fn check_hessian(&self) -> Result<()> {
        let scale = self.p.amax().max(1.0);
        if (&self.p - self.p.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidArgument("Hessian is not symmetric".into()));
        }
        if self.p.nrows() == 0 {
            return Ok(());
        }
        let eig = self.p.clone().symmetric_eigen();
        let norm = eig.eigenvalues.amax();
        let min = eig.eigenvalues.min();
        if min < -1e-7 * norm {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct QpOptions {
    /// KKT tolerance, scaled by `1 + ‖q‖ + ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Verify `P` is PSD with an eigendecomposition before solving.
    pub check_psd: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tol: 1e-6,
            max_iter: 10_000,
            check_psd: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    Unbounded,
}

/// Infinity norms of the KKT conditions at the returned point.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_in: f64,
    pub complementarity: f64,
    /// Magnitude of the most negative inequality or bound multiplier.
    pub dual: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_in)
            .max(self.complementarity)
            .max(self.dual)
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    /// KKT scale `1 + ‖q‖∞ + ‖b‖∞` the residuals are judged against.
    pub kkt_scale: f64,
    pub eq_multipliers: DVector<f64>,
    /// Nonnegative for `a_in x <= b_in`.
    pub in_multipliers: DVector<f64>,
    /// Nonnegative for `x >= lb`.
    pub bound_multipliers: DVector<f64>,
    pub iterations: usize,
    /// Largest constraint violation at `x`; positive when infeasible.
    pub max_violation: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution> {
    solve_qp_with(qp, &QpOptions::default())
}

pub fn solve_qp_with(qp: &QuadraticProgram, options: &QpOptions) -> Result<QpSolution> {
    qp.check_dimensions()?;
    if options.check_psd {
        qp.check_hessian()?;
    }
    let n = qp.n();
    let scale = 1.0 + qp.q.amax() + qp.b_eq.amax().max(qp.b_in.amax());
    let mut iterations = 0;

    // Phase 1: find a feasible point, or prove there is none.
    let x0 = DVector::from_iterator(
        n,
        qp.lb
            .iter()
            .map(|&l| if l.is_finite() { l.max(0.0) } else { 0.0 }),
    );
    let start_violation = violation(qp, &x0);
    let (mut x, at_bound) = if start_violation == 0.0 {
        let at = (0..n).map(|j| x0[j] == qp.lb[j]).collect();
        (x0, at)
    } else {
        match phase_one(qp, &x0, options, &mut iterations) {
            Ok(found) => found,
            Err(closest) => return Ok(infeasible(qp, closest, iterations, scale)),
        }
    };
    let mut ws_violation = violation(qp, &x);
    if ws_violation > 1e-8 * scale {
        // phase 1 stalled above the feasibility threshold
        return Ok(infeasible(qp, x, iterations, scale));
    }
    for j in 0..n {
        if x[j] < qp.lb[j] {
            x[j] = qp.lb[j];
        }
    }

    let eq_rows = independent_rows(&qp.a_eq, 1e-10);
    let e = select_rows(&qp.a_eq, &eq_rows);
    let core = Core {
        p: &qp.p,
        q: &qp.q,
        e: &e,
        c: &qp.a_in,
        d: &qp.b_in,
        lb: &qp.lb,
        lam_tol: 1e-10 * qp.p.amax(),
    };

    // Warm start: keep phase-1 bounds while the working matrix stays full rank.
    let mut ws = WorkingSet {
        at_bound: vec![false; n],
        ineq: Vec::new(),
    };
    for j in 0..n {
        if at_bound[j] && x[j] == qp.lb[j] {
            ws.at_bound[j] = true;
            if !core.full_rank(&ws) {
                ws.at_bound[j] = false;
            }
        }
    }

    let remaining = options.max_iter.saturating_sub(iterations);
    let (outcome, mult) = core.run(&mut x, &mut ws, remaining, &mut iterations);
    ws_violation = violation(qp, &x);

    let mut eq_multipliers = DVector::zeros(qp.a_eq.nrows());
    for (slot, &row) in eq_rows.iter().enumerate() {
        eq_multipliers[row] = mult.eq[slot];
    }
    let status = match outcome {
        Outcome::Optimal => QpStatus::Optimal,
        Outcome::Unbounded => QpStatus::Unbounded,
        Outcome::MaxIter => QpStatus::MaxIter,
    };
    let kkt = kkt_residuals(qp, &x, &eq_multipliers, &mult.ineq, &mult.bound);
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        status,
        kkt,
        kkt_scale: scale,
        eq_multipliers,
        in_multipliers: mult.ineq,
        bound_multipliers: mult.bound,
        iterations,
        max_violation: ws_violation,
    })
}

fn infeasible(qp: &QuadraticProgram, x: DVector<f64>, iterations: usize, scale: f64) -> QpSolution {
    let n = qp.n();
    let kkt = kkt_residuals(
        qp,
        &x,
        &DVector::zeros(qp.a_eq.nrows()),
        &DVector::zeros(qp.a_in.nrows()),
        &DVector::zeros(n),
    );
    QpSolution {
        objective: qp.objective(&x),
        max_violation: violation(qp, &x),
        x,
        status: QpStatus::Infeasible,
        kkt,
        kkt_scale: scale,
        eq_multipliers: DVector::zeros(qp.a_eq.nrows()),
        in_multipliers: DVector::zeros(qp.a_in.nrows()),
        bound_multipliers: DVector::zeros(n),
        iterations,
    }
}

fn violation(qp: &QuadraticProgram, x: &DVector<f64>) -> f64 {
    let eq = (&qp.a_eq * x - &qp.b_eq).amax();
    let ineq = (&qp.a_in * x - &qp.b_in)
        .iter()
        .fold(0.0f64, |m, &v| m.max(v));
    let bound = qp
        .lb
        .iter()
        .zip(x.iter())
        .fold(0.0f64, |m, (&l, &v)| m.max(l - v));
    eq.max(ineq).max(bound)
}

fn kkt_residuals(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    nu: &DVector<f64>,
) -> KktResiduals {
    let grad = &qp.p * x + &qp.q + qp.a_eq.transpose() * lambda + qp.a_in.transpose() * mu - nu;
    let slack_in = &qp.b_in - &qp.a_in * x;
    let mut comp = 0.0f64;
    let mut dual = 0.0f64;
    for i in 0..mu.len() {
        comp = comp.max((mu[i] * slack_in[i]).abs());
        dual = dual.max(-mu[i]);
    }
    for j in 0..nu.len() {
        if qp.lb[j].is_finite() {
            comp = comp.max((nu[j] * (x[j] - qp.lb[j])).abs());
        }
        dual = dual.max(-nu[j]);
    }
    KktResiduals {
        stationarity: grad.amax(),
        primal_eq: (&qp.a_eq * x - &qp.b_eq).amax(),
        primal_in: slack_in.iter().fold(0.0f64, |m, &s| m.max(-s)).max(
            qp.lb
                .iter()
                .zip(x.iter())
                .fold(0.0f64, |m, (&l, &v)| m.max(l - v)),
        ),
        complementarity: comp,
        dual,
    }
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), a.ncols());
    for (i, &r) in rows.iter().enumerate() {
        out.set_row(i, &a.row(r));
    }
    out
}

/// Minimizes the total constraint violation from `x0`, introducing one
/// artificial variable per equality row and per inequality row.
fn phase_one(
    qp: &QuadraticProgram,
    x0: &DVector<f64>,
    options: &QpOptions,
    iterations: &mut usize,
) -> std::result::Result<(DVector<f64>, Vec<bool>), DVector<f64>> {
    let n = qp.n();
    let me = qp.a_eq.nrows();
    let mi = qp.a_in.nrows();
    let total = n + me + mi;

    let residual = &qp.b_eq - &qp.a_eq * x0;
    let over = &qp.a_in * x0 - &qp.b_in;

    let mut e = DMatrix::zeros(me, total);
    e.view_mut((0, 0), (me, n)).copy_from(&qp.a_eq);
    let mut c = DMatrix::zeros(mi, total);
    c.view_mut((0, 0), (mi, n)).copy_from(&qp.a_in);
    let mut lb = DVector::zeros(total);
    lb.rows_mut(0, n).copy_from(&qp.lb);
    let mut cost = DVector::zeros(total);
    let mut x = DVector::zeros(total);
    x.rows_mut(0, n).copy_from(x0);
    for i in 0..me {
        let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
        e[(i, n + i)] = sign;
        x[n + i] = residual[i].abs();
        cost[n + i] = 1.0;
    }
    for i in 0..mi {
        c[(i, n + me + i)] = -1.0;
        x[n + me + i] = over[i].max(0.0);
        cost[n + me + i] = 1.0;
    }
    let p = DMatrix::zeros(total, total);
    let core = Core {
        p: &p,
        q: &cost,
        e: &e,
        c: &c,
        d: &qp.b_in,
        lb: &lb,
        lam_tol: 0.0,
    };
    let mut ws = WorkingSet {
        at_bound: (0..total).map(|j| x[j] == lb[j]).collect(),
        ineq: Vec::new(),
    };
    // artificial columns keep [E | diag] full rank; drop bounds that break it
    for j in 0..total {
        if ws.at_bound[j] {
            ws.at_bound[j] = false;
            let mut trial = ws.clone();
            trial.at_bound[j] = true;
            if core.full_rank(&trial) {
                ws = trial;
            }
        }
    }
    let budget = options.max_iter.saturating_sub(*iterations);
    let (outcome, _) = core.run(&mut x, &mut ws, budget, iterations);
    let artificial: f64 = x.rows(n, me + mi).sum();
    let scale = 1.0 + qp.b_eq.amax().max(qp.b_in.amax()) + x0.amax();
    if outcome != Outcome::Optimal || artificial > 1e-9 * scale {
        return Err(x.rows(0, n).into_owned());
    }
    Ok((x.rows(0, n).into_owned(), ws.at_bound[..n].to_vec()))
}

#[derive(Clone, Debug)]
struct WorkingSet {
    at_bound: Vec<bool>,
    ineq: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
    MaxIter,
}

struct Multipliers {
    eq: DVector<f64>,
    ineq: DVector<f64>,
    bound: DVector<f64>,
}

/// The active-set loop over an equality set `e` that is already full row rank.
struct Core<'a> {
    p: &'a DMatrix<f64>,
    q: &'a DVector<f64>,
    e: &'a DMatrix<f64>,
    c: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
    lb: &'a DVector<f64>,
    lam_tol: f64,
}

enum Blocking {
    Bound(usize),
    Row(usize),
}

impl Core<'_> {
    fn n(&self) -> usize {
        self.q.len()
    }

    /// Working rows restricted to free columns, transposed: `nf x k`.
    fn working_transpose(&self, ws: &WorkingSet, free: &[usize]) -> DMatrix<f64> {
        let ne = self.e.nrows();
        let k = ne + ws.ineq.len();
        let mut mt = DMatrix::zeros(free.len(), k);
        for (fi, &j) in free.iter().enumerate() {
            for r in 0..ne {
                mt[(fi, r)] = self.e[(r, j)];
            }
            for (s, &i) in ws.ineq.iter().enumerate() {
                mt[(fi, ne + s)] = self.c[(i, j)];
            }
        }
        mt
    }

    fn full_rank(&self, ws: &WorkingSet) -> bool {
        let free: Vec<usize> = (0..self.n()).filter(|&j| !ws.at_bound[j]).collect();
        let mt = self.working_transpose(ws, &free);
        let k = mt.ncols();
        k <= free.len() && independent_rows(&mt.transpose(), 1e-9).len() == k
    }

    fn run(
        &self,
        x: &mut DVector<f64>,
        ws: &mut WorkingSet,
        max_iter: usize,
        iterations: &mut usize,
    ) -> (Outcome, Multipliers) {
        let n = self.n();
        let mut degenerate_streak = 0usize;
        let mut local = 0usize;
        loop {
            if local >= max_iter {
                let mult = self.multipliers(x, ws);
                return (Outcome::MaxIter, mult);
            }
            local += 1;
            *iterations += 1;

            let free: Vec<usize> = (0..n).filter(|&j| !ws.at_bound[j]).collect();
            let nf = free.len();
            let mt = self.working_transpose(ws, &free);
            let k = mt.ncols();
            let g = self.p * &*x + self.q;
            let gf = DVector::from_iterator(nf, free.iter().map(|&j| g[j]));
            let qr = full_qr(&mt);
            let nz = nf - k;

            let mut step = DVector::zeros(n);
            let mut ray = false;
            if nz > 0 {
                let z = qr.q.columns(k, nz);
                let mut pff = DMatrix::zeros(nf, nf);
                for (a, &ja) in free.iter().enumerate() {
                    for (b, &jb) in free.iter().enumerate() {
                        pff[(a, b)] = self.p[(ja, jb)];
                    }
                }
                let gr = z.transpose() * &gf;
                let mut hr = z.transpose() * &pff * z;
                hr = (&hr + hr.transpose()) * 0.5;
                let eig = hr.symmetric_eigen();
                let y = eig.eigenvectors.transpose() * &gr;
                let mut newton = DVector::zeros(nz);
                let mut kernel = DVector::zeros(nz);
                for i in 0..nz {
                    let lam = eig.eigenvalues[i];
                    if lam > self.lam_tol && lam > 0.0 {
                        newton[i] = -y[i] / lam;
                    } else {
                        kernel[i] = -y[i];
                    }
                }
                let g_tol = 1e-11 * (1.0 + gf.amax());
                let reduced = if kernel.amax() > g_tol {
                    ray = true;
                    &eig.eigenvectors * kernel
                } else {
                    &eig.eigenvectors * newton
                };
                let sf = z * reduced;
                for (fi, &j) in free.iter().enumerate() {
                    step[j] = sf[fi];
                }
            }

            let step_norm = step.amax();
            if !ray && step_norm <= 1e-13 * (1.0 + x.amax()) {
                let mult = self.multipliers_from(&g, &gf, &qr.q, &qr.r, k, ws);
                let mult_tol = 1e-10 * (1.0 + g.amax());
                let candidates: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| ws.at_bound[j])
                    .map(|j| (j, mult.bound[j]))
                    .chain(ws.ineq.iter().map(|&i| (n + i, mult.ineq[i])))
                    .filter(|&(_, v)| v < -mult_tol)
                    .collect();
                // most negative multiplier; Bland's smallest-index rule once cycling is suspected
                let leave = if degenerate_streak > 25 {
                    candidates.iter().min_by_key(|&&(key, _)| key).copied()
                } else {
                    candidates
                        .iter()
                        .copied()
                        .fold(None, |best: Option<(usize, f64)>, cand| match best {
                            Some(b) if b.1 <= cand.1 => Some(b),
                            _ => Some(cand),
                        })
                };
                match leave {
                    None => return (Outcome::Optimal, mult),
                    Some((key, _)) if key < n => ws.at_bound[key] = false,
                    Some((key, _)) => ws.ineq.retain(|&i| i != key - n),
                }
                continue;
            }

            // ratio test
            let pmax = step_norm;
            let mut alpha = if ray { f64::INFINITY } else { 1.0 };
            let mut block: Option<Blocking> = None;
            for &j in &free {
                if self.lb[j].is_finite() && step[j] < -1e-12 * pmax {
                    let a = ((self.lb[j] - x[j]) / step[j]).max(0.0);
                    if a < alpha {
                        alpha = a;
                        block = Some(Blocking::Bound(j));
                    }
                }
            }
            for i in 0..self.c.nrows() {
                if ws.ineq.contains(&i) {
                    continue;
                }
                let row = self.c.row(i);
                let rate = row.dot(&step.transpose());
                if rate > 1e-12 * pmax * row.amax() {
                    let slack = self.d[i] - row.dot(&x.transpose());
                    let a = (slack / rate).max(0.0);
                    if a < alpha {
                        alpha = a;
                        block = Some(Blocking::Row(i));
                    }
                }
            }
            if alpha.is_infinite() {
                let mult = self.multipliers(x, ws);
                return (Outcome::Unbounded, mult);
            }
            x.axpy(alpha, &step, 1.0);
            if alpha == 0.0 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            match block {
                Some(Blocking::Bound(j)) => {
                    x[j] = self.lb[j];
                    ws.at_bound[j] = true;
                }
                Some(Blocking::Row(i)) => ws.ineq.push(i),
                None => {}
            }
        }
    }

    fn multipliers(&self, x: &DVector<f64>, ws: &WorkingSet) -> Multipliers {
        let n = self.n();
        let free: Vec<usize> = (0..n).filter(|&j| !ws.at_bound[j]).collect();
        let mt = self.working_transpose(ws, &free);
        let g = self.p * x + self.q;
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
        let qr = full_qr(&mt);
        self.multipliers_from(&g, &gf, &qr.q, &qr.r, mt.ncols(), ws)
    }

    /// Least-squares multipliers for `Mᵀλ = -g_free`, expanded to full size.
    fn multipliers_from(
        &self,
        g: &DVector<f64>,
        gf: &DVector<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        k: usize,
        ws: &WorkingSet,
    ) -> Multipliers {
        let n = self.n();
        let ne = self.e.nrows();
        let lambda = if k > 0 {
            let rhs = -(q.columns(0, k).transpose() * gf);
            back_substitute(r, &rhs)
        } else {
            DVector::zeros(0)
        };
        let eq = lambda.rows(0, ne).into_owned();
        let mut ineq = DVector::zeros(self.c.nrows());
        for (s, &i) in ws.ineq.iter().enumerate() {
            ineq[i] = lambda[ne + s];
        }
        let s = g + self.e.transpose() * &eq + self.c.transpose() * &ineq;
        let mut bound = DVector::zeros(n);
        for j in 0..n {
            if ws.at_bound[j] {
                bound[j] = s[j];
            }
        }
        Multipliers { eq, ineq, bound }
    }
}
