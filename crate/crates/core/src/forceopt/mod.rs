//! Grasping-phase optimization: the stability QP for one grasp, and the
//! exhaustive search over tendon moment arms that minimizes its aggregate.
//!
//! For a grasp, the QP looks for edge amplitudes `beta >= 0` and net tendon
//! tensions `t >= 0` that balance the object (`G D beta = 0`) and make the
//! tendon torques `A t` match the contact torques `J^T D beta` as closely as
//! possible. The total contact torque is normalized to 1 N·m so the trivial
//! solution is excluded; `q` is the norm of the torque mismatch.

mod grid;
mod report;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grasp::{
    actuation_matrix_dense, assemble_contact_system, GraspMatrices, GraspSample, StabilityResult,
};
use crate::hand::{ActuationParams, HandKinematics};
use crate::parallel::with_threads;
use crate::solver::{solve_qp_with, QpOptions, QpStatus, QuadraticProgram};

pub(crate) use grid::BoundGrid;
pub use grid::{
    FixedParameter, GridDocument, GridParameter, ParamKind, ParameterGrid, RangeDocument,
};
pub(crate) use report::aggregate_iter;
pub use report::{aggregate, BlockReport, GraspScore, OptimizationReport, Phase, TraceRow};

/// Knobs shared by both exhaustive searches.
#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Worker threads; 0 uses the global rayon pool.
    pub threads: usize,
    /// Keep the metric of every evaluated combination.
    pub trace: bool,
    pub qp: QpOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            threads: 0,
            trace: false,
            // the grasp Hessians are Gram matrices, PSD by construction
            qp: QpOptions {
                check_psd: false,
                ..QpOptions::default()
            },
        }
    }
}

/// Minimizes the unbalanced joint torque of one grasp.
pub fn grasp_stability_metric(m: &GraspMatrices) -> Result<StabilityResult> {
    grasp_stability_metric_with(m, "", &SearchOptions::default().qp)
}

/// As [`grasp_stability_metric`], naming the grasp in errors.
pub fn grasp_stability_metric_with(
    m: &GraspMatrices,
    name: &str,
    options: &QpOptions,
) -> Result<StabilityResult> {
    if m.n_c == 0 {
        return Err(Error::InvalidArgument(format!(
            "grasp `{name}` has no contacts"
        )));
    }
    StabilityQp::new(name, &m.j, &m.g, &m.d, &m.f).solve(&m.a, options)
}

/// The moment-arm independent part of the stability QP for one grasp.
#[derive(Clone, Debug)]
pub(crate) struct StabilityQp {
    name: String,
    /// `J^T D`: joint torques per unit edge amplitude.
    jtd: DMatrix<f64>,
    /// `[G D; 1^T J^T D]` padded with zero tendon columns later.
    eq: DMatrix<f64>,
    friction: DMatrix<f64>,
}

impl StabilityQp {
    pub fn new(
        name: &str,
        j: &DMatrix<f64>,
        g: &DMatrix<f64>,
        d: &DMatrix<f64>,
        f: &DMatrix<f64>,
    ) -> Self {
        let jtd = j.transpose() * d;
        let gd = g * d;
        let m = d.ncols();
        let mut eq = DMatrix::zeros(gd.nrows() + 1, m);
        eq.rows_mut(0, gd.nrows()).copy_from(&gd);
        for c in 0..m {
            eq[(gd.nrows(), c)] = jtd.column(c).sum();
        }
        StabilityQp {
            name: name.to_string(),
            jtd,
            eq,
            friction: f.clone(),
        }
    }

    pub fn solve(&self, a: &DMatrix<f64>, options: &QpOptions) -> Result<StabilityResult> {
        let (nq, m) = self.jtd.shape();
        if a.nrows() != nq {
            return Err(Error::Dimension {
                context: "actuation matrix rows",
                expected: nq,
                actual: a.nrows(),
            });
        }
        let nt = a.ncols();
        let n = m + nt;
        let mut qmat = DMatrix::zeros(nq, n);
        qmat.columns_mut(0, m).copy_from(&self.jtd);
        qmat.columns_mut(m, nt).copy_from(&(-a));
        let mut p = qmat.tr_mul(&qmat);
        p *= 2.0;

        let mut a_eq = DMatrix::zeros(self.eq.nrows(), n);
        a_eq.columns_mut(0, m).copy_from(&self.eq);
        let mut b_eq = DVector::zeros(self.eq.nrows());
        b_eq[self.eq.nrows() - 1] = 1.0;
        let mut qp = QuadraticProgram::new(p, DVector::zeros(n))
            .with_equalities(a_eq, b_eq)
            .nonnegative();
        if self.friction.nrows() > 0 {
            let mut a_in = DMatrix::zeros(self.friction.nrows(), n);
            a_in.columns_mut(0, m).copy_from(&self.friction);
            qp = qp.with_inequalities(a_in, DVector::zeros(self.friction.nrows()));
        }

        let sol = solve_qp_with(&qp, options)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(Error::Infeasible {
                    grasp: self.name.clone(),
                    reason: format!(
                        "no balanced contact forces with unit total torque (constraint violation {:.3e})",
                        sol.max_violation
                    ),
                })
            }
            status => {
                return Err(Error::Infeasible {
                    grasp: self.name.clone(),
                    reason: format!("stability QP ended with status {status:?}"),
                })
            }
        }
        let x = sol.x;
        let beta = x.rows(0, m).into_owned();
        let t_net = x.rows(m, nt).into_owned();
        let unbalanced = &self.jtd * &beta - a * &t_net;
        Ok(StabilityResult {
            q: unbalanced.norm(),
            beta: beta.as_slice().to_vec(),
            t_net: t_net.as_slice().to_vec(),
            unbalanced: unbalanced.as_slice().to_vec(),
        })
    }

    fn q(&self, a: &DMatrix<f64>, options: &QpOptions) -> f64 {
        match self.solve(a, options) {
            Ok(r) => r.q,
            Err(e) => {
                log::debug!("{e}");
                f64::INFINITY
            }
        }
    }
}

/// [`force_optimize_with`] with default options.
pub fn force_optimize(
    hand: &HandKinematics,
    grasps: &[GraspSample],
    grid: &ParameterGrid,
) -> Result<OptimizationReport> {
    force_optimize_with(hand, grasps, grid, &SearchOptions::default())
}

/// Evaluates every moment-arm combination of `grid` on every grasp with
/// contacts and returns the one with the smallest weighted aggregate.
/// Contact-free grasps are ignored.
pub fn force_optimize_with(
    hand: &HandKinematics,
    grasps: &[GraspSample],
    grid: &ParameterGrid,
    options: &SearchOptions,
) -> Result<OptimizationReport> {
    let grasps: Vec<&GraspSample> = grasps.iter().filter(|g| !g.contacts.is_empty()).collect();
    if grasps.is_empty() {
        return Err(Error::InvalidArgument(
            "force optimization needs at least one grasp with contacts".into(),
        ));
    }
    if let Some(p) = grid
        .parameters
        .iter()
        .map(|p| (&p.name, p.kind))
        .chain(grid.fixed.iter().map(|p| (&p.name, p.kind)))
        .find(|(_, k)| *k != ParamKind::MomentArm)
    {
        return Err(Error::InvalidArgument(format!(
            "force grid may only set moment arms, found `{}`",
            p.0
        )));
    }
    let bound = grid.bind(hand)?;
    for t in &hand.tendons {
        for c in &t.crossings {
            if !bound.covers(ParamKind::MomentArm, c.joint) {
                return Err(Error::MissingJoint {
                    joint: hand.joints[c.joint].id.clone(),
                    what: "force grid (moment arm neither enumerated nor fixed)",
                });
            }
        }
    }
    let systems = grasps
        .iter()
        .map(|g| {
            let c = assemble_contact_system(hand, g)?;
            Ok(StabilityQp::new(&g.name, &c.j, &c.g, &c.d, &c.f))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = grasps.iter().map(|g| g.weight).collect();

    let n_combos = grid.cardinality();
    let base = bound.base(ParamKind::MomentArm);
    let evaluate = |index: u64| -> Vec<f64> {
        let combo = grid.combo(index);
        let mut r = base.clone();
        bound.apply(&combo, ParamKind::MomentArm, &mut r);
        let a = actuation_matrix_dense(hand, &r);
        systems.iter().map(|s| s.q(&a, &options.qp)).collect()
    };
    let per_combo: Vec<Vec<f64>> = with_threads(options.threads, || {
        (0..n_combos).into_par_iter().map(evaluate).collect()
    })?;

    let totals: Vec<f64> = per_combo
        .iter()
        .map(|qs| aggregate_iter(weights.iter().copied().zip(qs.iter().copied())))
        .collect();
    let best = argmin(&totals);
    let skipped = totals.iter().filter(|q| !q.is_finite()).count() as u64;
    if !totals[best].is_finite() {
        return Err(Error::NoFeasibleCombination {
            blocking: blocking_grasps(&grasps, &per_combo),
        });
    }
    let baseline = grid.index_of(&grid.baseline_combo()) as usize;

    let scores = |i: usize| -> Vec<GraspScore> {
        grasps
            .iter()
            .zip(&per_combo[i])
            .map(|(g, &q)| GraspScore {
                name: g.name.clone(),
                weight: g.weight,
                q,
            })
            .collect()
    };
    let params = |i: usize| -> ActuationParams {
        let mut r = base.clone();
        bound.apply(&grid.combo(i as u64), ParamKind::MomentArm, &mut r);
        ActuationParams {
            moment_arm: hand
                .joints
                .iter()
                .zip(&r)
                .filter(|(_, v)| !v.is_nan())
                .map(|(j, &v)| (j.id.clone(), v))
                .collect(),
            ..Default::default()
        }
    };
    let trace = options.trace.then(|| {
        totals
            .iter()
            .enumerate()
            .map(|(i, &q)| TraceRow {
                block: 0,
                combo: grid.combo(i as u64),
                q,
            })
            .collect()
    });

    Ok(OptimizationReport {
        phase: Phase::Force,
        parameters: grid.parameters.clone(),
        fixed: grid.fixed.clone(),
        best_combo: grid.combo(best as u64),
        best_values: named_values(grid, &grid.combo(best as u64)),
        best_params: params(best),
        best_q: totals[best],
        per_grasp_q: scores(best),
        baseline_combo: grid.combo(baseline as u64),
        baseline_values: named_values(grid, &grid.combo(baseline as u64)),
        baseline_params: params(baseline),
        baseline_q: totals[baseline],
        baseline_per_grasp_q: scores(baseline),
        reduction: reduction(totals[best], totals[baseline]),
        combos_evaluated: n_combos,
        skipped_infeasible: skipped,
        blocks: Vec::new(),
        trace,
    })
}

/// First index of the smallest value; ties go to the lower index.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn named_values(grid: &ParameterGrid, combo: &[usize]) -> BTreeMap<String, f64> {
    grid.parameters
        .iter()
        .zip(combo)
        .map(|(p, &i)| (p.name.clone(), p.values[i]))
        .collect()
}

pub(crate) fn reduction(best: f64, baseline: f64) -> Option<f64> {
    (baseline.is_finite() && baseline > 0.0).then(|| 1.0 - best / baseline)
}

/// Grasps infeasible under every combination, or failing that, every grasp
/// that is infeasible under some combination.
fn blocking_grasps(grasps: &[&GraspSample], per_combo: &[Vec<f64>]) -> Vec<String> {
    let always: Vec<String> = grasps
        .iter()
        .enumerate()
        .filter(|(i, _)| per_combo.iter().all(|qs| !qs[*i].is_finite()))
        .map(|(_, g)| g.name.clone())
        .collect();
    if !always.is_empty() {
        return always;
    }
    grasps
        .iter()
        .enumerate()
        .filter(|(i, _)| per_combo.iter().any(|qs| !qs[*i].is_finite()))
        .map(|(_, g)| g.name.clone())
        .collect()
}
