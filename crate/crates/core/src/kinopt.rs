//! Pre-contact (free-motion) optimization of springs.
//!
//! Before contact, tendon torques `R t` only fight the joint springs `tau_s`.
//! A desired pose is reachable quasi-statically when some `t >= 0` balances
//! them exactly; the residual `‖R t - tau_s‖` measures how far it is. The
//! search enumerates stiffness and preload combinations and minimizes the
//! weighted aggregate of that residual over all poses.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forceopt::{
    aggregate_iter, argmin, named_values, reduction, BlockReport, GraspScore, OptimizationReport,
    ParamKind, ParameterGrid, Phase, SearchOptions, TraceRow,
};
use crate::grasp::{actuation_matrix, GraspSample};
use crate::hand::{ActuationParams, HandKinematics};
use crate::parallel::with_threads;
use crate::solver::solve_nnls;

/// `tau_s[j] = K_j (theta_j + theta0_j)`.
pub fn spring_torque(stiffness: &[f64], theta: &[f64], preload: &[f64]) -> Result<Vec<f64>> {
    for (context, len) in [
        ("joint angles", theta.len()),
        ("preload angles", preload.len()),
    ] {
        if len != stiffness.len() {
            return Err(Error::Dimension {
                context,
                expected: stiffness.len(),
                actual: len,
            });
        }
    }
    Ok(stiffness
        .iter()
        .zip(theta)
        .zip(preload)
        .map(|((k, t), t0)| k * (t + t0))
        .collect())
}

/// Spring torques of every joint of `hand` at `theta`.
///
/// A joint whose tendon crossing has sign -1 carries a mirrored spring, so
/// its torque is `-K (-theta + theta0)`; for ordinary joints this is
/// [`spring_torque`].
pub fn hand_spring_torque(
    hand: &HandKinematics,
    params: &ActuationParams,
    theta: &[f64],
) -> Result<Vec<f64>> {
    if theta.len() != hand.n_joints() {
        return Err(Error::Dimension {
            context: "joint-angle vector",
            expected: hand.n_joints(),
            actual: theta.len(),
        });
    }
    let k = ActuationParams::dense(hand, &params.stiffness, "stiffnesses")?;
    let t0 = ActuationParams::dense(hand, &params.preload, "preload angles")?;
    Ok((0..hand.n_joints())
        .map(|j| sensed_torque(hand.spring_sense(j), k[j], theta[j], t0[j]))
        .collect())
}

fn sensed_torque(sense: f64, k: f64, theta: f64, theta0: f64) -> f64 {
    sense * k * (sense * theta + theta0)
}

/// Moment-arm map `R` at a configuration. Pulleys have fixed radii, so this
/// is the actuation matrix whatever `theta` is.
pub fn moment_arm_matrix(
    hand: &HandKinematics,
    moment_arm: &BTreeMap<String, f64>,
    _theta: &[f64],
) -> Result<DMatrix<f64>> {
    actuation_matrix(hand, moment_arm)
}

/// Free-motion balance problem for one pose.
#[derive(Clone, Debug)]
pub struct PreContactSystem {
    pub r: DMatrix<f64>,
    pub tau_s: DVector<f64>,
    pub pose_name: String,
    pub weight: f64,
}

impl PreContactSystem {
    pub fn new(
        hand: &HandKinematics,
        pose: &GraspSample,
        params: &ActuationParams,
    ) -> Result<Self> {
        Ok(PreContactSystem {
            r: moment_arm_matrix(hand, &params.moment_arm, &pose.theta)?,
            tau_s: DVector::from_vec(hand_spring_torque(hand, params, &pose.theta)?),
            pose_name: pose.name.clone(),
            weight: pose.weight,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreContactResult {
    /// Tendon tensions (N).
    pub t: Vec<f64>,
    /// `‖R t - tau_s‖` (N·m).
    pub q: f64,
}

pub fn precontact_stability_metric(sys: &PreContactSystem) -> Result<PreContactResult> {
    let s = solve_nnls(&sys.r, &sys.tau_s)?;
    Ok(PreContactResult {
        t: s.t.as_slice().to_vec(),
        q: s.residual,
    })
}

#[derive(Clone, Debug)]
pub struct KinematicOptions {
    pub search: SearchOptions,
    /// Search independent finger groups separately. The result is the same
    /// as a joint search, at a fraction of the cost.
    pub decompose: bool,
}

impl Default for KinematicOptions {
    fn default() -> Self {
        KinematicOptions {
            search: SearchOptions::default(),
            decompose: true,
        }
    }
}

pub fn kinematic_optimize(
    hand: &HandKinematics,
    poses: &[GraspSample],
    grid: &ParameterGrid,
    r_star: &BTreeMap<String, f64>,
) -> Result<OptimizationReport> {
    kinematic_optimize_with(hand, poses, grid, r_star, &KinematicOptions::default())
}

/// One independently searched group of fingers.
struct Block {
    fingers: Vec<usize>,
    joints: Vec<usize>,
    grid: ParameterGrid,
    bound: crate::forceopt::BoundGrid,
    /// `R` restricted to the block's joints and tendons, per pose.
    r: Vec<DMatrix<f64>>,
}

impl Block {
    /// Per-pose residual at one combination of the block's parameters.
    fn residuals(
        &self,
        poses: &[&GraspSample],
        hand: &HandKinematics,
        index: u64,
        k: &[f64],
        t0: &[f64],
    ) -> Vec<f64> {
        let combo = self.grid.combo(index);
        let (mut k, mut t0) = (k.to_vec(), t0.to_vec());
        self.bound.apply(&combo, ParamKind::Stiffness, &mut k);
        self.bound.apply(&combo, ParamKind::Preload, &mut t0);
        poses
            .iter()
            .zip(&self.r)
            .map(|(pose, r)| {
                let tau = DVector::from_iterator(
                    self.joints.len(),
                    self.joints
                        .iter()
                        .map(|&j| sensed_torque(hand.spring_sense(j), k[j], pose.theta[j], t0[j])),
                );
                solve_nnls(r, &tau)
                    .map(|s| s.residual)
                    .unwrap_or(f64::INFINITY)
            })
            .collect()
    }
}

/// Enumerates stiffness and preload combinations of `grid` with moment arms
/// fixed at `r_star`, minimizing the weighted pre-contact residual over
/// `poses` (contacts are ignored).
pub fn kinematic_optimize_with(
    hand: &HandKinematics,
    poses: &[GraspSample],
    grid: &ParameterGrid,
    r_star: &BTreeMap<String, f64>,
    options: &KinematicOptions,
) -> Result<OptimizationReport> {
    if poses.is_empty() {
        return Err(Error::InvalidArgument(
            "kinematic optimization needs at least one pose".into(),
        ));
    }
    if !poses.iter().any(GraspSample::is_open) {
        log::warn!(
            "no fully open pose among the kinematic poses; the open hand is not constrained"
        );
    }
    if grid.parameters.is_empty() && grid.fixed.is_empty() {
        return Err(Error::InvalidArgument("kinematic grid is empty".into()));
    }
    for p in grid
        .parameters
        .iter()
        .map(|p| (&p.name, p.kind))
        .chain(grid.fixed.iter().map(|p| (&p.name, p.kind)))
    {
        if p.1 == ParamKind::MomentArm {
            return Err(Error::InvalidArgument(format!(
                "kinematic grid may only set stiffnesses and preloads, found `{}`",
                p.0
            )));
        }
    }
    for pose in poses {
        if pose.theta.len() != hand.n_joints() {
            return Err(Error::Dimension {
                context: "pose joint angles",
                expected: hand.n_joints(),
                actual: pose.theta.len(),
            });
        }
    }
    let whole = grid.bind(hand)?;
    for kind in [ParamKind::Stiffness, ParamKind::Preload] {
        for (j, joint) in hand.joints.iter().enumerate() {
            if !whole.covers(kind, j) {
                return Err(Error::MissingJoint {
                    joint: joint.id.clone(),
                    what: if kind == ParamKind::Stiffness {
                        "kinematic grid (stiffness neither enumerated nor fixed)"
                    } else {
                        "kinematic grid (preload neither enumerated nor fixed)"
                    },
                });
            }
        }
    }
    let a = actuation_matrix(hand, r_star)?;
    let pose_refs: Vec<&GraspSample> = poses.iter().collect();
    let full_r: Vec<DMatrix<f64>> = poses
        .iter()
        .map(|p| moment_arm_matrix(hand, r_star, &p.theta))
        .collect::<Result<_>>()?;

    let groups = if options.decompose {
        hand.independent_finger_blocks()
    } else {
        vec![(0..hand.fingers.len()).collect()]
    };
    let mut blocks = Vec::with_capacity(groups.len());
    for fingers in groups {
        let mut joints: Vec<usize> = fingers
            .iter()
            .flat_map(|&f| hand.fingers[f].joints.clone())
            .collect();
        joints.sort_unstable();
        let tendons: Vec<usize> = (0..hand.n_tendons())
            .filter(|&t| joints.iter().any(|&j| a[(j, t)] != 0.0))
            .collect();
        let ids: Vec<&str> = joints.iter().map(|&j| hand.joints[j].id.as_str()).collect();
        let sub = grid.restricted(|joint| ids.contains(&joint));
        let bound = sub.bind(hand)?;
        let r = full_r
            .iter()
            .map(|r| {
                DMatrix::from_fn(joints.len(), tendons.len(), |i, c| {
                    r[(joints[i], tendons[c])]
                })
            })
            .collect();
        blocks.push(Block {
            fingers,
            joints,
            grid: sub,
            bound,
            r,
        });
    }

    let k_base = whole.base(ParamKind::Stiffness);
    let t0_base = whole.base(ParamKind::Preload);
    let weights: Vec<f64> = poses.iter().map(|p| p.weight).collect();
    let threads = options.search.threads;

    let mut best_combo_by_name: BTreeMap<String, usize> = BTreeMap::new();
    let mut best_sq = vec![0.0; poses.len()];
    let mut baseline_sq = vec![0.0; poses.len()];
    let mut block_reports = Vec::with_capacity(blocks.len());
    let mut trace = options.search.trace.then(Vec::new);
    let mut evaluated = 0u64;

    for (b, block) in blocks.iter().enumerate() {
        let n = block.grid.cardinality();
        let totals: Vec<f64> = with_threads(threads, || {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let qs = block.residuals(&pose_refs, hand, i, &k_base, &t0_base);
                    aggregate_iter(weights.iter().copied().zip(qs))
                })
                .collect()
        })?;
        evaluated += n;
        let best = argmin(&totals) as u64;
        let baseline = block.grid.index_of(&block.grid.baseline_combo());
        for (i, q) in block
            .residuals(&pose_refs, hand, best, &k_base, &t0_base)
            .into_iter()
            .enumerate()
        {
            best_sq[i] += q * q;
        }
        for (i, q) in block
            .residuals(&pose_refs, hand, baseline, &k_base, &t0_base)
            .into_iter()
            .enumerate()
        {
            baseline_sq[i] += q * q;
        }
        let combo = block.grid.combo(best);
        for (p, &c) in block.grid.parameters.iter().zip(&combo) {
            best_combo_by_name.insert(p.name.clone(), c);
        }
        if let Some(rows) = trace.as_mut() {
            rows.extend(totals.iter().enumerate().map(|(i, &q)| TraceRow {
                block: b,
                combo: block.grid.combo(i as u64),
                q,
            }));
        }
        block_reports.push(BlockReport {
            fingers: block
                .fingers
                .iter()
                .map(|&f| hand.fingers[f].name.clone())
                .collect(),
            parameters: block
                .grid
                .parameters
                .iter()
                .map(|p| p.name.clone())
                .collect(),
            combos_evaluated: n,
            best_combo: combo,
            best_q: totals[best as usize],
            baseline_q: totals[baseline as usize],
        });
    }

    let best_combo: Vec<usize> = grid
        .parameters
        .iter()
        .map(|p| best_combo_by_name[&p.name])
        .collect();
    let baseline_combo = grid.baseline_combo();
    let scores = |sq: &[f64]| -> Vec<GraspScore> {
        poses
            .iter()
            .zip(sq)
            .map(|(p, &s)| GraspScore {
                name: p.name.clone(),
                weight: p.weight,
                q: s.sqrt(),
            })
            .collect()
    };
    let per_grasp_q = scores(&best_sq);
    let baseline_per_grasp_q = scores(&baseline_sq);
    let best_q = crate::forceopt::aggregate(&per_grasp_q);
    let baseline_q = crate::forceopt::aggregate(&baseline_per_grasp_q);
    let params = |combo: &[usize]| -> ActuationParams {
        let (mut k, mut t0) = (k_base.clone(), t0_base.clone());
        whole.apply(combo, ParamKind::Stiffness, &mut k);
        whole.apply(combo, ParamKind::Preload, &mut t0);
        let by_id = |v: &[f64]| {
            hand.joints
                .iter()
                .zip(v)
                .map(|(j, &x)| (j.id.clone(), x))
                .collect()
        };
        ActuationParams {
            moment_arm: r_star.clone(),
            stiffness: by_id(&k),
            preload: by_id(&t0),
        }
    };

    Ok(OptimizationReport {
        phase: Phase::Kinematic,
        parameters: grid.parameters.clone(),
        fixed: grid.fixed.clone(),
        best_values: named_values(grid, &best_combo),
        best_params: params(&best_combo),
        best_combo,
        best_q,
        per_grasp_q,
        baseline_values: named_values(grid, &baseline_combo),
        baseline_params: params(&baseline_combo),
        baseline_combo,
        baseline_q,
        baseline_per_grasp_q,
        reduction: reduction(best_q, baseline_q),
        combos_evaluated: evaluated,
        skipped_infeasible: 0,
        blocks: block_reports,
        trace,
    })
}
