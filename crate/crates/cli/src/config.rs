use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Optimizes tendon moment arms, spring stiffnesses and preloads of an
/// underactuated hand against a set of desired grasps.
///
/// Exit codes: 0 ok, 1 internal error, 2 invalid input, 3 force-closure
/// failure, 4 no feasible combination, 5 missing prerequisite.
#[derive(Debug, Parser)]
#[command(name = "synergy", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub config: RunConfig,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check inputs and the force-closure margin of every grasp.
    Validate,
    /// Search tendon moment arms (writes force_report.json).
    ForceOpt {
        #[arg(long)]
        skip_validate: bool,
    },
    /// Search stiffnesses and preloads at fixed moment arms (writes kin_report.json).
    KinOpt,
    /// Compare manifolds with principal components (writes comparison.json and CSVs).
    Analyze {
        /// Also run PCA over all joints of the hand.
        #[arg(long)]
        whole_hand_pca: bool,
    },
    /// validate, force-opt, kin-opt and analyze in sequence.
    All {
        #[arg(long)]
        whole_hand_pca: bool,
    },
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RunConfig {
    /// Hand description (JSON).
    #[arg(long, global = true, default_value = "fixtures/hand.json")]
    pub hand: PathBuf,

    /// Desired grasps and poses (JSON).
    #[arg(long, global = true, default_value = "fixtures/grasps.json")]
    pub grasps: PathBuf,

    /// Moment-arm grid for force-opt.
    #[arg(long, global = true, default_value = "fixtures/force_grid.json")]
    pub force_grid: PathBuf,

    /// Stiffness and preload grid for kin-opt.
    #[arg(long, global = true, default_value = "fixtures/kin_grid.json")]
    pub kin_grid: PathBuf,

    /// Directory for reports; created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Record every evaluated combination and write it as CSV.
    #[arg(long, global = true)]
    pub trace: bool,

    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "SYNERGY_THREADS", default_value_t = 0)]
    #[serde(skip)]
    pub threads: usize,

    /// Weight of the open pose in the kinematic objective. Overrides the
    /// weight in the grasp file; an open pose is added when none is given.
    #[arg(long, global = true, value_parser = positive_f64)]
    pub open_pose_weight: Option<f64>,

    /// QP convergence tolerance.
    #[arg(long, global = true, default_value_t = 1e-6, value_parser = tolerance)]
    pub qp_tol: f64,

    /// Friction-pyramid edges for contacts that do not set their own.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u16).range(3..=64))]
    pub edges: u16,

    /// Moment arms for kin-opt as `joint=mm` pairs, instead of reading
    /// force_report.json.
    #[arg(long, global = true, value_delimiter = ',', value_parser = joint_value)]
    pub r_star_mm: Vec<(String, f64)>,
}

impl RunConfig {
    pub fn r_star_m(&self) -> Option<BTreeMap<String, f64>> {
        (!self.r_star_mm.is_empty()).then(|| {
            self.r_star_mm
                .iter()
                .map(|(j, v)| (j.clone(), synergy::units::mm_to_m(*v)))
                .collect()
        })
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn tolerance(s: &str) -> Result<f64, String> {
    let v = positive_f64(s)?;
    if v > 1e-2 {
        return Err(format!("must be at most 1e-2, got {v}"));
    }
    Ok(v)
}

fn joint_value(s: &str) -> Result<(String, f64), String> {
    let (joint, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected joint=mm, got `{s}`"))?;
    Ok((joint.trim().to_string(), positive_f64(value.trim())?))
}
