use std::io::Write;

use serde::{Deserialize, Serialize};

use super::manifold::{derive_mrm, mrm_distance, MRManifold};
use super::pca::{pca_grasps, PCAResult};
use crate::error::{Error, Result};
use crate::forceopt::{OptimizationReport, Phase};
use crate::grasp::GraspSample;
use crate::hand::{ActuationParams, HandKinematics};

#[derive(Clone, Debug, Default)]
pub struct ComparisonOptions {
    /// Also run PCA over every joint of the hand.
    pub whole_hand_pca: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerComparison {
    pub finger: String,
    pub joints: Vec<String>,
    pub manifold: Option<MRManifold>,
    /// Why there is no manifold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold_error: Option<String>,
    /// Over the non-open poses.
    pub pca: Option<PCAResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_error: Option<String>,
    /// |cos| of the angle between the manifold direction and the first
    /// principal component.
    pub alignment: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDistance {
    pub pose: String,
    pub finger: String,
    /// `null` when the finger has no manifold.
    pub distance_rad: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseComparison {
    pub phase: Phase,
    #[serde(with = "crate::serde_finite")]
    pub baseline_q: f64,
    #[serde(with = "crate::serde_finite")]
    pub optimized_q: f64,
    /// `100 (1 - optimized / baseline)`.
    pub reduction_percent: Option<f64>,
}

impl PhaseComparison {
    pub fn from_report(report: &OptimizationReport) -> Self {
        PhaseComparison {
            phase: report.phase,
            baseline_q: report.baseline_q,
            optimized_q: report.best_q,
            reduction_percent: reduction_percent(report.best_q, report.baseline_q),
        }
    }
}

pub fn reduction_percent(optimized: f64, baseline: f64) -> Option<f64> {
    (baseline.is_finite() && baseline > 0.0 && optimized.is_finite())
        .then(|| 100.0 * (1.0 - optimized / baseline))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fingers: Vec<FingerComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whole_hand_pca: Option<PCAResult>,
    /// One row per pose and finger, poses outermost.
    pub distances: Vec<PoseDistance>,
    pub phases: Vec<PhaseComparison>,
}

/// Manifolds under `params` against the principal axes of `poses`, plus the
/// baseline-vs-optimized objective of every given phase report.
pub fn build_comparison_report(
    hand: &HandKinematics,
    params: &ActuationParams,
    poses: &[GraspSample],
    reports: &[&OptimizationReport],
    options: &ComparisonOptions,
) -> Result<ComparisonReport> {
    for pose in poses {
        if pose.theta.len() != hand.n_joints() {
            return Err(Error::Dimension {
                context: "pose joint angles",
                expected: hand.n_joints(),
                actual: pose.theta.len(),
            });
        }
    }
    let desired: Vec<GraspSample> = poses.iter().filter(|p| !p.is_open()).cloned().collect();

    let mut fingers = Vec::with_capacity(hand.fingers.len());
    for finger in &hand.fingers {
        let (manifold, manifold_error) = match derive_mrm(hand, params, &finger.name) {
            Ok(m) => (Some(m), None),
            Err(e @ Error::UnsupportedManifold { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let (pca, pca_error) = match pca_grasps(&desired, &finger.joints) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let alignment = match (&manifold, &pca) {
            (Some(m), Some(p)) if !p.degenerate => {
                let norm = m.direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                let dot: f64 = m
                    .direction
                    .iter()
                    .zip(&p.components[0])
                    .map(|(d, c)| d * c)
                    .sum();
                (norm > 0.0).then(|| (dot / norm).abs())
            }
            _ => None,
        };
        fingers.push(FingerComparison {
            finger: finger.name.clone(),
            joints: finger
                .joints
                .iter()
                .map(|&j| hand.joints[j].id.clone())
                .collect(),
            manifold,
            manifold_error,
            pca,
            pca_error,
            alignment,
        });
    }

    let mut distances = Vec::with_capacity(poses.len() * fingers.len());
    for pose in poses {
        for (finger, cmp) in hand.fingers.iter().zip(&fingers) {
            let distance_rad = match &cmp.manifold {
                Some(m) => {
                    let theta: Vec<f64> = finger.joints.iter().map(|&j| pose.theta[j]).collect();
                    Some(mrm_distance(m, &theta)?)
                }
                None => None,
            };
            distances.push(PoseDistance {
                pose: pose.name.clone(),
                finger: finger.name.clone(),
                distance_rad,
            });
        }
    }

    let whole_hand_pca = if options.whole_hand_pca {
        let all: Vec<usize> = (0..hand.n_joints()).collect();
        Some(pca_grasps(&desired, &all)?)
    } else {
        None
    };

    Ok(ComparisonReport {
        fingers,
        whole_hand_pca,
        distances,
        phases: reports
            .iter()
            .map(|r| PhaseComparison::from_report(r))
            .collect(),
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per finger joint: manifold line and first principal axis.
    pub fn write_mrm_vs_pca_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "finger",
            "joint",
            "mrm_direction_rad_per_n",
            "mrm_offset_rad",
            "mrm_unit_direction",
            "pca_mean_rad",
            "pca_component_1",
        ])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for f in &self.fingers {
            let norm = f
                .manifold
                .as_ref()
                .map(|m| m.direction.iter().map(|d| d * d).sum::<f64>().sqrt());
            for (i, joint) in f.joints.iter().enumerate() {
                let m = f.manifold.as_ref();
                let p = f.pca.as_ref();
                w.write_record([
                    f.finger.clone(),
                    joint.clone(),
                    cell(m.map(|m| m.direction[i])),
                    cell(m.map(|m| m.offset[i])),
                    cell(
                        m.zip(norm)
                            .filter(|(_, n)| *n > 0.0)
                            .map(|(m, n)| m.direction[i] / n),
                    ),
                    cell(p.map(|p| p.mean[i])),
                    cell(p.map(|p| p.components[0][i])),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_distances_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pose", "finger", "distance_rad"])?;
        for d in &self.distances {
            w.write_record([
                d.pose.clone(),
                d.finger.clone(),
                d.distance_rad.map(|x| x.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
