//! JSON grasp sets. Positions are in meters, angles in radians.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{Contact, GraspSample, DEFAULT_EDGES};
use crate::error::{Error, Result};
use crate::hand::HandKinematics;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspSetDocument {
    pub grasps: Vec<GraspDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspDocument {
    pub name: String,
    pub theta_rad: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default)]
    pub object_pose: PoseDocument,
    #[serde(default)]
    pub contacts: Vec<ContactDocument>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub open: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDocument {
    #[serde(default)]
    pub translation_m: [f64; 3],
    #[serde(default)]
    pub rpy_rad: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactDocument {
    pub link: String,
    pub position_m: [f64; 3],
    pub normal: [f64; 3],
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
}

impl GraspSetDocument {
    /// Converts and checks every grasp against `hand`. Contacts without an
    /// explicit edge count get `default_edges`.
    pub fn into_samples(
        self,
        hand: &HandKinematics,
        default_edges: Option<usize>,
    ) -> Result<Vec<GraspSample>> {
        let edges = default_edges.unwrap_or(DEFAULT_EDGES);
        self.grasps
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.into_sample(hand, edges, &format!("grasps[{i}]")))
            .collect()
    }
}

impl GraspDocument {
    fn into_sample(
        self,
        hand: &HandKinematics,
        default_edges: usize,
        field: &str,
    ) -> Result<GraspSample> {
        if self.theta_rad.len() != hand.n_joints() {
            return Err(Error::schema(
                format!("{field}.theta_rad"),
                format!(
                    "expected {} joint angles, got {}",
                    hand.n_joints(),
                    self.theta_rad.len()
                ),
            ));
        }
        let weight = self.weight.unwrap_or(1.0);
        if !(weight >= 0.0) {
            return Err(Error::schema(
                format!("{field}.weight"),
                "weight must be >= 0",
            ));
        }
        let mut contacts = Vec::with_capacity(self.contacts.len());
        for (k, c) in self.contacts.into_iter().enumerate() {
            let cf = format!("{field}.contacts[{k}]");
            if c.link != crate::hand::PALM_LINK && hand.joint_index(&c.link).is_none() {
                return Err(Error::Linkage {
                    kind: "link",
                    id: c.link,
                    referrer: cf,
                });
            }
            let normal = Vector3::from(c.normal);
            if (normal.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::schema(
                    format!("{cf}.normal"),
                    format!("normal must be unit length, got norm {}", normal.norm()),
                ));
            }
            if !(c.mu >= 0.0) {
                return Err(Error::schema(
                    format!("{cf}.mu"),
                    "friction coefficient must be >= 0",
                ));
            }
            let edges = c.edges.unwrap_or(default_edges);
            if c.mu > 0.0 && edges < 3 {
                return Err(Error::schema(
                    format!("{cf}.edges"),
                    "need at least 3 pyramid edges",
                ));
            }
            contacts.push(Contact {
                link_id: c.link,
                position: Vector3::from(c.position_m),
                normal,
                mu: c.mu,
                edges,
            });
        }
        Ok(GraspSample {
            name: self.name,
            theta: self.theta_rad,
            object_pose: self.object_pose.to_isometry(),
            contacts,
            weight,
            open: self.open,
        })
    }

    pub fn from_sample(sample: &GraspSample) -> Self {
        let t = sample.object_pose.translation.vector;
        let (r, p, y) = sample.object_pose.rotation.euler_angles();
        GraspDocument {
            name: sample.name.clone(),
            theta_rad: sample.theta.clone(),
            weight: Some(sample.weight),
            object_pose: PoseDocument {
                translation_m: [t.x, t.y, t.z],
                rpy_rad: [r, p, y],
            },
            contacts: sample
                .contacts
                .iter()
                .map(|c| ContactDocument {
                    link: c.link_id.clone(),
                    position_m: [c.position.x, c.position.y, c.position.z],
                    normal: [c.normal.x, c.normal.y, c.normal.z],
                    mu: c.mu,
                    edges: Some(c.edges),
                })
                .collect(),
            open: sample.open,
        }
    }
}

impl PoseDocument {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.translation_m;
        let [r, p, yaw] = self.rpy_rad;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_euler_angles(r, p, yaw),
        )
    }
}
