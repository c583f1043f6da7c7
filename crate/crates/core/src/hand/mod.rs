//! Hand kinematics: serial-chain fingers, revolute joints, and tendon routing.
//!
//! Joints are stored in document order (fingers concatenated), and every
//! joint-indexed vector in the crate (angles, torques, rows of the actuation
//! matrix) follows that order.

mod kinematics;
mod schema;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kinematics::{contact_jacobian, forward_kinematics, joint_pose, HandPose};
pub(crate) use kinematics::{contact_jacobian_at, link_joint};
pub use schema::{
    CrossingDocument, FingerDocument, HandDocument, JointDocument, OffsetDocument, TendonDocument,
};

/// Identifier of the palm link; contacts on it have all-zero Jacobian rows.
pub const PALM_LINK: &str = "palm";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Roll,
    Pitch,
}

/// A 1-DOF revolute joint.
///
/// `axis` is expressed in the joint frame, which is the parent frame moved by
/// `offset`. The link driven by the joint shares the joint's id.
#[derive(Clone, Debug)]
pub struct Joint {
    pub id: String,
    pub axis_kind: AxisKind,
    pub axis: Vector3<f64>,
    pub offset: Isometry3<f64>,
    pub limits: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct Finger {
    pub name: String,
    /// Indices into [`HandKinematics::joints`], root first.
    pub joints: Vec<usize>,
    /// Fingertip point in the frame of the last joint, if known.
    pub tip: Option<Vector3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub joint: usize,
    /// Moment-arm sense: +1 for flexion, -1 for the opposite direction.
    pub sign: f64,
}

#[derive(Clone, Debug)]
pub struct TendonRoute {
    pub id: String,
    pub crossings: Vec<Crossing>,
}

#[derive(Clone, Debug)]
pub struct HandKinematics {
    pub joints: Vec<Joint>,
    pub fingers: Vec<Finger>,
    pub palm: Isometry3<f64>,
    pub tendons: Vec<TendonRoute>,
    /// Groups of joint indices that must carry identical actuation parameters.
    pub mirror_groups: Vec<Vec<usize>>,
    joint_finger: Vec<usize>,
    index: HashMap<String, usize>,
}

impl HandKinematics {
    /// Links fingers, joints and tendons and checks every structural invariant.
    pub fn new(
        fingers: Vec<(String, Vec<Joint>, Option<Vector3<f64>>)>,
        palm: Isometry3<f64>,
        tendons: Vec<(String, Vec<(String, f64)>)>,
        mirror_groups: Vec<Vec<String>>,
    ) -> Result<Self> {
        let mut joints = Vec::new();
        let mut finger_list = Vec::new();
        let mut joint_finger = Vec::new();
        let mut index = HashMap::new();

        for (f, (name, chain, tip)) in fingers.into_iter().enumerate() {
            if chain.is_empty() {
                return Err(Error::schema(
                    format!("fingers[{f}].joints"),
                    "a finger needs at least one joint",
                ));
            }
            let mut members = Vec::with_capacity(chain.len());
            for (j, joint) in chain.into_iter().enumerate() {
                let field = format!("fingers[{f}].joints[{j}]");
                validate_joint(&joint, &field)?;
                if joint.id == PALM_LINK || index.contains_key(&joint.id) {
                    return Err(Error::schema(
                        format!("{field}.id"),
                        format!("duplicate or reserved joint id `{}`", joint.id),
                    ));
                }
                index.insert(joint.id.clone(), joints.len());
                members.push(joints.len());
                joint_finger.push(f);
                joints.push(joint);
            }
            finger_list.push(Finger {
                name,
                joints: members,
                tip,
            });
        }

        let mut routes = Vec::with_capacity(tendons.len());
        for (t, (id, crossings)) in tendons.into_iter().enumerate() {
            if crossings.is_empty() {
                return Err(Error::schema(
                    format!("tendons[{t}].crossings"),
                    "a tendon must cross at least one joint",
                ));
            }
            let mut linked: Vec<Crossing> = Vec::with_capacity(crossings.len());
            for (c, (joint_id, sign)) in crossings.into_iter().enumerate() {
                let joint = *index.get(&joint_id).ok_or_else(|| Error::Linkage {
                    kind: "joint",
                    id: joint_id.clone(),
                    referrer: format!("tendon `{id}`"),
                })?;
                if sign != 1.0 && sign != -1.0 {
                    return Err(Error::schema(
                        format!("tendons[{t}].crossings[{c}].sign"),
                        format!("sign must be +1 or -1, got {sign}"),
                    ));
                }
                if linked.iter().any(|x| x.joint == joint) {
                    return Err(Error::schema(
                        format!("tendons[{t}].crossings[{c}].joint"),
                        format!("joint `{joint_id}` crossed twice by tendon `{id}`"),
                    ));
                }
                linked.push(Crossing { joint, sign });
            }
            routes.push(TendonRoute {
                id,
                crossings: linked,
            });
        }

        let mut groups = Vec::with_capacity(mirror_groups.len());
        let mut grouped = vec![false; joints.len()];
        for (g, group) in mirror_groups.into_iter().enumerate() {
            let mut members = Vec::with_capacity(group.len());
            for joint_id in group {
                let j = *index.get(&joint_id).ok_or_else(|| Error::Linkage {
                    kind: "joint",
                    id: joint_id.clone(),
                    referrer: format!("mirror_groups[{g}]"),
                })?;
                if grouped[j] {
                    return Err(Error::schema(
                        format!("mirror_groups[{g}]"),
                        format!("joint `{joint_id}` belongs to more than one mirror group"),
                    ));
                }
                grouped[j] = true;
                members.push(j);
            }
            groups.push(members);
        }

        Ok(HandKinematics {
            joints,
            fingers: finger_list,
            palm,
            tendons: routes,
            mirror_groups: groups,
            joint_finger,
            index,
        })
    }

    /// Parses and links a hand description document (JSON).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HandDocument = serde_json::from_str(text)?;
        doc.into_hand()
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn n_tendons(&self) -> usize {
        self.tendons.len()
    }

    pub fn joint_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn joint_ids(&self) -> impl Iterator<Item = &str> {
        self.joints.iter().map(|j| j.id.as_str())
    }

    /// Finger that owns joint `j`.
    pub fn finger_of(&self, j: usize) -> usize {
        self.joint_finger[j]
    }

    pub fn finger_index(&self, name: &str) -> Option<usize> {
        self.fingers.iter().position(|f| f.name == name)
    }

    /// Mirror group containing joint `j`, or just `[j]`.
    pub fn mirror_group_of(&self, j: usize) -> Vec<usize> {
        self.mirror_groups
            .iter()
            .find(|g| g.contains(&j))
            .cloned()
            .unwrap_or_else(|| vec![j])
    }

    /// Whether joint `j` is crossed by tendon `t`, and with what sign.
    pub fn crossing_sign(&self, j: usize, t: usize) -> Option<f64> {
        self.tendons[t]
            .crossings
            .iter()
            .find(|c| c.joint == j)
            .map(|c| c.sign)
    }

    /// Spring sense of a joint: the common sign of its tendon crossings, or
    /// +1 when the joint is uncrossed or crossed with mixed signs.
    ///
    /// A mirrored joint (crossed with sign -1) carries a mirrored spring, so
    /// its restoring torque is `-K (-theta + theta0)`.
    pub fn spring_sense(&self, j: usize) -> f64 {
        let mut signs = self
            .tendons
            .iter()
            .filter_map(|t| t.crossings.iter().find(|c| c.joint == j).map(|c| c.sign));
        match signs.next() {
            Some(first) if signs.all(|s| s == first) => first,
            _ => 1.0,
        }
    }

    /// Groups of fingers that share no tendon and no mirror group with any
    /// finger outside the group. Each group's free motion is independent.
    pub fn independent_finger_blocks(&self) -> Vec<Vec<usize>> {
        let n = self.fingers.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        };
        for t in &self.tendons {
            for w in t.crossings.windows(2) {
                union(
                    &mut parent,
                    self.finger_of(w[0].joint),
                    self.finger_of(w[1].joint),
                );
            }
        }
        for g in &self.mirror_groups {
            for w in g.windows(2) {
                union(&mut parent, self.finger_of(w[0]), self.finger_of(w[1]));
            }
        }
        let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in 0..n {
            let root = find(&mut parent, f);
            blocks.entry(root).or_default().push(f);
        }
        blocks.into_values().collect()
    }
}

fn validate_joint(joint: &Joint, field: &str) -> Result<()> {
    let norm = joint.axis.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::schema(
            format!("{field}.axis"),
            format!("rotation axis must have unit norm, got {norm}"),
        ));
    }
    if !(joint.limits.0 < joint.limits.1) {
        return Err(Error::schema(
            format!("{field}.limits_rad"),
            format!(
                "lower limit {} must be below upper limit {}",
                joint.limits.0, joint.limits.1
            ),
        ));
    }
    Ok(())
}

/// Decision variables of the design problem, keyed by joint id, in SI units:
/// moment arms in meters, stiffnesses in N·m/rad, preload angles in radians.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActuationParams {
    pub moment_arm: BTreeMap<String, f64>,
    pub stiffness: BTreeMap<String, f64>,
    pub preload: BTreeMap<String, f64>,
}

impl ActuationParams {
    /// Checks positivity and mirror-group equality for every entry present.
    pub fn validate(&self, hand: &HandKinematics) -> Result<()> {
        for (what, map) in [
            ("moment_arm", &self.moment_arm),
            ("stiffness", &self.stiffness),
        ] {
            for (id, &v) in map {
                if !(v > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "{what} for joint `{id}` must be positive, got {v}"
                    )));
                }
            }
        }
        for (what, map) in [
            ("moment_arm", &self.moment_arm),
            ("stiffness", &self.stiffness),
            ("preload", &self.preload),
        ] {
            for id in map.keys() {
                if hand.joint_index(id).is_none() {
                    return Err(Error::Linkage {
                        kind: "joint",
                        id: id.clone(),
                        referrer: format!("actuation parameter `{what}`"),
                    });
                }
            }
            for group in &hand.mirror_groups {
                let values: Vec<Option<f64>> = group
                    .iter()
                    .map(|&j| map.get(&hand.joints[j].id).copied())
                    .collect();
                if values.windows(2).any(|w| w[0] != w[1]) {
                    let ids: Vec<&str> =
                        group.iter().map(|&j| hand.joints[j].id.as_str()).collect();
                    return Err(Error::InvalidArgument(format!(
                        "{what} differs within mirror group [{}]",
                        ids.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves a per-joint map into a dense vector in hand joint order.
    pub fn dense(
        hand: &HandKinematics,
        map: &BTreeMap<String, f64>,
        what: &'static str,
    ) -> Result<Vec<f64>> {
        hand.joints
            .iter()
            .map(|j| {
                map.get(&j.id).copied().ok_or_else(|| Error::MissingJoint {
                    joint: j.id.clone(),
                    what,
                })
            })
            .collect()
    }
}
