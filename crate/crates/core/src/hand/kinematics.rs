use nalgebra::{DMatrix, Isometry3, Point3, Unit, UnitQuaternion, Vector3};

use super::{HandKinematics, PALM_LINK};
use crate::error::{Error, Result};
use crate::grasp::{contact_frame, Contact};

/// World poses of every joint frame (after the joint rotation) at one
/// configuration.
#[derive(Clone, Debug)]
pub struct HandPose {
    pub joint_frames: Vec<Isometry3<f64>>,
    /// Fingertip positions in world coordinates, per finger.
    pub tips: Vec<Option<Point3<f64>>>,
    /// Set when any angle lies outside its joint limits.
    pub out_of_limits: bool,
}

impl HandPose {
    pub fn joint_origin(&self, j: usize) -> Point3<f64> {
        Point3::from(self.joint_frames[j].translation.vector)
    }

    /// Rotation axis of joint `j` in world coordinates.
    pub fn joint_axis(&self, hand: &HandKinematics, j: usize) -> Vector3<f64> {
        self.joint_frames[j].rotation * hand.joints[j].axis
    }
}

fn check_angles(hand: &HandKinematics, theta: &[f64]) -> Result<()> {
    if theta.len() != hand.n_joints() {
        return Err(Error::Dimension {
            context: "joint-angle vector",
            expected: hand.n_joints(),
            actual: theta.len(),
        });
    }
    Ok(())
}

fn joint_motion(hand: &HandKinematics, j: usize, angle: f64) -> Isometry3<f64> {
    let joint = &hand.joints[j];
    let spin = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(joint.axis), angle);
    joint.offset * Isometry3::from_parts(Default::default(), spin)
}

/// Composes joint frames root-to-tip for every finger.
pub fn forward_kinematics(hand: &HandKinematics, theta: &[f64]) -> Result<HandPose> {
    check_angles(hand, theta)?;
    let mut frames = vec![Isometry3::identity(); hand.n_joints()];
    let mut tips = Vec::with_capacity(hand.fingers.len());
    for finger in &hand.fingers {
        let mut current = hand.palm;
        for &j in &finger.joints {
            current *= joint_motion(hand, j, theta[j]);
            frames[j] = current;
        }
        tips.push(finger.tip.map(|tip| current * Point3::from(tip)));
    }
    let out_of_limits = hand
        .joints
        .iter()
        .zip(theta)
        .any(|(joint, &a)| a < joint.limits.0 || a > joint.limits.1);
    Ok(HandPose {
        joint_frames: frames,
        tips,
        out_of_limits,
    })
}

/// World pose of a single joint frame, composed from the palm without
/// touching any other finger.
pub fn joint_pose(hand: &HandKinematics, theta: &[f64], j: usize) -> Result<Isometry3<f64>> {
    check_angles(hand, theta)?;
    let finger = &hand.fingers[hand.finger_of(j)];
    let mut current = hand.palm;
    for &k in &finger.joints {
        current *= joint_motion(hand, k, theta[k]);
        if k == j {
            break;
        }
    }
    Ok(current)
}

/// Resolves a contact's link id to the joint that drives it. `None` is the palm.
pub(crate) fn link_joint(hand: &HandKinematics, link: &str) -> Result<Option<usize>> {
    if link == PALM_LINK {
        return Ok(None);
    }
    hand.joint_index(link)
        .map(Some)
        .ok_or_else(|| Error::Linkage {
            kind: "link",
            id: link.to_string(),
            referrer: "contact".to_string(),
        })
}

/// Contact Jacobian, `3 n_c x n_q`.
///
/// Row block `k` holds the contact point's linear velocity in the contact
/// frame (normal, tangent1, tangent2) per unit joint rate. Only the joints
/// from the finger root up to the contact's link contribute.
pub fn contact_jacobian(
    hand: &HandKinematics,
    theta: &[f64],
    contacts: &[Contact],
) -> Result<DMatrix<f64>> {
    let pose = forward_kinematics(hand, theta)?;
    contact_jacobian_at(hand, &pose, contacts)
}

pub(crate) fn contact_jacobian_at(
    hand: &HandKinematics,
    pose: &HandPose,
    contacts: &[Contact],
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(3 * contacts.len(), hand.n_joints());
    for (k, contact) in contacts.iter().enumerate() {
        let Some(link) = link_joint(hand, &contact.link_id)? else {
            continue;
        };
        let frame = contact_frame(hand, pose, contact)?;
        let point = Point3::from(contact.position);
        let chain = &hand.fingers[hand.finger_of(link)].joints;
        for &j in chain {
            let velocity = pose
                .joint_axis(hand, j)
                .cross(&(point - pose.joint_origin(j)));
            let local = frame.transpose() * velocity;
            for r in 0..3 {
                jac[(3 * k + r, j)] = local[r];
            }
            if j == link {
                break;
            }
        }
    }
    Ok(jac)
}
