//! Contact, grasp and actuation matrices for the grasping-phase analysis.
//!
//! A contact force is parameterized by nonnegative amplitudes along the edges
//! of a linearized friction pyramid, `c_k = D_k beta_k`. Stacking contacts gives
//! the block-diagonal `D`; together with the contact Jacobian `J`, the grasp
//! map `G` and the actuation matrix `A` this is everything the stability QP
//! needs.

mod schema;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Isometry3, Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{self, HandKinematics, HandPose};

pub use schema::{ContactDocument, GraspDocument, GraspSetDocument, PoseDocument};

/// Default number of friction-pyramid edges.
pub const DEFAULT_EDGES: usize = 8;

/// Point contact with friction. The normal points into the object, i.e. it
/// is the direction in which the finger pushes.
#[derive(Clone, Debug, PartialEq)]
pub struct Contact {
    pub link_id: String,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub mu: f64,
    pub edges: usize,
}

impl Contact {
    pub fn new(
        link_id: impl Into<String>,
        position: Vector3<f64>,
        normal: Vector3<f64>,
        mu: f64,
    ) -> Self {
        Contact {
            link_id: link_id.into(),
            position,
            normal,
            mu,
            edges: DEFAULT_EDGES,
        }
    }

    pub fn with_edges(mut self, edges: usize) -> Self {
        self.edges = edges;
        self
    }

    fn validate(&self) -> Result<()> {
        let norm = self.normal.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "contact on `{}`: normal must be unit length, got norm {norm}",
                self.link_id
            )));
        }
        if !(self.mu >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "contact on `{}`: friction coefficient must be >= 0, got {}",
                self.link_id, self.mu
            )));
        }
        if self.mu > 0.0 && self.edges < 3 {
            return Err(Error::InvalidArgument(format!(
                "contact on `{}`: a friction pyramid needs at least 3 edges, got {}",
                self.link_id, self.edges
            )));
        }
        Ok(())
    }
}

/// One desired grasp: a hand configuration plus the object contacts made in it.
#[derive(Clone, Debug)]
pub struct GraspSample {
    pub name: String,
    pub theta: Vec<f64>,
    pub object_pose: Isometry3<f64>,
    pub contacts: Vec<Contact>,
    pub weight: f64,
    /// Marks the fully open configuration used by the kinematic phase.
    pub open: bool,
}

impl GraspSample {
    /// A contact-free pose.
    pub fn pose(name: impl Into<String>, theta: Vec<f64>) -> Self {
        GraspSample {
            name: name.into(),
            theta,
            object_pose: Isometry3::identity(),
            contacts: Vec::new(),
            weight: 1.0,
            open: false,
        }
    }

    /// Flagged open, or every joint angle is zero.
    pub fn is_open(&self) -> bool {
        self.open || self.theta.iter().all(|&a| a == 0.0)
    }
}

/// Friction-pyramid edges of one contact, in contact-frame coordinates
/// (normal, tangent1, tangent2).
#[derive(Clone, Debug)]
pub struct ContactBasis {
    pub d: DMatrix<f64>,
    /// Friction rows; empty for the edge parameterization, where `beta >= 0`
    /// already keeps the force inside the pyramid.
    pub f: DMatrix<f64>,
}

pub fn build_contact_basis(contact: &Contact) -> Result<ContactBasis> {
    contact.validate()?;
    if contact.mu == 0.0 {
        return Ok(ContactBasis {
            d: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            f: DMatrix::zeros(0, 1),
        });
    }
    let m = contact.edges;
    let mut d = DMatrix::zeros(3, m);
    for j in 0..m {
        let phi = 2.0 * PI * j as f64 / m as f64;
        let edge = Vector3::new(1.0, contact.mu * phi.cos(), contact.mu * phi.sin()).normalize();
        d.set_column(j, &edge);
    }
    Ok(ContactBasis {
        d,
        f: DMatrix::zeros(0, m),
    })
}

/// Orthonormal contact frame with columns (normal, tangent1, tangent2).
///
/// Tangent1 is the projection of the contacted link's long axis onto the
/// tangent plane; when that projection degenerates (axis within 1e-6 rad of
/// the normal) the world x axis, then the world y axis, is projected instead.
pub fn contact_frame(
    hand: &HandKinematics,
    pose: &HandPose,
    contact: &Contact,
) -> Result<Matrix3<f64>> {
    let n = contact.normal.normalize();
    let link = hand::link_joint(hand, &contact.link_id)?;
    let mut candidates: Vec<Vector3<f64>> = Vec::with_capacity(3);
    if let Some(j) = link {
        candidates.push(link_axis(hand, pose, j, &contact.position));
    }
    candidates.push(Vector3::x());
    candidates.push(Vector3::y());

    let min_sin = 1e-6f64.sin();
    for axis in candidates {
        let len = axis.norm();
        if len == 0.0 {
            continue;
        }
        let tangent = axis - n * n.dot(&axis);
        if tangent.norm() > min_sin * len {
            let t1 = tangent.normalize();
            let t2 = n.cross(&t1);
            return Ok(Matrix3::from_columns(&[n, t1, t2]));
        }
    }
    unreachable!("x and y cannot both be parallel to a unit normal")
}

fn link_axis(
    hand: &HandKinematics,
    pose: &HandPose,
    j: usize,
    contact: &Vector3<f64>,
) -> Vector3<f64> {
    let f = hand.finger_of(j);
    let chain = &hand.fingers[f].joints;
    let origin = pose.joint_origin(j);
    let pos = chain
        .iter()
        .position(|&k| k == j)
        .expect("joint belongs to its finger");
    let distal = match chain.get(pos + 1) {
        Some(&next) => Some(pose.joint_origin(next)),
        None => pose.tips[f],
    };
    match distal {
        Some(p) if (p - origin).norm() > 0.0 => p - origin,
        _ => Point3::from(*contact) - origin,
    }
}

/// Grasp map `G` (6 x 3 n_c): contact-frame forces to the object wrench about
/// the object frame origin.
pub fn grasp_map(
    frames: &[Matrix3<f64>],
    contacts: &[Contact],
    object_pose: &Isometry3<f64>,
) -> Result<DMatrix<f64>> {
    if contacts.is_empty() {
        return Err(Error::InvalidArgument(
            "grasp map needs at least one contact".into(),
        ));
    }
    if frames.len() != contacts.len() {
        return Err(Error::Dimension {
            context: "contact frames",
            expected: contacts.len(),
            actual: frames.len(),
        });
    }
    let origin = object_pose.translation.vector;
    let mut g = DMatrix::zeros(6, 3 * contacts.len());
    for (k, (frame, contact)) in frames.iter().zip(contacts).enumerate() {
        let lever = (contact.position - origin).cross_matrix();
        let moment = lever * frame;
        g.view_mut((0, 3 * k), (3, 3)).copy_from(frame);
        g.view_mut((3, 3 * k), (3, 3)).copy_from(&moment);
    }
    Ok(g)
}

/// Actuation matrix `A` (n_q x n_t): `A[j, t] = sign * r_j` where tendon `t`
/// crosses joint `j`.
pub fn actuation_matrix(
    hand: &HandKinematics,
    moment_arm: &BTreeMap<String, f64>,
) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(hand.n_joints(), hand.n_tendons());
    for (t, tendon) in hand.tendons.iter().enumerate() {
        for c in &tendon.crossings {
            let id = &hand.joints[c.joint].id;
            let r = *moment_arm.get(id).ok_or_else(|| Error::MissingJoint {
                joint: id.clone(),
                what: "moment arms",
            })?;
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "moment arm for joint `{id}` must be positive, got {r}"
                )));
            }
            a[(c.joint, t)] = c.sign * r;
        }
    }
    Ok(a)
}

/// Actuation matrix from a dense per-joint moment-arm vector. Entries for
/// uncrossed joints are ignored.
pub fn actuation_matrix_dense(hand: &HandKinematics, moment_arm: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(hand.n_joints(), hand.n_tendons());
    for (t, tendon) in hand.tendons.iter().enumerate() {
        for c in &tendon.crossings {
            a[(c.joint, t)] = c.sign * moment_arm[c.joint];
        }
    }
    a
}

/// Everything the grasping-phase QP needs for one grasp at one set of moment arms.
#[derive(Clone, Debug)]
pub struct GraspMatrices {
    pub j: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub n_c: usize,
    pub n_q: usize,
    pub n_t: usize,
}

impl GraspMatrices {
    pub fn n_edges(&self) -> usize {
        self.d.ncols()
    }
}

/// Contact-dependent part of a grasp system: everything except `A`.
#[derive(Clone, Debug)]
pub struct ContactSystem {
    pub j: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub frames: Vec<Matrix3<f64>>,
}

/// Builds `J`, `G`, `D`, `F` for a grasp. They do not depend on the moment arms.
pub fn assemble_contact_system(
    hand: &HandKinematics,
    grasp: &GraspSample,
) -> Result<ContactSystem> {
    if grasp.contacts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "grasp `{}` has no contacts",
            grasp.name
        )));
    }
    let pose = hand::forward_kinematics(hand, &grasp.theta)?;
    let bases = grasp
        .contacts
        .iter()
        .map(build_contact_basis)
        .collect::<Result<Vec<_>>>()?;
    let frames = grasp
        .contacts
        .iter()
        .map(|c| contact_frame(hand, &pose, c))
        .collect::<Result<Vec<_>>>()?;
    let j = hand::contact_jacobian_at(hand, &pose, &grasp.contacts)?;
    let g = grasp_map(&frames, &grasp.contacts, &grasp.object_pose)?;

    let n_edges: usize = bases.iter().map(|b| b.d.ncols()).sum();
    let n_rows: usize = bases.iter().map(|b| b.f.nrows()).sum();
    let mut d = DMatrix::zeros(3 * bases.len(), n_edges);
    let mut f = DMatrix::zeros(n_rows, n_edges);
    let (mut col, mut row) = (0, 0);
    for (k, basis) in bases.iter().enumerate() {
        let m = basis.d.ncols();
        d.view_mut((3 * k, col), (3, m)).copy_from(&basis.d);
        f.view_mut((row, col), (basis.f.nrows(), m))
            .copy_from(&basis.f);
        col += m;
        row += basis.f.nrows();
    }
    Ok(ContactSystem { j, g, d, f, frames })
}

pub fn assemble_grasp_system(
    hand: &HandKinematics,
    grasp: &GraspSample,
    moment_arm: &BTreeMap<String, f64>,
) -> Result<GraspMatrices> {
    let contacts = assemble_contact_system(hand, grasp)?;
    let a = actuation_matrix(hand, moment_arm)?;
    Ok(GraspMatrices {
        n_c: grasp.contacts.len(),
        n_q: hand.n_joints(),
        n_t: hand.n_tendons(),
        j: contacts.j,
        g: contacts.g,
        d: contacts.d,
        f: contacts.f,
        a,
    })
}

/// Outcome of the grasping-phase stability QP.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityResult {
    /// Edge amplitudes, one per friction-pyramid edge (N).
    pub beta: Vec<f64>,
    /// Net tendon tensions relative to the moment of first contact (N).
    pub t_net: Vec<f64>,
    /// Unbalanced joint torques `J^T D beta - A t_net` (N·m).
    pub unbalanced: Vec<f64>,
    /// `‖unbalanced‖`.
    pub q: f64,
}
