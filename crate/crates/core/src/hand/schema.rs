//! JSON hand description. Lengths are given in millimeters and converted to
//! meters on load.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{AxisKind, HandKinematics, Joint};
use crate::error::{Error, Result};
use crate::units::mm_to_m;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palm: Option<OffsetDocument>,
    pub fingers: Vec<FingerDocument>,
    pub tendons: Vec<TendonDocument>,
    #[serde(default)]
    pub mirror_groups: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerDocument {
    pub name: String,
    pub joints: Vec<JointDocument>,
    /// Fingertip point in the last joint's frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_mm: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDocument {
    pub id: String,
    pub axis_kind: AxisKind,
    pub axis: [f64; 3],
    pub offset: OffsetDocument,
    pub limits_rad: [f64; 2],
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetDocument {
    #[serde(default)]
    pub translation_mm: [f64; 3],
    /// Roll, pitch, yaw about the fixed x, y, z axes.
    #[serde(default)]
    pub rpy_rad: [f64; 3],
}

impl OffsetDocument {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.translation_mm;
        let [r, p, yaw] = self.rpy_rad;
        Isometry3::from_parts(
            Translation3::new(mm_to_m(x), mm_to_m(y), mm_to_m(z)),
            UnitQuaternion::from_euler_angles(r, p, yaw),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendonDocument {
    pub id: String,
    pub crossings: Vec<CrossingDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingDocument {
    pub joint: String,
    pub sign: f64,
}

impl HandDocument {
    pub fn into_hand(self) -> Result<HandKinematics> {
        let mut fingers = Vec::with_capacity(self.fingers.len());
        for (f, finger) in self.fingers.into_iter().enumerate() {
            let mut joints = Vec::with_capacity(finger.joints.len());
            for (j, jd) in finger.joints.into_iter().enumerate() {
                let axis = Vector3::from(jd.axis);
                if axis.iter().any(|v| !v.is_finite()) {
                    return Err(Error::schema(
                        format!("fingers[{f}].joints[{j}].axis"),
                        "axis entries must be finite",
                    ));
                }
                joints.push(Joint {
                    id: jd.id,
                    axis_kind: jd.axis_kind,
                    axis,
                    offset: jd.offset.to_isometry(),
                    limits: (jd.limits_rad[0], jd.limits_rad[1]),
                });
            }
            let tip = finger
                .tip_mm
                .map(|[x, y, z]| Vector3::new(mm_to_m(x), mm_to_m(y), mm_to_m(z)));
            fingers.push((finger.name, joints, tip));
        }
        let tendons = self
            .tendons
            .into_iter()
            .map(|t| {
                let crossings = t.crossings.into_iter().map(|c| (c.joint, c.sign)).collect();
                (t.id, crossings)
            })
            .collect();
        let palm = self
            .palm
            .map(|p| p.to_isometry())
            .unwrap_or_else(Isometry3::identity);
        HandKinematics::new(fingers, palm, tendons, self.mirror_groups)
    }
}
