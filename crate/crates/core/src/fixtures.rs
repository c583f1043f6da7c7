//! Ready-made hands, grasps and grids.
//!
//! The three-finger hand has the joint and tendon structure of a real
//! underactuated design (a two-joint thumb opposing two mirrored three-joint
//! fingers, one tendon per digit), but its link dimensions are illustrative.
//! The grasp set is synthetic: postures are sampled near the manifold that
//! [`reference_params`] produces; contacts sit at the fingertips and the palm.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::forceopt::ParameterGrid;
use crate::grasp::{Contact, GraspSample, DEFAULT_EDGES};
use crate::hand::{
    forward_kinematics, ActuationParams, AxisKind, CrossingDocument, FingerDocument, HandDocument,
    HandKinematics, JointDocument, OffsetDocument, TendonDocument, PALM_LINK,
};

/// Seed of the bundled synthetic grasp set.
pub const GRASP_SEED: u64 = 2019;
/// Number of synthetic grasps with contacts in the bundled set.
pub const GRASP_COUNT: usize = 21;
/// Weight given to the fully open pose.
pub const OPEN_POSE_WEIGHT: f64 = 10.0;
/// Friction coefficient of the synthetic contacts.
pub const GRASP_MU: f64 = 0.5;

/// Stiffness catalog of the three-finger design, N·mm/rad.
pub const STIFFNESS_CATALOG_NMM: [f64; 3] = [1.80, 2.11, 6.82];

fn joint(
    id: &str,
    kind: AxisKind,
    axis: [f64; 3],
    translation_mm: [f64; 3],
    limits: [f64; 2],
) -> JointDocument {
    JointDocument {
        id: id.into(),
        axis_kind: kind,
        axis,
        offset: OffsetDocument {
            translation_mm,
            rpy_rad: [0.0; 3],
        },
        limits_rad: limits,
    }
}

fn tendon(id: &str, crossings: &[(&str, f64)]) -> TendonDocument {
    TendonDocument {
        id: id.into(),
        crossings: crossings
            .iter()
            .map(|&(joint, sign)| CrossingDocument {
                joint: joint.into(),
                sign,
            })
            .collect(),
    }
}

const PITCH_LIMITS: [f64; 2] = [0.0, 1.6];
const ROLL_LIMITS: [f64; 2] = [-0.8, 0.8];

/// Thumb (`tp`, `td`) and two mirrored fingers (`fr`, `fp`, `fd` and `fr2`,
/// `fp2`, `fd2`). Fingers point along +z when straight; the thumb sits at
/// y = -50 mm and flexes toward +y, the fingers sit at y = +50 mm and flex
/// toward -y. The first finger's roll tendon runs on the opposite side.
pub fn reference_hand_document() -> HandDocument {
    let pitch = AxisKind::Pitch;
    let roll = AxisKind::Roll;
    let finger = |name: &str, ids: [&str; 3], x: f64| FingerDocument {
        name: name.into(),
        joints: vec![
            joint(ids[0], roll, [0.0, 0.0, 1.0], [x, 50.0, 0.0], ROLL_LIMITS),
            joint(
                ids[1],
                pitch,
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
                PITCH_LIMITS,
            ),
            joint(
                ids[2],
                pitch,
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 50.0],
                PITCH_LIMITS,
            ),
        ],
        tip_mm: Some([0.0, 0.0, 35.0]),
    };
    HandDocument {
        palm: None,
        fingers: vec![
            FingerDocument {
                name: "thumb".into(),
                joints: vec![
                    joint(
                        "tp",
                        pitch,
                        [-1.0, 0.0, 0.0],
                        [0.0, -50.0, 0.0],
                        PITCH_LIMITS,
                    ),
                    joint(
                        "td",
                        pitch,
                        [-1.0, 0.0, 0.0],
                        [0.0, 0.0, 50.0],
                        PITCH_LIMITS,
                    ),
                ],
                tip_mm: Some([0.0, 0.0, 35.0]),
            },
            finger("finger1", ["fr", "fp", "fd"], -25.0),
            finger("finger2", ["fr2", "fp2", "fd2"], 25.0),
        ],
        tendons: vec![
            tendon("thumb", &[("tp", 1.0), ("td", 1.0)]),
            tendon("finger1", &[("fr", -1.0), ("fp", 1.0), ("fd", 1.0)]),
            tendon("finger2", &[("fr2", 1.0), ("fp2", 1.0), ("fd2", 1.0)]),
        ],
        mirror_groups: vec![
            vec!["fr".into(), "fr2".into()],
            vec!["fp".into(), "fp2".into()],
            vec!["fd".into(), "fd2".into()],
        ],
    }
}

pub fn reference_hand() -> HandKinematics {
    reference_hand_document()
        .into_hand()
        .expect("bundled hand is valid")
}

/// The reference design: moment arms (mm), stiffnesses (N·mm/rad) and
/// preloads (rad) per digit, converted to SI and spread over mirror groups.
pub fn reference_params() -> ActuationParams {
    let thumb = [("tp", 12.0, 6.82, 4.441), ("td", 4.0, 1.80, 4.712)];
    let finger = [
        ("fr", 2.0, 1.80, 3.385),
        ("fp", 12.0, 6.82, 4.712),
        ("fd", 4.0, 2.11, 4.225),
    ];
    let mut p = ActuationParams::default();
    let mut put = |id: &str, r: f64, k: f64, t0: f64| {
        p.moment_arm.insert(id.into(), r / 1000.0);
        p.stiffness.insert(id.into(), k / 1000.0);
        p.preload.insert(id.into(), t0);
    };
    for (id, r, k, t0) in thumb {
        put(id, r, k, t0);
    }
    for (id, r, k, t0) in finger {
        put(id, r, k, t0);
        put(&format!("{id}2"), r, k, t0);
    }
    p
}

/// Moment arms 2–12 mm in 0.5 mm steps for `td`, `fr`, `fd`; the proximal
/// pitch joints pinned at 12 mm. 21³ combinations.
pub fn reference_force_grid() -> ParameterGrid {
    ParameterGrid::from_json(REFERENCE_FORCE_GRID).expect("bundled grid is valid")
}

pub const REFERENCE_FORCE_GRID: &str = r#"{
  "parameters": {
    "r_td": {"min_mm": 2.0, "max_mm": 12.0, "step_mm": 0.5},
    "r_fr": {"min_mm": 2.0, "max_mm": 12.0, "step_mm": 0.5},
    "r_fd": {"min_mm": 2.0, "max_mm": 12.0, "step_mm": 0.5}
  },
  "fixed": {"r_tp_mm": 12.0, "r_fp_mm": 12.0}
}"#;

/// Stiffnesses from the vendor catalog with the proximal pitch springs
/// pinned at 6.82 N·mm/rad, and 30 preload values per joint over
/// pi/4..7pi/4 (roll), pi/4..3pi/2 (proximal) and 0..3pi/2 (distal).
pub fn reference_kin_grid() -> ParameterGrid {
    ParameterGrid::from_json(&reference_kin_grid_json()).expect("bundled grid is valid")
}

pub fn reference_kin_grid_json() -> String {
    let catalog = format!("{:?}", STIFFNESS_CATALOG_NMM);
    let range =
        |lo: f64, hi: f64| format!(r#"{{"min_rad": {lo:?}, "max_rad": {hi:?}, "count": 30}}"#);
    let (roll, proximal, distal) = (
        range(PI / 4.0, 7.0 * PI / 4.0),
        range(PI / 4.0, 1.5 * PI),
        range(0.0, 1.5 * PI),
    );
    format!(
        r#"{{
  "parameters": {{
    "K_td": {{"values_nmm_per_rad": {catalog}}},
    "K_fr": {{"values_nmm_per_rad": {catalog}}},
    "K_fd": {{"values_nmm_per_rad": {catalog}}},
    "theta0_tp": {proximal},
    "theta0_td": {distal},
    "theta0_fr": {roll},
    "theta0_fp": {proximal},
    "theta0_fd": {distal}
  }},
  "fixed": {{"K_tp_nmm_per_rad": 6.82, "K_fp_nmm_per_rad": 6.82}}
}}"#
    )
}

/// Joint angles reached with tendon tension `t` under `params`:
/// `theta_j = s_j (r_j t / K_j - theta0_j)`, `s_j` the joint's spring sense.
fn manifold_point(
    hand: &HandKinematics,
    params: &ActuationParams,
    finger: usize,
    t: f64,
    theta: &mut [f64],
) {
    for &j in &hand.fingers[finger].joints {
        let id = &hand.joints[j].id;
        let s = hand.spring_sense(j);
        theta[j] = s * (params.moment_arm[id] * t / params.stiffness[id] - params.preload[id]);
    }
}

/// Tension interval keeping every joint of `finger` inside its limits.
fn tension_range(hand: &HandKinematics, params: &ActuationParams, finger: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for &j in &hand.fingers[finger].joints {
        let id = &hand.joints[j].id;
        let s = hand.spring_sense(j);
        let slope = s * params.moment_arm[id] / params.stiffness[id];
        let offset = -s * params.preload[id];
        let (a, b) = hand.joints[j].limits;
        let (t1, t2) = ((a - offset) / slope, (b - offset) / slope);
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (lo, hi)
}

/// The bundled grasp set: [`GRASP_COUNT`] grasps sampled near the manifolds
/// of [`reference_params`], each touching the object with three fingertips
/// and the palm, plus the open pose.
pub fn synthetic_grasps() -> Vec<GraspSample> {
    synthetic_grasps_with(
        &reference_hand(),
        &reference_params(),
        GRASP_COUNT,
        GRASP_SEED,
    )
}

pub fn synthetic_grasps_with(
    hand: &HandKinematics,
    params: &ActuationParams,
    count: usize,
    seed: u64,
) -> Vec<GraspSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grasps = Vec::with_capacity(count + 1);
    for i in 0..count {
        let mut theta = vec![0.0; hand.n_joints()];
        for f in 0..hand.fingers.len() {
            let (lo, hi) = tension_range(hand, params, f);
            // stay off the range ends so the noise keeps joints in limits
            let margin = 0.1 * (hi - lo);
            manifold_point(
                hand,
                params,
                f,
                rng.gen_range(lo + margin..hi - margin),
                &mut theta,
            );
        }
        for (j, a) in theta.iter_mut().enumerate() {
            let (lo, hi) = hand.joints[j].limits;
            *a = (*a + rng.gen_range(-0.04..0.04)).clamp(lo, hi);
        }
        let pose = forward_kinematics(hand, &theta).expect("angle vector matches hand");
        // the object rests on the palm; fingertips press it toward the palm
        let tips: Vec<Vector3<f64>> = pose
            .tips
            .iter()
            .map(|t| t.expect("bundled fingers have tips").coords)
            .collect();
        let mean = tips.iter().fold(Vector3::zeros(), |acc, p| acc + p) / tips.len() as f64;
        let center = Vector3::new(
            mean.x + rng.gen_range(-0.004..0.004),
            mean.y + rng.gen_range(-0.004..0.004),
            mean.z * rng.gen_range(0.4..0.6),
        );
        let mut contacts: Vec<Contact> = hand
            .fingers
            .iter()
            .zip(&tips)
            .map(|(finger, tip)| {
                let link = &hand.joints[*finger.joints.last().expect("fingers have joints")].id;
                Contact::new(link.clone(), *tip, (center - tip).normalize(), GRASP_MU)
                    .with_edges(DEFAULT_EDGES)
            })
            .collect();
        contacts.push(
            Contact::new(
                PALM_LINK,
                Vector3::new(center.x, center.y, 0.0),
                Vector3::z(),
                GRASP_MU,
            )
            .with_edges(DEFAULT_EDGES),
        );
        grasps.push(GraspSample {
            name: format!("grasp{:02}", i + 1),
            theta,
            object_pose: Isometry3::from_parts(
                Translation3::from(center),
                UnitQuaternion::identity(),
            ),
            contacts,
            weight: 1.0,
            open: false,
        });
    }
    let mut open = GraspSample::pose("open", vec![0.0; hand.n_joints()]);
    open.open = true;
    open.weight = OPEN_POSE_WEIGHT;
    grasps.push(open);
    grasps
}

/// Two one-joint fingers pinching a point object at the origin along x,
/// each with a 1 m lever. The object sits between contacts at (-1, 0, 0)
/// and (1, 0, 0); the pivots are at (-1, -1, 0) and (1, -1, 0). With
/// `second_actuated` false, the tendon only crosses the first joint.
pub fn disc_pinch_hand(second_actuated: bool) -> HandKinematics {
    let one = |id: &str, axis: [f64; 3], x: f64| FingerDocument {
        name: id.into(),
        joints: vec![joint(
            id,
            AxisKind::Pitch,
            axis,
            [x, -1000.0, 0.0],
            [-PI, PI],
        )],
        tip_mm: Some([0.0, 1000.0, 0.0]),
    };
    let crossings: &[(&str, f64)] = if second_actuated {
        &[("a", 1.0), ("b", 1.0)]
    } else {
        &[("a", 1.0)]
    };
    HandDocument {
        palm: None,
        fingers: vec![
            one("a", [0.0, 0.0, -1.0], -1000.0),
            one("b", [0.0, 0.0, 1.0], 1000.0),
        ],
        tendons: vec![tendon("pinch", crossings)],
        mirror_groups: Vec::new(),
    }
    .into_hand()
    .expect("disc pinch hand is valid")
}

/// Frictionless antipodal contacts; the fingers push toward each other.
pub fn disc_pinch_grasp() -> GraspSample {
    GraspSample {
        name: "disc_pinch".into(),
        theta: vec![0.0, 0.0],
        object_pose: Isometry3::identity(),
        contacts: vec![
            Contact::new("a", Vector3::new(-1.0, 0.0, 0.0), Vector3::x(), 0.0),
            Contact::new("b", Vector3::new(1.0, 0.0, 0.0), -Vector3::x(), 0.0),
        ],
        weight: 1.0,
        open: false,
    }
}

pub fn disc_pinch_moment_arms() -> BTreeMap<String, f64> {
    [("a".to_string(), 1.0), ("b".to_string(), 1.0)]
        .into_iter()
        .collect()
}

/// File name and contents of every document in the bundled set: the
/// three-finger hand, its grasps and both search grids.
pub fn bundle_files() -> Result<Vec<(&'static str, String)>> {
    use crate::grasp::{GraspDocument, GraspSetDocument};
    let grasps = GraspSetDocument {
        grasps: synthetic_grasps()
            .iter()
            .map(GraspDocument::from_sample)
            .collect(),
    };
    Ok(vec![
        (
            "hand.json",
            serde_json::to_string_pretty(&reference_hand_document())? + "\n",
        ),
        ("grasps.json", serde_json::to_string_pretty(&grasps)? + "\n"),
        ("force_grid.json", format!("{REFERENCE_FORCE_GRID}\n")),
        ("kin_grid.json", reference_kin_grid_json() + "\n"),
    ])
}

/// Writes [`bundle_files`] into `dir`.
pub fn write_bundle(dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in bundle_files()? {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}
