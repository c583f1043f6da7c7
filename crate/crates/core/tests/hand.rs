use std::f64::consts::FRAC_PI_2;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use synergy::fixtures::reference_hand;
use synergy::grasp::Contact;
use synergy::hand::{contact_jacobian, forward_kinematics, joint_pose, HandKinematics};
use synergy::Error;

/// Planar chain in the xy plane: joints about z, links of `lengths_mm` along x.
fn planar_chain(lengths_mm: &[f64]) -> HandKinematics {
    let joints: Vec<_> = lengths_mm
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let offset = if i == 0 { 0.0 } else { lengths_mm[i - 1] };
            json!({
                "id": format!("j{i}"),
                "axis_kind": "pitch",
                "axis": [0.0, 0.0, 1.0],
                "offset": {"translation_mm": [offset, 0.0, 0.0]},
                "limits_rad": [-3.2, 3.2]
            })
        })
        .collect();
    let doc = json!({
        "fingers": [{"name": "f", "joints": joints, "tip_mm": [lengths_mm.last().unwrap(), 0.0, 0.0]}],
        "tendons": [{"id": "t", "crossings": [{"joint": "j0", "sign": 1.0}]}]
    });
    HandKinematics::from_json(&doc.to_string()).unwrap()
}

/// Random spatial chain with `n` joints about random unit axes.
fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> HandKinematics {
    let joints: Vec<_> = (0..n)
        .map(|i| {
            let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            json!({
                "id": format!("j{i}"),
                "axis_kind": if i == 0 { "roll" } else { "pitch" },
                "axis": [axis.x, axis.y, axis.z],
                "offset": {
                    "translation_mm": [rng.gen_range(-40.0..40.0), rng.gen_range(10.0..60.0), rng.gen_range(-40.0..40.0)],
                    "rpy_rad": [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
                },
                "limits_rad": [-3.0, 3.0]
            })
        })
        .collect();
    let doc = json!({
        "fingers": [{"name": "f", "joints": joints, "tip_mm": [0.0, 30.0, 0.0]}],
        "tendons": [{"id": "t", "crossings": [{"joint": "j0", "sign": 1.0}]}]
    });
    HandKinematics::from_json(&doc.to_string()).unwrap()
}

#[test]
fn reference_hand_has_eight_joints_and_three_tendons() {
    let hand = reference_hand();
    assert_eq!(hand.n_joints(), 8);
    assert_eq!(hand.n_tendons(), 3);
    let sizes: Vec<usize> = hand.fingers.iter().map(|f| f.joints.len()).collect();
    assert_eq!(sizes, [2, 3, 3]);
    assert_eq!(hand.mirror_groups.len(), 3);
}

#[test]
fn minimal_document_loads() {
    let hand = planar_chain(&[50.0]);
    assert_eq!((hand.n_joints(), hand.n_tendons()), (1, 1));
}

#[test]
fn dangling_tendon_reference_is_a_linkage_error() {
    let doc = json!({
        "fingers": [{"name": "f", "joints": [{
            "id": "a", "axis_kind": "pitch", "axis": [1.0, 0.0, 0.0],
            "offset": {}, "limits_rad": [0.0, 1.0]
        }]}],
        "tendons": [{"id": "t", "crossings": [{"joint": "nope", "sign": 1.0}]}]
    });
    match HandKinematics::from_json(&doc.to_string()) {
        Err(Error::Linkage { id, .. }) => assert_eq!(id, "nope"),
        other => panic!("expected a linkage error, got {other:?}"),
    }
}

#[test]
fn schema_errors_name_the_field() {
    let doc = json!({
        "fingers": [{"name": "f", "joints": [{
            "id": "a", "axis_kind": "pitch", "axis": [1.0, 1.0, 0.0],
            "offset": {}, "limits_rad": [0.0, 1.0]
        }]}],
        "tendons": [{"id": "t", "crossings": [{"joint": "a", "sign": 1.0}]}]
    });
    let err = HandKinematics::from_json(&doc.to_string())
        .unwrap_err()
        .to_string();
    assert!(err.contains("fingers[0].joints[0].axis"), "{err}");

    let bad_limits = doc
        .to_string()
        .replace("[1.0,1.0,0.0]", "[1.0,0.0,0.0]")
        .replace("[0.0,1.0]", "[1.0,0.5]");
    let err = HandKinematics::from_json(&bad_limits)
        .unwrap_err()
        .to_string();
    assert!(err.contains("limits_rad"), "{err}");

    let err =
        HandKinematics::from_json(r#"{"fingers": [], "tendons": [], "extra": 1}"#).unwrap_err();
    assert!(matches!(err, Error::Json(_)), "{err}");
}

#[test]
fn zero_angles_compose_offsets_only() {
    let hand = reference_hand();
    let pose = forward_kinematics(&hand, &[0.0; 8]).unwrap();
    for finger in &hand.fingers {
        let mut expected = hand.palm;
        for &j in &finger.joints {
            expected *= hand.joints[j].offset;
            assert!(
                (pose.joint_frames[j].to_homogeneous() - expected.to_homogeneous()).amax() < 1e-15
            );
        }
    }
}

#[test]
fn single_joint_quarter_turn() {
    let hand = planar_chain(&[80.0]);
    let pose = forward_kinematics(&hand, &[FRAC_PI_2]).unwrap();
    let tip = pose.tips[0].unwrap();
    assert!((tip - Point3::new(0.0, 0.08, 0.0)).norm() < 1e-15);
}

#[test]
fn two_joint_planar_tip() {
    let hand = planar_chain(&[1000.0, 1000.0]);
    let pose = forward_kinematics(&hand, &[FRAC_PI_2, FRAC_PI_2]).unwrap();
    let tip = pose.tips[0].unwrap();
    assert!((tip - Point3::new(-1.0, 1.0, 0.0)).norm() < 1e-12, "{tip}");
}

#[test]
fn wrong_angle_count_is_rejected() {
    let hand = reference_hand();
    assert!(matches!(
        forward_kinematics(&hand, &[0.0; 7]),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn out_of_limit_angles_are_flagged_not_rejected() {
    let hand = reference_hand();
    let mut theta = [0.0; 8];
    assert!(!forward_kinematics(&hand, &theta).unwrap().out_of_limits);
    theta[0] = 2.0;
    assert!(forward_kinematics(&hand, &theta).unwrap().out_of_limits);
}

#[test]
fn incremental_and_per_joint_kinematics_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let hand = random_chain(&mut rng, 4);
        let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let pose = forward_kinematics(&hand, &theta).unwrap();
        for j in 0..4 {
            let single = joint_pose(&hand, &theta, j).unwrap();
            assert!(
                (single.to_homogeneous() - pose.joint_frames[j].to_homogeneous()).amax() < 1e-12
            );
        }
    }
}

#[test]
fn lever_arm_appears_in_normal_row() {
    let hand = planar_chain(&[100.0]);
    let d = 0.07;
    // link along x, contact pushing along -y (normal perpendicular to link)
    let contact = Contact::new(
        "j0",
        Vector3::new(d, 0.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        0.5,
    );
    let j = contact_jacobian(&hand, &[0.0], &[contact]).unwrap();
    // joint velocity moves the point along +y, against the pushing normal
    assert!((j[(0, 0)].abs() - d).abs() < 1e-15);
}

#[test]
fn proximal_contact_has_zero_distal_column() {
    let hand = planar_chain(&[50.0, 50.0]);
    let contact = Contact::new(
        "j0",
        Vector3::new(0.02, 0.01, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        0.5,
    );
    let j = contact_jacobian(&hand, &[0.3, -0.4], &[contact]).unwrap();
    assert!(j.column(1).iter().all(|&v| v == 0.0));
    assert!(j.column(0).amax() > 0.0);
}

/// Contact point rigidly attached to link `link`, expressed in world frame.
fn attached_point(
    hand: &HandKinematics,
    theta: &[f64],
    link: usize,
    local: &Point3<f64>,
) -> Point3<f64> {
    joint_pose(hand, theta, link).unwrap() * local
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    for _ in 0..100 {
        let hand = random_chain(&mut rng, 3);
        let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let link = rng.gen_range(0..3);
        let local = Point3::new(
            rng.gen_range(-0.03..0.03),
            rng.gen_range(0.0..0.05),
            rng.gen_range(-0.03..0.03),
        );
        let p = attached_point(&hand, &theta, link, &local);
        let normal = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let contact = Contact::new(format!("j{link}"), p.coords, normal, 0.5);
        let jac = contact_jacobian(&hand, &theta, std::slice::from_ref(&contact)).unwrap();

        let pose = forward_kinematics(&hand, &theta).unwrap();
        let frame = synergy::grasp::contact_frame(&hand, &pose, &contact).unwrap();
        for i in 0..3 {
            let (mut plus, mut minus) = (theta.clone(), theta.clone());
            plus[i] += h;
            minus[i] -= h;
            let v = (attached_point(&hand, &plus, link, &local)
                - attached_point(&hand, &minus, link, &local))
                / (2.0 * h);
            let expected = frame.transpose() * v;
            for r in 0..3 {
                assert!(
                    (jac[(r, i)] - expected[r]).abs() < 1e-6,
                    "joint {i} row {r}: {} vs {}",
                    jac[(r, i)],
                    expected[r]
                );
            }
            if i > link {
                assert!(jac.column(i).iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn palm_contacts_have_zero_rows() {
    let hand = reference_hand();
    let contact = Contact::new("palm", Vector3::new(0.0, 0.02, 0.0), Vector3::z(), 0.5);
    let j = contact_jacobian(&hand, &[0.3; 8], &[contact]).unwrap();
    assert!(j.iter().all(|&v| v == 0.0));
}

#[test]
fn unknown_contact_link_is_rejected() {
    let hand = reference_hand();
    let contact = Contact::new("pinky", Vector3::zeros(), Vector3::z(), 0.5);
    assert!(matches!(
        contact_jacobian(&hand, &[0.0; 8], &[contact]),
        Err(Error::Linkage { .. })
    ));
}

#[test]
fn structural_zeros_across_fingers() {
    let hand = reference_hand();
    let theta = [0.4, 0.6, 0.1, 0.5, 0.7, -0.1, 0.5, 0.7];
    let pose = forward_kinematics(&hand, &theta).unwrap();
    let tip = pose.tips[1].unwrap();
    let contact = Contact::new("fd", tip.coords, Vector3::x(), 0.5);
    let j = contact_jacobian(&hand, &theta, &[contact]).unwrap();
    for (col, id) in hand.joint_ids().enumerate() {
        let on_chain = ["fr", "fp", "fd"].contains(&id);
        assert_eq!(
            j.column(col).iter().any(|&v| v != 0.0),
            on_chain,
            "joint {id}"
        );
    }
}
