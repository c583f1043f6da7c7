use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde_json::json;
use synergy::analysis::derive_mrm;
use synergy::fixtures::{reference_hand, reference_kin_grid, reference_params, synthetic_grasps};
use synergy::forceopt::{aggregate, ParameterGrid, SearchOptions};
use synergy::grasp::GraspSample;
use synergy::hand::{ActuationParams, HandKinematics};
use synergy::kinopt::{
    hand_spring_torque, kinematic_optimize, kinematic_optimize_with, precontact_stability_metric,
    spring_torque, KinematicOptions, PreContactSystem,
};
use synergy::units::{nm_to_nmm, nmm_to_nm};
use synergy::Error;

/// Two independent two-joint fingers, one tendon each.
fn two_finger_hand() -> HandKinematics {
    let finger = |name: &str, a: &str, b: &str| {
        json!({
            "name": name,
            "joints": [
                {"id": a, "axis_kind": "pitch", "axis": [1.0, 0.0, 0.0], "offset": {}, "limits_rad": [-3.0, 3.0]},
                {"id": b, "axis_kind": "pitch", "axis": [1.0, 0.0, 0.0],
                 "offset": {"translation_mm": [0.0, 40.0, 0.0]}, "limits_rad": [-3.0, 3.0]}
            ],
            "tip_mm": [0.0, 30.0, 0.0]
        })
    };
    let doc = json!({
        "fingers": [finger("f", "a", "b"), finger("g", "c", "d")],
        "tendons": [
            {"id": "tf", "crossings": [{"joint": "a", "sign": 1.0}, {"joint": "b", "sign": 1.0}]},
            {"id": "tg", "crossings": [{"joint": "c", "sign": 1.0}, {"joint": "d", "sign": 1.0}]}
        ]
    });
    HandKinematics::from_json(&doc.to_string()).unwrap()
}

fn toy_r_star() -> BTreeMap<String, f64> {
    [("a", 0.010), ("b", 0.004), ("c", 0.008), ("d", 0.006)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// 3 x 3 x 3 per finger: K of the distal joint and both preloads.
fn toy_grid() -> ParameterGrid {
    let mut grid = ParameterGrid::new();
    for (k, p0, p1) in [
        ("K_b", "theta0_a", "theta0_b"),
        ("K_d", "theta0_c", "theta0_d"),
    ] {
        grid = grid
            .with_values(k, vec![0.0018, 0.00211, 0.00682])
            .unwrap()
            .with_values(p0, vec![0.5, 1.5, 2.5])
            .unwrap()
            .with_values(p1, vec![0.3, 1.2, 2.0])
            .unwrap();
    }
    grid.with_fixed("K_a", 0.00682)
        .unwrap()
        .with_fixed("K_c", 0.00682)
        .unwrap()
}

fn toy_poses() -> Vec<GraspSample> {
    let mut poses: Vec<GraspSample> = [
        [0.4, 0.9, 1.1, 0.2],
        [0.8, 0.5, 0.3, 0.6],
        [1.2, 1.4, 0.9, 1.0],
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| GraspSample::pose(format!("p{i}"), t.to_vec()))
    .collect();
    let mut open = GraspSample::pose("open", vec![0.0; 4]);
    open.open = true;
    open.weight = 10.0;
    poses.push(open);
    poses
}

fn residual(hand: &HandKinematics, params: &ActuationParams, pose: &GraspSample) -> f64 {
    let sys = PreContactSystem::new(hand, pose, params).unwrap();
    precontact_stability_metric(&sys).unwrap().q
}

#[test]
fn spring_torque_examples() {
    assert_eq!(spring_torque(&[1.0], &[0.0], &[0.0]).unwrap(), [0.0]);
    let tau = spring_torque(&[nmm_to_nm(6.82)], &[0.0], &[4.712]).unwrap();
    assert!(
        (nm_to_nmm(tau[0]) - 32.14).abs() < 0.005,
        "{}",
        nm_to_nmm(tau[0])
    );
    assert!((nm_to_nmm(tau[0]) - 6.82 * 4.712).abs() < 1e-12);

    let k = [0.002, 0.005, 0.0071];
    let theta = [0.3, -0.2, 1.1];
    let t0 = [1.0, 2.0, 0.5];
    let once = spring_torque(&k, &theta, &t0).unwrap();
    let twice = spring_torque(&k.map(|v| 2.0 * v), &theta, &t0).unwrap();
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(2.0 * a, *b);
    }
    assert!(matches!(
        spring_torque(&k, &theta[..2], &t0),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn missing_stiffness_is_an_error() {
    let hand = reference_hand();
    let mut params = reference_params();
    params.stiffness.remove("td");
    assert!(matches!(
        hand_spring_torque(&hand, &params, &[0.0; 8]),
        Err(Error::MissingJoint { .. })
    ));
}

#[test]
fn mirrored_springs_push_the_other_way() {
    let hand = reference_hand();
    let params = reference_params();
    let theta = [0.1, 0.2, 0.3, 0.4, 0.5, -0.3, 0.4, 0.5];
    let tau = hand_spring_torque(&hand, &params, &theta).unwrap();
    let fr = hand.joint_index("fr").unwrap();
    let fr2 = hand.joint_index("fr2").unwrap();
    // mirrored roll angles give mirrored torques
    assert!((tau[fr] + tau[fr2]).abs() < 1e-15);
}

#[test]
fn thumb_fixture_on_manifold() {
    let sys = PreContactSystem {
        r: DMatrix::from_column_slice(2, 1, &[0.012, 0.004]),
        tau_s: DVector::from_vec(vec![0.012, 0.004]),
        pose_name: "thumb".into(),
        weight: 1.0,
    };
    let res = precontact_stability_metric(&sys).unwrap();
    assert!((res.t[0] - 1.0).abs() < 1e-12);
    assert!(res.q < 1e-12);
}

#[test]
fn thumb_fixture_off_manifold_matches_scan() {
    let r = DVector::from_vec(vec![0.012, 0.004]);
    let tau = DVector::from_vec(vec![0.004, 0.012]);
    let sys = PreContactSystem {
        r: DMatrix::from_column_slice(2, 1, r.as_slice()),
        tau_s: tau.clone(),
        pose_name: "thumb".into(),
        weight: 1.0,
    };
    let q = precontact_stability_metric(&sys).unwrap().q;
    let scan = (0..=100_000)
        .map(|i| (&r * (i as f64 * 1e-4) - &tau).norm())
        .fold(f64::INFINITY, f64::min);
    assert!(q > 0.0);
    assert!((q - scan).abs() < 1e-6, "{q} vs {scan}");
}

#[test]
fn consistent_systems_have_zero_residual() {
    let hand = reference_hand();
    let r = reference_params().moment_arm;
    let a = synergy::grasp::actuation_matrix(&hand, &r).unwrap();
    let sys = PreContactSystem {
        tau_s: &a * DVector::from_vec(vec![0.7, 1.3, 2.1]),
        r: a,
        pose_name: "p".into(),
        weight: 1.0,
    };
    assert!(precontact_stability_metric(&sys).unwrap().q <= 1e-9);
}

#[test]
fn reference_thumb_block_size() {
    let grid = reference_kin_grid();
    let thumb: u64 = grid
        .parameters
        .iter()
        .filter(|p| p.joint == "tp" || p.joint == "td")
        .map(|p| p.values.len() as u64)
        .product();
    assert_eq!(thumb, 3 * 30 * 30);
    assert!(grid
        .fixed
        .iter()
        .any(|p| p.name == "K_tp" && p.value == nmm_to_nm(6.82)));
}

#[test]
fn exact_fit_wins() {
    let hand = two_finger_hand();
    let grid = toy_grid();
    // put one pose on the manifold of a known interior combination
    let target = [1usize, 2, 0, 2, 1, 1];
    let mut params = ActuationParams {
        moment_arm: toy_r_star(),
        ..Default::default()
    };
    for p in &grid.fixed {
        params.stiffness.insert(p.joint.clone(), p.value);
    }
    for (p, &i) in grid.parameters.iter().zip(&target) {
        let map = if p.name.starts_with('K') {
            &mut params.stiffness
        } else {
            &mut params.preload
        };
        map.insert(p.joint.clone(), p.values[i]);
    }
    let mut theta = Vec::new();
    for f in ["f", "g"] {
        let m = derive_mrm(&hand, &params, f).unwrap();
        theta.extend(m.point(1.5));
    }
    let pose = GraspSample::pose("fit", theta);
    let report = kinematic_optimize(&hand, &[pose], &grid, &toy_r_star()).unwrap();
    assert_eq!(report.best_combo, target);
    assert!(report.per_grasp_q[0].q <= 1e-9);
}

#[test]
fn decomposition_matches_joint_enumeration() {
    let hand = two_finger_hand();
    let poses = toy_poses();
    let grid = toy_grid();
    let split = kinematic_optimize(&hand, &poses, &grid, &toy_r_star()).unwrap();
    let joint = kinematic_optimize_with(
        &hand,
        &poses,
        &grid,
        &toy_r_star(),
        &KinematicOptions {
            decompose: false,
            ..KinematicOptions::default()
        },
    )
    .unwrap();
    assert_eq!(split.blocks.len(), 2);
    assert_eq!(split.combos_evaluated, 27 + 27);
    assert_eq!(joint.combos_evaluated, 27 * 27);
    assert_eq!(split.best_combo, joint.best_combo);
    assert!((split.best_q - joint.best_q).abs() <= 1e-10);
}

#[test]
fn reference_decomposition_matches_joint_enumeration() {
    let hand = reference_hand();
    let poses = synthetic_grasps();
    let grid = ParameterGrid::new()
        .with_values("K_td", vec![0.0018, 0.00682])
        .unwrap()
        .with_values("theta0_tp", vec![1.0, 3.0, 4.4])
        .unwrap()
        .with_values("theta0_td", vec![2.0, 4.7])
        .unwrap()
        .with_values("K_fd", vec![0.0018, 0.00211])
        .unwrap()
        .with_values("theta0_fr", vec![1.0, 3.4])
        .unwrap()
        .with_values("theta0_fp", vec![2.0, 4.7])
        .unwrap()
        .with_values("theta0_fd", vec![3.0, 4.2])
        .unwrap();
    let grid = ["K_tp", "K_fr", "K_fp"]
        .iter()
        .fold(grid, |g, k| g.with_fixed(k, 0.00682).unwrap());
    let r = reference_params().moment_arm;
    let split = kinematic_optimize(&hand, &poses, &grid, &r).unwrap();
    let joint = kinematic_optimize_with(
        &hand,
        &poses,
        &grid,
        &r,
        &KinematicOptions {
            decompose: false,
            ..KinematicOptions::default()
        },
    )
    .unwrap();
    assert_eq!(split.blocks.len(), 2);
    assert_eq!(split.best_combo, joint.best_combo);
    assert!((split.best_q - joint.best_q).abs() <= 1e-10);
}

#[test]
fn report_matches_direct_evaluation() {
    let hand = two_finger_hand();
    let poses = toy_poses();
    let report = kinematic_optimize(&hand, &poses, &toy_grid(), &toy_r_star()).unwrap();
    for (pose, score) in poses.iter().zip(&report.per_grasp_q) {
        let direct = residual(&hand, &report.best_params, pose);
        assert!((direct - score.q).abs() <= 1e-12);
    }
    for (pose, score) in poses.iter().zip(&report.baseline_per_grasp_q) {
        let direct = residual(&hand, &report.baseline_params, pose);
        assert!((direct - score.q).abs() <= 1e-12);
    }
    assert!((aggregate(&report.per_grasp_q) - report.best_q).abs() <= 1e-9);
    assert!(report.best_q <= report.baseline_q);
}

#[test]
fn weights_scale_squared_contributions() {
    let hand = two_finger_hand();
    let poses = toy_poses();
    let report = kinematic_optimize(&hand, &poses, &toy_grid(), &toy_r_star()).unwrap();
    let mut heavier = report.per_grasp_q.clone();
    let w = 3.0;
    heavier[1].weight *= w;
    let q = heavier[1].q;
    let delta = aggregate(&heavier).powi(2) - report.best_q.powi(2);
    assert!((delta - (w * w - 1.0) * q * q).abs() <= 1e-12);
}

#[test]
fn heavy_open_pose_is_fit_best() {
    let hand = two_finger_hand();
    let mut poses = toy_poses();
    poses.last_mut().unwrap().weight = 1e6;
    let grid = toy_grid();
    let options = KinematicOptions {
        search: SearchOptions {
            trace: true,
            ..SearchOptions::default()
        },
        ..KinematicOptions::default()
    };
    let report = kinematic_optimize_with(&hand, &poses, &grid, &toy_r_star(), &options).unwrap();
    let open = poses.last().unwrap();
    let achieved = report.per_grasp_q.last().unwrap().q;

    // smallest open-pose residual anywhere on the grid
    let mut best = f64::INFINITY;
    for i in 0..grid.cardinality() {
        let combo = grid.combo(i);
        let mut params = ActuationParams {
            moment_arm: toy_r_star(),
            ..Default::default()
        };
        for p in &grid.fixed {
            params.stiffness.insert(p.joint.clone(), p.value);
        }
        for (p, &c) in grid.parameters.iter().zip(&combo) {
            let map = if p.name.starts_with('K') {
                &mut params.stiffness
            } else {
                &mut params.preload
            };
            map.insert(p.joint.clone(), p.values[c]);
        }
        best = best.min(residual(&hand, &params, open));
    }
    assert!(
        achieved - best <= 1e-6 * best.max(1e-9),
        "{achieved} vs {best}"
    );
}

#[test]
fn kinematic_grid_errors() {
    let hand = two_finger_hand();
    let poses = toy_poses();
    let r = toy_r_star();
    assert!(kinematic_optimize(&hand, &poses, &ParameterGrid::new(), &r).is_err());
    let with_arm = toy_grid().with_fixed("r_a", 0.01).unwrap();
    assert!(matches!(
        kinematic_optimize(&hand, &poses, &with_arm, &r),
        Err(Error::InvalidArgument(_))
    ));
    let partial = ParameterGrid::new()
        .with_values("K_a", vec![0.002])
        .unwrap();
    assert!(matches!(
        kinematic_optimize(&hand, &poses, &partial, &r),
        Err(Error::MissingJoint { .. })
    ));
    assert!(kinematic_optimize(&hand, &[], &toy_grid(), &r).is_err());
}

#[test]
fn serial_and_parallel_agree() {
    let hand = two_finger_hand();
    let poses = toy_poses();
    let run = |threads| {
        let options = KinematicOptions {
            search: SearchOptions {
                threads,
                trace: true,
                ..SearchOptions::default()
            },
            ..KinematicOptions::default()
        };
        kinematic_optimize_with(&hand, &poses, &toy_grid(), &toy_r_star(), &options)
            .unwrap()
            .to_json()
            .unwrap()
    };
    assert_eq!(run(1), run(3));
}
