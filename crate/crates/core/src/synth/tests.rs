use super::*;
use crate::body::TemplateOptions;
use crate::geometry::KdTree;
use crate::metrics::evaluate;
use crate::optim::initialize_from_sensors;
use crate::sync::{detect_jump_peaks, resample_poses};

fn body() -> SkinnedBody {
    SkinnedBody::procedural(&TemplateOptions::default()).unwrap()
}

fn short(profile: MotionProfile) -> SynthSpec {
    SynthSpec {
        duration: 4.0,
        jump_time: 1.0,
        motion_profile: profile,
        ..Default::default()
    }
}

#[test]
fn static_noise_free_capture() {
    let b = body();
    let spec = SynthSpec {
        motion_profile: MotionProfile::Static,
        jump_height: 0.0,
        lidar_noise_sigma: 0.0,
        imu_yaw_drift: 0.0,
        duration: 2.0,
        ..Default::default()
    };
    let bundle = generate(&spec, &b).unwrap();
    assert_eq!(bundle.lidar_clouds.len(), 40);
    let shaped = b.shaped(&bundle.gt_motion.shape).unwrap();
    for (f, c) in bundle.gt_motion.frames.iter().zip(&bundle.lidar_clouds) {
        let verts = shaped.skin(&shaped.pose(f));
        let tree = KdTree::new(&verts);
        for p in &c.points {
            assert!(tree.nearest(p).unwrap().1.sqrt() < 1e-9);
        }
    }
    assert!(bundle.events.is_empty());
}

#[test]
fn jump_apex_is_detected() {
    let b = body();
    let spec = SynthSpec {
        duration: 5.0,
        ..Default::default()
    };
    let (model, gt) = ground_truth(&spec, &b).unwrap();
    let (lidar, _) = height_series(&spec, &model).unwrap();
    let peaks = detect_jump_peaks(&lidar, 0.3).unwrap();
    assert_eq!(peaks.len(), 1, "{peaks:?}");
    assert!((peaks[0] - 2.0).abs() <= 0.5 / spec.frame_rate, "{peaks:?}");
    let apex = gt.frames[40].translation.z;
    let standing = model.frame_at(0.0).translation.z - model.jump_offset(0.0);
    assert!(apex > standing + 0.35);
}

#[test]
fn ground_truth_is_contact_free() {
    let b = body();
    for profile in [
        MotionProfile::Static,
        MotionProfile::WalkCycle,
        MotionProfile::ArmSwing,
        MotionProfile::Composite,
    ] {
        let spec = SynthSpec {
            duration: 10.0,
            motion_profile: profile,
            ..Default::default()
        };
        let (_, gt) = ground_truth(&spec, &b).unwrap();
        let c = loss_contact(&gt, &b, &spec.scene().unwrap(), &OptimConfig::default()).unwrap();
        assert_eq!(c, 0.0, "{profile:?}");
    }
}

#[test]
fn yaw_drift_accumulates_linearly() {
    let b = body();
    let spec = SynthSpec {
        imu_yaw_drift: 0.01,
        ..short(MotionProfile::WalkCycle)
    };
    let spec = SynthSpec {
        duration: 10.0,
        ..spec
    };
    let bundle = generate(&spec, &b).unwrap();
    let n = bundle.gt_motion.len();
    let frame_times: Vec<f64> = (0..n).map(|i| i as f64 / spec.frame_rate).collect();
    let frames: Vec<PoseFrame> = bundle
        .imu_poses
        .iter()
        .map(|p| PoseFrame {
            translation: Vector3::zeros(),
            pose: *p,
        })
        .collect();
    let imu = resample_poses(&bundle.imu_times, &frames, &frame_times).unwrap();
    let poses: Vec<_> = imu.iter().map(|f| f.pose).collect();
    let hips: Vec<_> = bundle
        .gt_motion
        .frames
        .iter()
        .map(|f| f.translation)
        .collect();
    let init = initialize_from_sensors(
        &poses,
        &bundle.calibration,
        &hips,
        bundle.gt_motion.shape,
        20.0,
    )
    .unwrap();
    for (i, (a, g)) in init.frames.iter().zip(&bundle.gt_motion.frames).enumerate() {
        let err = crate::body::rotation::geodesic_angle(
            &axis_angle_to_matrix(&a.pose[0]),
            &axis_angle_to_matrix(&g.pose[0]),
        );
        assert!(
            (err - 0.01 * frame_times[i]).abs() < 1e-9,
            "frame {i}: {err}"
        );
    }
}

#[test]
fn drift_free_initialization_matches_ground_truth() {
    let b = body();
    let spec = SynthSpec {
        imu_yaw_drift: 0.0,
        ..short(MotionProfile::Composite)
    };
    let bundle = generate(&spec, &b).unwrap();
    let step = (spec.imu_rate / spec.frame_rate) as usize;
    let poses: Vec<_> = bundle.imu_poses.iter().step_by(step).copied().collect();
    let hips: Vec<_> = bundle
        .gt_motion
        .frames
        .iter()
        .map(|f| f.translation)
        .collect();
    let init = initialize_from_sensors(
        &poses,
        &bundle.calibration,
        &hips,
        bundle.gt_motion.shape,
        20.0,
    )
    .unwrap();
    let shaped = b.shaped(&init.shape).unwrap();
    for (a, g) in init.frames.iter().zip(&bundle.gt_motion.frames) {
        let (ja, jg) = (shaped.pose(a).joints, shaped.pose(g).joints);
        for (p, q) in ja.iter().zip(&jg) {
            assert!((p - q).norm() < 1e-9);
        }
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let b = body();
    let spec = short(MotionProfile::Composite);
    let a = generate(&spec, &b).unwrap();
    let c = generate(&spec, &b).unwrap();
    assert_eq!(a.lidar_clouds, c.lidar_clouds);
    assert_eq!(a.events, c.events);
    assert_eq!(a.imu_height_series, c.imu_height_series);
    let d = generate(&SynthSpec { seed: 9, ..spec }, &b).unwrap();
    assert_ne!(a.lidar_clouds, d.lidar_clouds);
    assert_eq!(a.gt_motion, d.gt_motion);
}

#[test]
fn moving_profiles_fire_events() {
    let b = body();
    for profile in [MotionProfile::WalkCycle, MotionProfile::ArmSwing] {
        let bundle = generate(&short(profile), &b).unwrap();
        assert!(!bundle.events.is_empty(), "{profile:?}");
    }
}

#[test]
fn periodic_motion_has_balanced_polarity() {
    let b = body();
    // two full arm-swing periods, no jump
    let spec = SynthSpec {
        duration: 4.0,
        jump_height: 0.0,
        motion_profile: MotionProfile::ArmSwing,
        ..Default::default()
    };
    let ev = generate(&spec, &b).unwrap().events;
    let sum: i64 = ev.events.iter().map(|e| e.polarity as i64).sum();
    assert!(ev.len() > 0);
    assert!(
        sum.abs() as f64 <= 0.05 * ev.len() as f64,
        "{sum} of {}",
        ev.len()
    );
}

#[test]
fn streams_cover_the_same_span() {
    let b = body();
    let spec = SynthSpec {
        imu_clock_offset: 0.3,
        ..short(MotionProfile::WalkCycle)
    };
    let bundle = generate(&spec, &b).unwrap();
    let lt = bundle.lidar_height_series.timestamps();
    let it = bundle.imu_height_series.timestamps();
    assert!((lt[0] - (it[0] - 0.3)).abs() < 1e-12);
    assert!((lt[lt.len() - 1] - (it[it.len() - 1] - 0.3)).abs() <= 1.0 / spec.frame_rate);
    assert!(bundle.events.events.last().unwrap().t <= spec.duration);
    assert_eq!(bundle.imu_times.len(), bundle.imu_poses.len());
}

#[test]
fn invalid_specs_are_rejected() {
    let b = body();
    let bad = [
        SynthSpec {
            frame_rate: 0.0,
            ..Default::default()
        },
        SynthSpec {
            jump_time: 11.0,
            ..Default::default()
        },
        SynthSpec {
            lidar_noise_sigma: -0.1,
            ..Default::default()
        },
        SynthSpec {
            imu_rate: f64::NAN,
            ..Default::default()
        },
    ];
    for s in bad {
        assert!(generate(&s, &b).is_err());
    }
    let overlapping = SynthSpec {
        boxes: vec![SceneBox {
            min: [-0.5, -0.5, 0.0],
            max: [0.5, 0.5, 0.5],
        }],
        ..short(MotionProfile::Static)
    };
    assert!(generate(&overlapping, &b).is_err());
}

#[test]
fn perturbation_contract() {
    let b = body();
    let spec = SynthSpec {
        duration: 5.0,
        ..Default::default()
    };
    let (_, gt) = ground_truth(&spec, &b).unwrap();
    assert_eq!(gt.len(), 100);
    assert_eq!(perturb_motion(&gt, 0.0, 0.0, 3).unwrap(), gt);
    let p = perturb_motion(&gt, 0.1, 0.0, 3).unwrap();
    assert_eq!(p, perturb_motion(&gt, 0.1, 0.0, 3).unwrap());
    assert_ne!(p, perturb_motion(&gt, 0.1, 0.0, 4).unwrap());
    assert_eq!(p.shape, gt.shape);
    let t = evaluate(&p, &gt, &b).unwrap().t_error;
    assert!((100.0..=250.0).contains(&t), "{t}");
    assert!(perturb_motion(&gt, -1.0, 0.0, 3).is_err());
}
