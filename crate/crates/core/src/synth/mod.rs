//! Synthetic multi-sensor captures with known ground truth.
//!
//! A continuous motion profile starts with a ballistic jump and is sampled
//! into the sensor streams the pipeline consumes: per-frame LiDAR clouds of
//! the visible body vertices, an IMU orientation stream in its own frame and
//! clock with yaw drift, pelvis-height traces for synchronization, and
//! silhouette-change events from a pinhole event camera.

mod events;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::rotation::{axis_angle_to_matrix, matrix_to_axis_angle, rot_z};
use crate::body::{BodyShape, MotionSequence, PoseFrame, SkinnedBody, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::{hidden_point_removal, PointCloud, TriangleMesh, DEFAULT_HPR_GAMMA};
use crate::optim::{loss_contact, CalibrationMatrix, OptimConfig};
use crate::sync::{EventStream, SampledSeries};

pub use events::simulate_events;

const GRAVITY: f64 = 9.81;
/// Internal sampling rate of the event simulator.
pub const EVENT_SIM_RATE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MotionProfile {
    Static,
    WalkCycle,
    ArmSwing,
    #[default]
    Composite,
}

/// Pinhole event camera looking from `position` towards `look_at` with +z
/// up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventCameraSpec {
    /// Pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Occupancy change (0 to 1) that fires an event.
    pub contrast_step: f64,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
}

impl Default for EventCameraSpec {
    fn default() -> Self {
        Self {
            focal: 40.0,
            cx: 40.0,
            cy: 30.0,
            width: 80,
            height: 60,
            contrast_step: 1.0,
            position: [2.5, 4.5, 1.2],
            look_at: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Seconds.
    pub duration: f64,
    /// LiDAR frame rate, Hz.
    pub frame_rate: f64,
    /// Time of the jump apex, seconds.
    pub jump_time: f64,
    /// Meters above standing height; 0 disables the jump.
    pub jump_height: f64,
    pub motion_profile: MotionProfile,
    pub lidar_origin: [f64; 3],
    /// Per-coordinate Gaussian noise on LiDAR points, meters.
    pub lidar_noise_sigma: f64,
    /// Noise on both pelvis-height traces, meters.
    pub height_noise_sigma: f64,
    pub imu_rate: f64,
    /// Radians per second about world +z.
    pub imu_yaw_drift: f64,
    /// IMU clock reading minus true time, seconds.
    pub imu_clock_offset: f64,
    /// Axis-angle of the true IMU-to-world rotation.
    pub calibration: [f64; 3],
    pub event_camera: EventCameraSpec,
    pub shape: [f64; 10],
    /// Lowest body point over the whole motion sits this far above ground.
    pub ground_clearance: f64,
    pub boxes: Vec<SceneBox>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            duration: 10.0,
            frame_rate: 20.0,
            jump_time: 2.0,
            jump_height: 0.4,
            motion_profile: MotionProfile::Composite,
            lidar_origin: [0.6, 6.0, 1.4],
            lidar_noise_sigma: 0.01,
            height_noise_sigma: 0.002,
            imu_rate: 100.0,
            imu_yaw_drift: 0.01,
            imu_clock_offset: 0.0,
            calibration: [0.1, -0.2, 0.7],
            event_camera: EventCameraSpec::default(),
            shape: [0.0; 10],
            ground_clearance: 0.01,
            boxes: vec![SceneBox {
                min: [1.2, -0.5, 0.0],
                max: [1.8, 0.5, 0.75],
            }],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("frame_rate", self.frame_rate),
            ("imu_rate", self.imu_rate),
            ("event_camera.focal", self.event_camera.focal),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let non_negative = [
            ("jump_height", self.jump_height),
            ("lidar_noise_sigma", self.lidar_noise_sigma),
            ("height_noise_sigma", self.height_noise_sigma),
            ("ground_clearance", self.ground_clearance),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.jump_time.is_finite() && (0.0..=self.duration).contains(&self.jump_time)) {
            return Err(Error::validation(format!(
                "jump_time {} lies outside [0, {}]",
                self.jump_time, self.duration
            )));
        }
        let finite = [
            ("imu_yaw_drift", self.imu_yaw_drift),
            ("imu_clock_offset", self.imu_clock_offset),
            ("event_camera.cx", self.event_camera.cx),
            ("event_camera.cy", self.event_camera.cy),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::validation(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("lidar_origin", &self.lidar_origin),
            ("calibration", &self.calibration),
            ("event_camera.position", &self.event_camera.position),
            ("event_camera.look_at", &self.event_camera.look_at),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{name} must be finite")));
            }
        }
        let c = &self.event_camera;
        if c.width == 0 || c.height == 0 {
            return Err(Error::validation(
                "event_camera width and height must be positive",
            ));
        }
        if !(c.contrast_step > 0.0 && c.contrast_step <= 1.0) {
            return Err(Error::validation(
                "event_camera.contrast_step must lie in (0, 1]",
            ));
        }
        if self.frame_count() < 1 {
            return Err(Error::validation("duration * frame_rate gives no frames"));
        }
        BodyShape::new(self.shape)?;
        for (i, b) in self.boxes.iter().enumerate() {
            if (0..3).any(|k| !(b.min[k] < b.max[k])) {
                return Err(Error::validation(format!("boxes[{i}] has min >= max")));
            }
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<TriangleMesh> {
        let mut parts = vec![TriangleMesh::ground_plane(0.0, 0.0, 40.0, 0.0)];
        for b in &self.boxes {
            parts.push(TriangleMesh::axis_aligned_box(
                Vector3::from(b.min),
                Vector3::from(b.max),
            )?);
        }
        Ok(TriangleMesh::merged(&parts))
    }
}

/// Everything one synthetic capture produces.
#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub spec: SynthSpec,
    pub gt_motion: MotionSequence,
    pub lidar_clouds: Vec<PointCloud>,
    pub lidar_origin: Vector3<f64>,
    /// IMU-clock timestamps of `imu_poses`.
    pub imu_times: Vec<f64>,
    /// Joint rotations in the IMU frame; the root includes the yaw drift.
    pub imu_poses: Vec<[Vector3<f64>; NUM_JOINTS]>,
    pub imu_height_series: SampledSeries,
    pub lidar_height_series: SampledSeries,
    pub events: EventStream,
    pub scene: TriangleMesh,
    pub calibration: CalibrationMatrix,
}

/// Continuous ground-truth motion with the pelvis at `base_height` while
/// standing.
#[derive(Debug, Clone, Copy)]
pub struct MotionModel {
    profile: MotionProfile,
    jump_time: f64,
    jump_height: f64,
    base_height: f64,
}

impl MotionModel {
    pub fn new(spec: &SynthSpec, base_height: f64) -> Self {
        Self {
            profile: spec.motion_profile,
            jump_time: spec.jump_time,
            jump_height: spec.jump_height,
            base_height,
        }
    }

    /// Extra pelvis height from the jump: a parabola peaking at
    /// `jump_height` at `jump_time`, zero outside the flight.
    pub fn jump_offset(&self, t: f64) -> f64 {
        let dt = t - self.jump_time;
        (self.jump_height - 0.5 * GRAVITY * dt * dt).max(0.0)
    }

    pub fn frame_at(&self, t: f64) -> PoseFrame {
        let mut f = PoseFrame::rest_at(Vector3::new(
            0.0,
            0.0,
            self.base_height + self.jump_offset(t),
        ));
        // arms lowered from the T-pose
        f.pose[16] = Vector3::new(0.0, 0.9, 0.0);
        f.pose[17] = Vector3::new(0.0, -0.9, 0.0);
        let walk = matches!(
            self.profile,
            MotionProfile::WalkCycle | MotionProfile::Composite
        );
        let arms = matches!(
            self.profile,
            MotionProfile::ArmSwing | MotionProfile::Composite
        );
        if walk {
            let phase = 2.0 * PI * 0.9 * t;
            f.translation.y += 0.8 * (2.0 * PI * t / 8.0).sin();
            f.translation.x += 0.3 * (2.0 * PI * t / 8.0).sin() * (2.0 * PI * t / 8.0).cos();
            // no bob around the jump
            let calm = 1.0 - (-((t - self.jump_time) / 0.4).powi(2)).exp();
            f.translation.z +=
                0.015 * (2.0 * phase).cos() * if self.jump_height > 0.0 { calm } else { 1.0 };
            let swing = 0.35 * phase.sin();
            f.pose[1] = Vector3::new(swing, 0.0, 0.0);
            f.pose[2] = Vector3::new(-swing, 0.0, 0.0);
            f.pose[4] = Vector3::new(-0.25 * (1.0 - phase.cos()), 0.0, 0.0);
            f.pose[5] = Vector3::new(-0.25 * (1.0 + phase.cos()), 0.0, 0.0);
        }
        if arms {
            let phase = 2.0 * PI * 0.5 * t;
            let s = 0.4 * phase.sin();
            f.pose[16] = Vector3::new(s, 0.9, 0.0);
            f.pose[17] = Vector3::new(-s, -0.9, 0.0);
            f.pose[18] = Vector3::new(0.0, 0.0, 0.3 + 0.2 * phase.sin());
            f.pose[19] = Vector3::new(0.0, 0.0, -0.3 - 0.2 * phase.sin());
        }
        if self.profile == MotionProfile::Composite {
            f.pose[0] = Vector3::new(0.0, 0.0, 0.25 * (2.0 * PI * t / 6.0).sin());
            f.pose[3] = Vector3::new(0.05, 0.0, 0.15 * (2.0 * PI * 0.45 * t).sin());
            f.pose[12] = Vector3::new(0.1 * (2.0 * PI * 0.3 * t).sin(), 0.0, 0.0);
        }
        f
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// random streams, one per consumer
const STREAM_LIDAR_HEIGHT: u64 = 1;
const STREAM_IMU_HEIGHT: u64 = 2;
const STREAM_CLOUD_BASE: u64 = 1 << 32;

/// Standing pelvis height that keeps the lowest vertex of the whole motion
/// `ground_clearance` above z = 0.
fn standing_height(spec: &SynthSpec, body: &SkinnedBody, times: &[f64]) -> Result<f64> {
    let shaped = body.shaped(&BodyShape::new(spec.shape)?)?;
    let model = MotionModel::new(spec, 0.0);
    let lowest = times
        .par_iter()
        .map(|&t| {
            let f = model.frame_at(t);
            shaped
                .skin(&shaped.pose(&f))
                .iter()
                .map(|v| v.z)
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(spec.ground_clearance - lowest)
}

/// Ground-truth motion sampled at the LiDAR frame times.
pub fn ground_truth(spec: &SynthSpec, body: &SkinnedBody) -> Result<(MotionModel, MotionSequence)> {
    spec.validate()?;
    let n = spec.frame_count();
    let times: Vec<f64> = (0..n).map(|i| i as f64 / spec.frame_rate).collect();
    let h0 = standing_height(spec, body, &times)?;
    let model = MotionModel::new(spec, h0);
    let frames = times.iter().map(|&t| model.frame_at(t)).collect();
    let motion = MotionSequence::new(frames, BodyShape::new(spec.shape)?, spec.frame_rate)?;
    Ok((model, motion))
}

/// Pelvis-height traces as the LiDAR (reference clock, frame rate) and the
/// IMU (own clock, IMU rate) report them.
pub fn height_series(
    spec: &SynthSpec,
    model: &MotionModel,
) -> Result<(SampledSeries, SampledSeries)> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.height_noise_sigma)
        .map_err(|e| Error::validation(format!("height_noise_sigma: {e}")))?;
    let mut rng = rng_for(spec.seed, STREAM_LIDAR_HEIGHT);
    let n = spec.frame_count();
    let lidar: Vec<f64> = (0..n)
        .map(|i| model.frame_at(i as f64 / spec.frame_rate).translation.z + noise.sample(&mut rng))
        .collect();
    let mut rng = rng_for(spec.seed, STREAM_IMU_HEIGHT);
    let m = imu_sample_count(spec);
    let imu: Vec<f64> = (0..m)
        .map(|k| model.frame_at(k as f64 / spec.imu_rate).translation.z + noise.sample(&mut rng))
        .collect();
    Ok((
        SampledSeries::uniform(0.0, spec.frame_rate, lidar)?,
        SampledSeries::uniform(spec.imu_clock_offset, spec.imu_rate, imu)?,
    ))
}

fn imu_sample_count(spec: &SynthSpec) -> usize {
    (spec.duration * spec.imu_rate + 1e-9).floor() as usize
}

/// Generates a full capture for `spec` using `body`.
pub fn generate(spec: &SynthSpec, body: &SkinnedBody) -> Result<SynthBundle> {
    let (model, gt_motion) = ground_truth(spec, body)?;
    let scene = spec.scene()?;
    let probe = OptimConfig::default();
    let contact = loss_contact(&gt_motion, body, &scene, &probe)?;
    if contact > 0.0 {
        return Err(Error::validation(format!(
            "ground-truth motion penetrates the scene or itself (contact loss {contact:e})"
        )));
    }
    let shaped = body.shaped(&gt_motion.shape)?;
    let origin = Vector3::from(spec.lidar_origin);
    let noise = Normal::new(0.0, spec.lidar_noise_sigma)
        .map_err(|e| Error::validation(format!("lidar_noise_sigma: {e}")))?;
    let lidar_clouds = gt_motion
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let verts = shaped.skin(&shaped.pose(f));
            let visible = hidden_point_removal(&verts, &origin, DEFAULT_HPR_GAMMA)?;
            let mut rng = rng_for(spec.seed, STREAM_CLOUD_BASE + i as u64);
            let points = visible
                .iter()
                .map(|&k| {
                    let e = Vector3::new(
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                    );
                    verts[k] + e
                })
                .collect();
            PointCloud::new(points)
        })
        .collect::<Result<Vec<_>>>()?;

    let calibration = CalibrationMatrix::from_axis_angle(&Vector3::from(spec.calibration));
    let r_iw: Matrix3<f64> = calibration.rotation().transpose();
    let m = imu_sample_count(spec);
    let mut imu_times = Vec::with_capacity(m);
    let mut imu_poses = Vec::with_capacity(m);
    for k in 0..m {
        let t = k as f64 / spec.imu_rate;
        let mut pose = model.frame_at(t).pose;
        let world_root = rot_z(spec.imu_yaw_drift * t) * axis_angle_to_matrix(&pose[0]);
        pose[0] = matrix_to_axis_angle(&(r_iw * world_root));
        imu_times.push(t + spec.imu_clock_offset);
        imu_poses.push(pose);
    }
    let (lidar_height_series, imu_height_series) = height_series(spec, &model)?;
    let events = simulate_events(spec, body, &model)?;
    Ok(SynthBundle {
        spec: spec.clone(),
        gt_motion,
        lidar_clouds,
        lidar_origin: origin,
        imu_times,
        imu_poses,
        imu_height_series,
        lidar_height_series,
        events,
        scene,
        calibration,
    })
}

/// Adds i.i.d. Gaussian noise to every translation and axis-angle
/// coordinate; shape and frame rate are untouched.
pub fn perturb_motion(
    motion: &MotionSequence,
    trans_sigma: f64,
    pose_sigma: f64,
    seed: u64,
) -> Result<MotionSequence> {
    if !(trans_sigma >= 0.0 && pose_sigma >= 0.0) {
        return Err(Error::validation(format!(
            "perturbation sigmas must be >= 0, got {trans_sigma} and {pose_sigma}"
        )));
    }
    let nt = Normal::new(0.0, trans_sigma)
        .map_err(|_| Error::validation(format!("trans_sigma must be >= 0, got {trans_sigma}")))?;
    let np = Normal::new(0.0, pose_sigma)
        .map_err(|_| Error::validation(format!("pose_sigma must be >= 0, got {pose_sigma}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = motion.clone();
    for f in &mut out.frames {
        for k in 0..3 {
            f.translation[k] += nt.sample(&mut rng);
        }
        for r in &mut f.pose {
            for k in 0..3 {
                r[k] += np.sample(&mut rng);
            }
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests;
