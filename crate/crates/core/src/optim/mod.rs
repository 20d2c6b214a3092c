//! Consolidated refinement of global poses and trajectories.
//!
//! The objective is `lambda_c * contact + lambda_s * smooth + lambda_g * geo`:
//! scene and self penetration, temporal smoothness of the root trajectory,
//! joint rotations and joint positions, and the Chamfer distance between each
//! LiDAR frame and the body vertices visible from the sensor. [`optimize`]
//! descends along diagonally preconditioned (optionally conjugate) gradient
//! directions, with central finite-difference gradients and a backtracking
//! line search.

mod init;
mod problem;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::body::{MotionSequence, SkinnedBody};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh, DEFAULT_HPR_GAMMA};

pub use init::{hip_center_from_cloud, initialize_from_sensors, HipEstimator};
use problem::Problem;

/// Rotation taking IMU-frame orientations to the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationMatrix {
    rotation: Matrix3<f64>,
}

impl CalibrationMatrix {
    pub fn new(rotation: Matrix3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("calibration matrix must be finite"));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if err > 1e-9 || rotation.determinant() <= 0.0 {
            return Err(Error::validation(
                "calibration matrix must be a proper rotation (R^T R = I, det +1)",
            ));
        }
        Ok(Self { rotation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
        }
    }

    pub fn from_axis_angle(aa: &Vector3<f64>) -> Self {
        Self {
            rotation: crate::body::rotation::axis_angle_to_matrix(aa),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    /// Scale each coordinate by its finite-difference curvature.
    #[default]
    Diagonal,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Descent {
    /// Preconditioned negative gradient every iteration.
    Steepest,
    /// Polak-Ribiere+ conjugate directions, restarting on non-descent or a
    /// negligible decrease.
    #[default]
    Conjugate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_g: f64,
    pub w_scene_contact: f64,
    pub w_self_contact: f64,
    pub w_trans: f64,
    pub w_poses: f64,
    pub w_joints: f64,
    pub max_iters: usize,
    /// Radians.
    pub fd_step_rot: f64,
    /// Meters.
    pub fd_step_trans: f64,
    /// Initial and maximum line-search step.
    pub step_size: f64,
    pub preconditioner: Preconditioner,
    pub descent: Descent,
    /// Curvatures are clamped below at this fraction of the median curvature
    /// of their parameter class.
    pub curvature_floor: f64,
    /// Stop once a steepest-descent step lowers the loss by less than this
    /// fraction; a conjugate step that does so restarts from steepest descent.
    pub min_rel_decrease: f64,
    pub hpr_gamma: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_s: 1.0,
            lambda_g: 1.0,
            w_scene_contact: 1.0,
            w_self_contact: 1.0,
            w_trans: 1.0,
            w_poses: 1.0,
            w_joints: 1.0,
            max_iters: 60,
            fd_step_rot: 1e-4,
            fd_step_trans: 1e-4,
            step_size: 1.0,
            preconditioner: Preconditioner::Diagonal,
            descent: Descent::Conjugate,
            curvature_floor: 0.01,
            min_rel_decrease: 1e-6,
            hpr_gamma: DEFAULT_HPR_GAMMA,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_c", self.lambda_c),
            ("lambda_s", self.lambda_s),
            ("lambda_g", self.lambda_g),
            ("w_scene_contact", self.w_scene_contact),
            ("w_self_contact", self.w_self_contact),
            ("w_trans", self.w_trans),
            ("w_poses", self.w_poses),
            ("w_joints", self.w_joints),
            ("curvature_floor", self.curvature_floor),
            ("min_rel_decrease", self.min_rel_decrease),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        if self.max_iters < 1 {
            return Err(Error::validation("max_iters must be at least 1"));
        }
        for (name, s) in [
            ("fd_step_rot", self.fd_step_rot),
            ("fd_step_trans", self.fd_step_trans),
            ("step_size", self.step_size),
        ] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be positive, got {s}"
                )));
            }
        }
        if !self.hpr_gamma.is_finite() {
            return Err(Error::validation("hpr_gamma must be finite"));
        }
        Ok(())
    }
}

/// Per-frame LiDAR clouds and the sensor position, world frame.
#[derive(Debug, Clone)]
pub struct LidarFrames {
    pub clouds: Vec<PointCloud>,
    pub origin: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub contact: f64,
    pub smooth: f64,
    pub geo: f64,
    pub total: f64,
    /// Frames left out of the geometry term (empty cloud or no visible
    /// vertices).
    pub skipped_geo_frames: usize,
    /// Fewer than three frames: the second-difference terms are undefined
    /// and contribute nothing.
    pub smooth_partial: bool,
}

impl LossBreakdown {
    pub fn combine(contact: f64, smooth: f64, geo: f64, config: &OptimConfig) -> Self {
        Self {
            contact,
            smooth,
            geo,
            total: config.lambda_c * contact + config.lambda_s * smooth + config.lambda_g * geo,
            skipped_geo_frames: 0,
            smooth_partial: false,
        }
    }
}

/// Geometry loss and the number of frames it had to skip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoLoss {
    pub value: f64,
    pub skipped_frames: usize,
}

/// `w_scene_contact * mean_f sum_v depth^2 + w_self_contact * mean_f sum
/// overlap^2` over non-adjacent capsule pairs.
pub fn loss_contact(
    motion: &MotionSequence,
    body: &SkinnedBody,
    scene: &TriangleMesh,
    config: &OptimConfig,
) -> Result<f64> {
    motion.validate()?;
    let p = Problem::new(body, &motion.shape, Some(scene), None, config)?;
    let state = p.state(&motion.frames);
    Ok(p.contact(&state))
}

/// Smoothness loss; each of the three terms is averaged over the number of
/// differences it sums.
pub fn loss_smooth(
    motion: &MotionSequence,
    body: &SkinnedBody,
    config: &OptimConfig,
) -> Result<f64> {
    motion.validate()?;
    let p = Problem::new(body, &motion.shape, None, None, config)?;
    let state = p.state(&motion.frames);
    Ok(p.smooth(&state))
}

/// Mean over frames of the Chamfer distance between the cloud and the
/// vertices visible from `lidar.origin`.
pub fn loss_geo(
    motion: &MotionSequence,
    body: &SkinnedBody,
    lidar: &LidarFrames,
    gamma: f64,
) -> Result<GeoLoss> {
    motion.validate()?;
    let config = OptimConfig {
        hpr_gamma: gamma,
        ..Default::default()
    };
    config.validate()?;
    let p = Problem::new(body, &motion.shape, None, Some(lidar), &config)?;
    let mut state = p.state(&motion.frames);
    p.refresh_visibility(&mut state);
    let (value, skipped_frames) = p.geo(&state);
    Ok(GeoLoss {
        value,
        skipped_frames,
    })
}

/// Weighted objective; terms whose lambda is zero are not evaluated and
/// reported as 0.
pub fn total_loss(
    motion: &MotionSequence,
    body: &SkinnedBody,
    scene: &TriangleMesh,
    lidar: &LidarFrames,
    config: &OptimConfig,
) -> Result<LossBreakdown> {
    motion.validate()?;
    config.validate()?;
    let p = Problem::new(body, &motion.shape, Some(scene), Some(lidar), config)?;
    let mut state = p.state(&motion.frames);
    p.refresh_visibility(&mut state);
    Ok(p.breakdown(&state))
}

/// One row of the optimization log; row 0 is the initial motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: LossBreakdown,
    /// Accepted line-search step; 0 for the initial row.
    pub step: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "iter,contact,smooth,geo,total,step";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iter,
            self.loss.contact,
            self.loss.smooth,
            self.loss.geo,
            self.loss.total,
            self.step
        )
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub motion: MotionSequence,
    pub history: Vec<IterationRecord>,
    /// The line search found no decrease along the steepest direction and the
    /// run stopped early.
    pub stalled: bool,
}

/// Refines every frame's translation and axis-angle pose with shape held
/// fixed.
pub fn optimize(
    initial: &MotionSequence,
    body: &SkinnedBody,
    scene: &TriangleMesh,
    lidar: &LidarFrames,
    config: &OptimConfig,
) -> Result<OptimResult> {
    initial.validate()?;
    config.validate()?;
    let p = Problem::new(body, &initial.shape, Some(scene), Some(lidar), config)?;
    p.run(initial)
}
