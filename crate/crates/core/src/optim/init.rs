use nalgebra::Vector3;

use super::CalibrationMatrix;
use crate::body::rotation::{axis_angle_to_matrix, matrix_to_axis_angle};
use crate::body::{BodyShape, MotionSequence, PoseFrame, ShapedBody, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Initial motion from IMU poses and LiDAR hip centers: the root orientation
/// is rotated into the world frame, the parent-relative joints are copied,
/// and the translation is the hip center.
pub fn initialize_from_sensors(
    imu_poses: &[[Vector3<f64>; NUM_JOINTS]],
    r_wi: &CalibrationMatrix,
    hip_centers: &[Vector3<f64>],
    shape: BodyShape,
    frame_rate: f64,
) -> Result<MotionSequence> {
    if imu_poses.len() != hip_centers.len() {
        return Err(Error::validation(format!(
            "{} IMU poses but {} hip centers",
            imu_poses.len(),
            hip_centers.len()
        )));
    }
    let frames = imu_poses
        .iter()
        .zip(hip_centers)
        .map(|(pose, hip)| {
            let mut pose = *pose;
            pose[0] = matrix_to_axis_angle(&(r_wi.rotation() * axis_angle_to_matrix(&pose[0])));
            PoseFrame {
                translation: *hip,
                pose,
            }
        })
        .collect();
    MotionSequence::new(frames, shape, frame_rate)
}

/// Estimates the pelvis position from the visible side of a body cloud.
///
/// The cloud centroid is lifted by the template's pelvis-above-centroid
/// height and pushed away from the sensor by half the template's depth at
/// the hips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HipEstimator {
    lift: f64,
    depth: f64,
}

impl HipEstimator {
    pub fn new(body: &ShapedBody) -> Self {
        let rest = body.rest_vertices();
        let pelvis = body.rest_joints()[body.body().root()];
        let mean_z = rest.iter().map(|v| v.z).sum::<f64>() / rest.len() as f64;
        let (lo, hi) = rest
            .iter()
            .filter(|v| (v.z - pelvis.z).abs() < 0.15 && (v.x - pelvis.x).abs() < 0.2)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.y), hi.max(v.y))
            });
        let depth = if hi > lo { 0.25 * (hi - lo) } else { 0.0 };
        Self {
            lift: pelvis.z - mean_z,
            depth,
        }
    }

    pub fn estimate(
        &self,
        cloud: &PointCloud,
        lidar_origin: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        if cloud.is_empty() {
            return Err(Error::validation(
                "cannot estimate a hip center from an empty cloud",
            ));
        }
        let c = cloud.points.iter().sum::<Vector3<f64>>() / cloud.len() as f64;
        let mut away = Vector3::new(c.x - lidar_origin.x, c.y - lidar_origin.y, 0.0);
        let n = away.norm();
        if n > 0.0 {
            away /= n;
        }
        Ok(Vector3::new(c.x, c.y, c.z + self.lift) + self.depth * away)
    }
}

pub fn hip_center_from_cloud(
    cloud: &PointCloud,
    lidar_origin: &Vector3<f64>,
    body: &ShapedBody,
) -> Result<Vector3<f64>> {
    HipEstimator::new(body).estimate(cloud, lidar_origin)
}
