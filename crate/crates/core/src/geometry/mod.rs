//! Geometric kernels used by the optimizer and the metrics.

mod capsule;
mod chamfer;
mod hpr;
mod hull;
mod kdtree;
mod mesh;
mod procrustes;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use capsule::{capsule_overlap, closest_segment_params, segment_distance, Capsule};
pub use chamfer::{chamfer_distance, chamfer_points, ChamferTarget};
pub use hpr::{hidden_point_removal, hpr_radius, DEFAULT_HPR_GAMMA};
pub use hull::{convex_hull_3d, convex_hull_with_tolerance, ConvexHull, HullDimension, HULL_EPS};
pub use kdtree::KdTree;
pub use mesh::{closest_point_on_triangle, penetration_depths, TriangleMesh};
pub use procrustes::{procrustes_align, Similarity};

/// Unordered set of 3D points, meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::validation(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Squared Euclidean distance, summed x then y then z. Every nearest-point
/// routine goes through this so exhaustive and indexed searches agree bit
/// for bit.
#[inline(always)]
pub fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}
