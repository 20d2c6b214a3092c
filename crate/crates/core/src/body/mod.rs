//! Simplified SMPL-style parametric body: forward kinematics, linear blend
//! skinning, shape scaling and capsule proxies.

mod model;
pub mod rotation;
pub mod skeleton;
mod template;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use model::{
    capsule_proxies, forward_kinematics, skin_vertices, BodyParts, PosedSkeleton, ShapeAnchor,
    ShapedBody, SkinnedBody,
};
pub use skeleton::{JOINT_NAMES, NUM_BONES, NUM_JOINTS, PELVIS, SHAPE_DIM};
pub use template::TemplateOptions;

/// Ten dimensionless shape coefficients; all zero is the template body.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyShape {
    pub beta: [f64; SHAPE_DIM],
}

impl BodyShape {
    pub fn new(beta: [f64; SHAPE_DIM]) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("shape coefficients must be finite"));
        }
        Ok(Self { beta })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_slice(beta: &[f64]) -> Result<Self> {
        let arr: [f64; SHAPE_DIM] = beta.try_into().map_err(|_| {
            Error::validation(format!(
                "shape needs exactly {SHAPE_DIM} coefficients, got {}",
                beta.len()
            ))
        })?;
        Self::new(arr)
    }
}

/// Global translation (meters, world frame) plus 24 axis-angle joint
/// rotations (radians); index 0 is the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    pub translation: Vector3<f64>,
    pub pose: [Vector3<f64>; NUM_JOINTS],
}

impl PoseFrame {
    pub fn rest_at(translation: Vector3<f64>) -> Self {
        Self {
            translation,
            pose: [Vector3::zeros(); NUM_JOINTS],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.pose.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }

    /// Flat parameter view: translation first, then the 72 pose coordinates.
    pub fn to_params(&self) -> [f64; 3 + 3 * NUM_JOINTS] {
        let mut out = [0.0; 3 + 3 * NUM_JOINTS];
        out[..3].copy_from_slice(self.translation.as_slice());
        for (j, r) in self.pose.iter().enumerate() {
            out[3 + 3 * j..6 + 3 * j].copy_from_slice(r.as_slice());
        }
        out
    }

    pub fn from_params(p: &[f64]) -> Self {
        let mut pose = [Vector3::zeros(); NUM_JOINTS];
        for (j, r) in pose.iter_mut().enumerate() {
            *r = Vector3::new(p[3 + 3 * j], p[4 + 3 * j], p[5 + 3 * j]);
        }
        Self {
            translation: Vector3::new(p[0], p[1], p[2]),
            pose,
        }
    }
}

/// Number of optimizable scalars per frame.
pub const FRAME_PARAMS: usize = 3 + 3 * NUM_JOINTS;

/// `M = (T, theta, beta)`: per-frame translation and pose with one shared
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<PoseFrame>,
    pub shape: BodyShape,
    pub frame_rate: f64,
}

impl MotionSequence {
    pub fn new(frames: Vec<PoseFrame>, shape: BodyShape, frame_rate: f64) -> Result<Self> {
        let m = Self {
            frames,
            shape,
            frame_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::validation(
                "motion sequence needs at least one frame",
            ));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::validation(format!(
                "frame rate must be positive, got {}",
                self.frame_rate
            )));
        }
        if let Some(i) = self.frames.iter().position(|f| !f.is_finite()) {
            return Err(Error::validation(format!(
                "frame {i} has non-finite values"
            )));
        }
        BodyShape::new(self.shape.beta)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / self.frame_rate
    }
}
