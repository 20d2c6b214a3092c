use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{read_text, write_text};
use crate::body::{BodyShape, MotionSequence, PoseFrame, NUM_JOINTS, SHAPE_DIM};
use crate::error::{Error, Result};

pub const MOTION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Units {
    translation: String,
    rotation: String,
    frame_rate: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            translation: "meters".into(),
            rotation: "radians (axis-angle)".into(),
            frame_rate: "hertz".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    translation: [f64; 3],
    pose: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    version: u32,
    units: Units,
    frame_rate: f64,
    shape: Vec<f64>,
    frames: Vec<FrameFile>,
}

pub fn motion_to_string(m: &MotionSequence) -> Result<String> {
    let file = MotionFile {
        version: MOTION_FORMAT_VERSION,
        units: Units::default(),
        frame_rate: m.frame_rate,
        shape: m.shape.beta.to_vec(),
        frames: m
            .frames
            .iter()
            .map(|f| FrameFile {
                translation: f.translation.into(),
                pose: f.pose.iter().map(|r| (*r).into()).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::parse("motion", e.to_string()))
}

pub fn motion_from_str(text: &str) -> Result<MotionSequence> {
    let file: MotionFile =
        serde_json::from_str(text).map_err(|e| Error::parse("motion", e.to_string()))?;
    if file.version != MOTION_FORMAT_VERSION {
        return Err(Error::parse(
            "motion",
            format!("unsupported version {}", file.version),
        ));
    }
    if file.units != Units::default() {
        return Err(Error::parse(
            "motion",
            "units must be meters, radians (axis-angle) and hertz",
        ));
    }
    if file.shape.len() != SHAPE_DIM {
        return Err(Error::parse(
            "motion",
            format!("shape needs {SHAPE_DIM} coefficients"),
        ));
    }
    let frames = file
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.pose.len() != NUM_JOINTS {
                return Err(Error::parse(
                    "motion",
                    format!(
                        "frame {i} has {} joint rotations, expected {NUM_JOINTS}",
                        f.pose.len()
                    ),
                ));
            }
            let mut pose = [Vector3::zeros(); NUM_JOINTS];
            for (p, r) in pose.iter_mut().zip(&f.pose) {
                *p = Vector3::from(*r);
            }
            Ok(PoseFrame {
                translation: Vector3::from(f.translation),
                pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MotionSequence::new(frames, BodyShape::from_slice(&file.shape)?, file.frame_rate)
}

pub fn write_motion(path: &Path, m: &MotionSequence) -> Result<()> {
    write_text(path, &motion_to_string(m)?)
}

pub fn read_motion(path: &Path) -> Result<MotionSequence> {
    motion_from_str(&read_text(path)?)
}
