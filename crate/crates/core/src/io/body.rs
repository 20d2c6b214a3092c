use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{read_text, write_text};
use crate::body::{BodyParts, ShapeAnchor, SkinnedBody, NUM_JOINTS, SHAPE_DIM};
use crate::error::{Error, Result};

pub const BODY_FORMAT_VERSION: u32 = 1;

/// Skin weights are stored sparsely as `(joint, weight)` pairs per vertex.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyFile {
    version: u32,
    units: String,
    parent: Vec<Option<usize>>,
    rest_joints: Vec<[f64; 3]>,
    template_vertices: Vec<[f64; 3]>,
    skin_weights: Vec<Vec<(usize, f64)>>,
    shape_anchors: Vec<(usize, usize, f64)>,
    shape_dirs: Vec<[f64; SHAPE_DIM]>,
    capsule_radii: Vec<f64>,
}

pub fn body_to_string(body: &SkinnedBody) -> Result<String> {
    let p = body.parts();
    let file = BodyFile {
        version: BODY_FORMAT_VERSION,
        units: "meters".into(),
        parent: p.parent.clone(),
        rest_joints: p.rest_joints.iter().map(|&v| v.into()).collect(),
        template_vertices: p.template_vertices.iter().map(|&v| v.into()).collect(),
        skin_weights: p
            .skin_weights
            .iter()
            .map(|w| {
                w.iter()
                    .copied()
                    .enumerate()
                    .filter(|&(_, x)| x != 0.0)
                    .collect()
            })
            .collect(),
        shape_anchors: p.shape_anchors.iter().map(|a| (a.a, a.b, a.u)).collect(),
        shape_dirs: p.shape_dirs.clone(),
        capsule_radii: p.capsule_radii.clone(),
    };
    serde_json::to_string(&file).map_err(|e| Error::parse("body", e.to_string()))
}

pub fn body_from_str(text: &str) -> Result<SkinnedBody> {
    let f: BodyFile =
        serde_json::from_str(text).map_err(|e| Error::parse("body", e.to_string()))?;
    if f.version != BODY_FORMAT_VERSION {
        return Err(Error::parse(
            "body",
            format!("unsupported version {}", f.version),
        ));
    }
    if f.units != "meters" {
        return Err(Error::parse("body", "units must be meters"));
    }
    let skin_weights = f
        .skin_weights
        .iter()
        .enumerate()
        .map(|(v, pairs)| {
            let mut row = [0.0; NUM_JOINTS];
            for &(j, w) in pairs {
                *row.get_mut(j).ok_or_else(|| {
                    Error::parse("body", format!("vertex {v} weights joint {j}"))
                })? = w;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    SkinnedBody::new(BodyParts {
        parent: f.parent,
        rest_joints: f.rest_joints.into_iter().map(Vector3::from).collect(),
        template_vertices: f.template_vertices.into_iter().map(Vector3::from).collect(),
        skin_weights,
        shape_anchors: f
            .shape_anchors
            .into_iter()
            .map(|(a, b, u)| ShapeAnchor { a, b, u })
            .collect(),
        shape_dirs: f.shape_dirs,
        capsule_radii: f.capsule_radii,
    })
}

pub fn write_body(path: &Path, body: &SkinnedBody) -> Result<()> {
    write_text(path, &body_to_string(body)?)
}

pub fn read_body(path: &Path) -> Result<SkinnedBody> {
    body_from_str(&read_text(path)?)
}
