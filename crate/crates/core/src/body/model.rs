use nalgebra::{Matrix3, Vector3};

use super::rotation::axis_angle_to_matrix;
use super::skeleton::{NUM_BONES, NUM_JOINTS, SHAPE_DIM};
use super::{BodyShape, PoseFrame};
use crate::error::{Error, Result};
use crate::geometry::Capsule;

/// Tolerance on each skin-weight row sum.
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Where a template vertex sits along the skeleton; shape changes move it
/// by `(1 - u) * d(a) + u * d(b)` where `d(j)` is joint `j`'s displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeAnchor {
    pub a: usize,
    pub b: usize,
    pub u: f64,
}

/// Raw body definition, validated by [`SkinnedBody::new`].
///
/// Per-bone arrays (`shape_dirs`, `capsule_radii`) are indexed by bone, and
/// bone `b` ends at the `b`-th non-root joint in increasing joint order.
#[derive(Debug, Clone)]
pub struct BodyParts {
    pub parent: Vec<Option<usize>>,
    pub rest_joints: Vec<Vector3<f64>>,
    pub template_vertices: Vec<Vector3<f64>>,
    pub skin_weights: Vec<[f64; NUM_JOINTS]>,
    pub shape_anchors: Vec<ShapeAnchor>,
    pub shape_dirs: Vec<[f64; SHAPE_DIM]>,
    pub capsule_radii: Vec<f64>,
}

/// Kinematic tree, rest template mesh, skinning weights and shape
/// directions. Immutable once validated.
#[derive(Debug, Clone)]
pub struct SkinnedBody {
    parts: BodyParts,
    root: usize,
    /// Parents before children.
    order: Vec<usize>,
    /// `(parent, child)` per bone.
    bones: Vec<(usize, usize)>,
    sparse_weights: Vec<Vec<(usize, f64)>>,
}

impl SkinnedBody {
    pub fn new(parts: BodyParts) -> Result<Self> {
        let (root, order) = validate_tree(&parts.parent)?;
        if parts.rest_joints.len() != NUM_JOINTS {
            return Err(Error::validation(format!(
                "expected {NUM_JOINTS} rest joints, got {}",
                parts.rest_joints.len()
            )));
        }
        if parts
            .rest_joints
            .iter()
            .any(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::validation("rest joints must be finite"));
        }
        let bones: Vec<(usize, usize)> = (0..NUM_JOINTS)
            .filter_map(|c| parts.parent[c].map(|p| (p, c)))
            .collect();
        for &(p, c) in &bones {
            let len = (parts.rest_joints[c] - parts.rest_joints[p]).norm();
            if len <= 0.0 || !len.is_finite() {
                return Err(Error::validation(format!(
                    "rest bone {p}->{c} has non-positive length"
                )));
            }
        }
        let v = parts.template_vertices.len();
        if parts.skin_weights.len() != v || parts.shape_anchors.len() != v {
            return Err(Error::validation(format!(
                "{v} template vertices but {} weight rows and {} shape anchors",
                parts.skin_weights.len(),
                parts.shape_anchors.len()
            )));
        }
        if parts
            .template_vertices
            .iter()
            .any(|p| !p.iter().all(|x| x.is_finite()))
        {
            return Err(Error::validation("template vertices must be finite"));
        }
        let mut sparse_weights = Vec::with_capacity(v);
        for (i, row) in parts.skin_weights.iter().enumerate() {
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::validation(format!(
                    "skin weight row {i} has negative or non-finite entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::validation(format!(
                    "skin weight row {i} sums to {sum}, not 1"
                )));
            }
            sparse_weights.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(j, w)| (j, *w))
                    .collect(),
            );
        }
        for (i, a) in parts.shape_anchors.iter().enumerate() {
            if a.a >= NUM_JOINTS || a.b >= NUM_JOINTS || !(0.0..=1.0).contains(&a.u) {
                return Err(Error::validation(format!(
                    "shape anchor {i} is out of range"
                )));
            }
        }
        if parts.shape_dirs.len() != NUM_BONES {
            return Err(Error::validation(format!(
                "expected {NUM_BONES} shape direction rows, got {}",
                parts.shape_dirs.len()
            )));
        }
        if parts.shape_dirs.iter().flatten().any(|d| !d.is_finite()) {
            return Err(Error::validation("shape directions must be finite"));
        }
        if parts.capsule_radii.len() != NUM_BONES
            || parts
                .capsule_radii
                .iter()
                .any(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(Error::validation(format!(
                "need {NUM_BONES} positive capsule radii"
            )));
        }
        Ok(Self {
            parts,
            root,
            order,
            bones,
            sparse_weights,
        })
    }

    pub fn parts(&self) -> &BodyParts {
        &self.parts
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parts.parent[j]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn rest_joints(&self) -> &[Vector3<f64>] {
        &self.parts.rest_joints
    }

    pub fn template_vertices(&self) -> &[Vector3<f64>] {
        &self.parts.template_vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.parts.template_vertices.len()
    }

    /// `(parent, child)` joint pairs, one per bone.
    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn capsule_radius(&self, bone: usize) -> f64 {
        self.parts.capsule_radii[bone]
    }

    /// Non-zero skinning weights of vertex `v` as `(joint, weight)`.
    pub fn vertex_weights(&self, v: usize) -> &[(usize, f64)] {
        &self.sparse_weights[v]
    }

    /// Pairs of bones that share no joint; the only pairs checked for
    /// self-penetration.
    pub fn non_adjacent_bone_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.bones.len() {
            for b in a + 1..self.bones.len() {
                let (p0, c0) = self.bones[a];
                let (p1, c1) = self.bones[b];
                if p0 != p1 && p0 != c1 && c0 != p1 && c0 != c1 {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Relative scale of each bone under `shape`, linear in beta.
    pub fn bone_scales(&self, shape: &BodyShape) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(NUM_BONES);
        for (b, dirs) in self.parts.shape_dirs.iter().enumerate() {
            let s = 1.0
                + dirs
                    .iter()
                    .zip(&shape.beta)
                    .map(|(d, x)| d * x)
                    .sum::<f64>();
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::validation(format!(
                    "shape gives non-positive scale {s} for bone {b}"
                )));
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Precomputes shape-dependent rest geometry.
    pub fn shaped(&self, shape: &BodyShape) -> Result<ShapedBody<'_>> {
        let scales = self.bone_scales(shape)?;
        let rest = &self.parts.rest_joints;
        let mut joints = vec![Vector3::zeros(); NUM_JOINTS];
        joints[self.root] = rest[self.root];
        let mut offsets = [Vector3::zeros(); NUM_JOINTS];
        let mut bone_of = [usize::MAX; NUM_JOINTS];
        for (b, &(_, c)) in self.bones.iter().enumerate() {
            bone_of[c] = b;
        }
        for &j in &self.order {
            if let Some(p) = self.parts.parent[j] {
                offsets[j] = scales[bone_of[j]] * (rest[j] - rest[p]);
                joints[j] = joints[p] + offsets[j];
            }
        }
        let disp: Vec<Vector3<f64>> = joints.iter().zip(rest).map(|(s, r)| s - r).collect();
        let vertices = self
            .parts
            .template_vertices
            .iter()
            .zip(&self.parts.shape_anchors)
            .map(|(v, a)| v + (1.0 - a.u) * disp[a.a] + a.u * disp[a.b])
            .collect();
        Ok(ShapedBody {
            body: self,
            joints,
            offsets,
            vertices,
        })
    }
}

fn validate_tree(parent: &[Option<usize>]) -> Result<(usize, Vec<usize>)> {
    if parent.len() != NUM_JOINTS {
        return Err(Error::Structure(format!(
            "expected {NUM_JOINTS} parent entries, got {}",
            parent.len()
        )));
    }
    let roots: Vec<usize> = (0..NUM_JOINTS).filter(|&j| parent[j].is_none()).collect();
    if roots != [0] {
        return Err(Error::Structure(format!(
            "tree must have joint 0 as its only root, roots are {roots:?}"
        )));
    }
    for (j, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            if p >= NUM_JOINTS {
                return Err(Error::Structure(format!(
                    "joint {j} has out-of-range parent {p}"
                )));
            }
            if p == j {
                return Err(Error::Structure(format!("joint {j} is its own parent")));
            }
        }
    }
    // depth-first from the root; anything unreached sits on a cycle
    let mut order = Vec::with_capacity(NUM_JOINTS);
    let mut stack = vec![0usize];
    while let Some(j) = stack.pop() {
        order.push(j);
        for c in (0..NUM_JOINTS).rev() {
            if parent[c] == Some(j) {
                stack.push(c);
            }
        }
    }
    if order.len() != NUM_JOINTS {
        return Err(Error::Structure(
            "parent links contain a cycle or a detached joint".into(),
        ));
    }
    Ok((0, order))
}

/// Joint positions and world rotations of one posed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosedSkeleton {
    pub joints: [Vector3<f64>; NUM_JOINTS],
    pub rotations: [Matrix3<f64>; NUM_JOINTS],
}

/// A [`SkinnedBody`] with a fixed shape.
#[derive(Debug, Clone)]
pub struct ShapedBody<'a> {
    body: &'a SkinnedBody,
    joints: Vec<Vector3<f64>>,
    offsets: [Vector3<f64>; NUM_JOINTS],
    vertices: Vec<Vector3<f64>>,
}

impl<'a> ShapedBody<'a> {
    pub fn body(&self) -> &'a SkinnedBody {
        self.body
    }

    /// Shaped rest joints, root at the template origin.
    pub fn rest_joints(&self) -> &[Vector3<f64>] {
        &self.joints
    }

    pub fn rest_vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn pose(&self, frame: &PoseFrame) -> PosedSkeleton {
        let body = self.body;
        let mut joints = [Vector3::zeros(); NUM_JOINTS];
        let mut rotations = [Matrix3::identity(); NUM_JOINTS];
        for &j in &body.order {
            let local = axis_angle_to_matrix(&frame.pose[j]);
            match body.parts.parent[j] {
                None => {
                    rotations[j] = local;
                    joints[j] = frame.translation;
                }
                Some(p) => {
                    rotations[j] = rotations[p] * local;
                    joints[j] = joints[p] + rotations[p] * self.offsets[j];
                }
            }
        }
        PosedSkeleton { joints, rotations }
    }

    pub fn skin_into(&self, posed: &PosedSkeleton, out: &mut Vec<Vector3<f64>>) {
        out.clear();
        out.extend((0..self.vertices.len()).map(|v| self.skin_vertex(posed, v)));
    }

    /// Writes only the listed vertices into `out`, which must hold one slot
    /// per template vertex.
    pub fn skin_subset(&self, posed: &PosedSkeleton, indices: &[usize], out: &mut [Vector3<f64>]) {
        for &v in indices {
            out[v] = self.skin_vertex(posed, v);
        }
    }

    #[inline]
    fn skin_vertex(&self, posed: &PosedSkeleton, v: usize) -> Vector3<f64> {
        let rest = &self.vertices[v];
        self.body.sparse_weights[v]
            .iter()
            .fold(Vector3::zeros(), |acc, &(j, w)| {
                acc + w * (posed.rotations[j] * (rest - self.joints[j]) + posed.joints[j])
            })
    }

    pub fn skin(&self, posed: &PosedSkeleton) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.vertices.len());
        self.skin_into(posed, &mut out);
        out
    }

    pub fn capsules(&self, posed: &PosedSkeleton) -> Vec<Capsule> {
        self.body
            .bones
            .iter()
            .enumerate()
            .map(|(b, &(p, c))| Capsule {
                p0: posed.joints[p],
                p1: posed.joints[c],
                radius: self.body.parts.capsule_radii[b],
            })
            .collect()
    }
}

/// Posed joint positions, world frame.
pub fn forward_kinematics(
    body: &SkinnedBody,
    frame: &PoseFrame,
    shape: &BodyShape,
) -> Result<[Vector3<f64>; NUM_JOINTS]> {
    check_frame(frame)?;
    Ok(body.shaped(shape)?.pose(frame).joints)
}

/// Linear-blend-skinned vertices, world frame.
pub fn skin_vertices(
    body: &SkinnedBody,
    frame: &PoseFrame,
    shape: &BodyShape,
) -> Result<Vec<Vector3<f64>>> {
    check_frame(frame)?;
    let shaped = body.shaped(shape)?;
    Ok(shaped.skin(&shaped.pose(frame)))
}

/// One capsule per bone, spanning the posed parent and child joints.
pub fn capsule_proxies(
    body: &SkinnedBody,
    frame: &PoseFrame,
    shape: &BodyShape,
) -> Result<Vec<Capsule>> {
    check_frame(frame)?;
    let shaped = body.shaped(shape)?;
    Ok(shaped.capsules(&shaped.pose(frame)))
}

fn check_frame(frame: &PoseFrame) -> Result<()> {
    if frame.is_finite() {
        Ok(())
    } else {
        Err(Error::validation("pose frame has non-finite values"))
    }
}
