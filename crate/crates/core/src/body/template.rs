//! Procedural rest template: every bone (plus short extensions past the
//! head, hands and feet) is tessellated as a ring-sampled tube, and skin
//! weights blend the drivers of neighbouring tubes by surface proximity.

use nalgebra::Vector3;

use super::model::{BodyParts, ShapeAnchor, SkinnedBody};
use super::skeleton::{self, NUM_JOINTS, SHAPE_DIM};
use crate::error::Result;
use crate::geometry::segment_distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateOptions {
    /// Axial spacing between vertex rings, meters.
    pub ring_spacing: f64,
    /// Vertices per ring.
    pub ring_segments: usize,
    /// Falloff of the skin-weight blend, meters.
    pub blend_width: f64,
}

impl Default for TemplateOptions {
    fn default() -> Self {
        Self {
            ring_spacing: 0.06,
            ring_segments: 8,
            blend_width: 0.025,
        }
    }
}

struct Tube {
    start: Vector3<f64>,
    end: Vector3<f64>,
    radius: f64,
    driver: usize,
    anchor: (usize, usize),
}

impl SkinnedBody {
    /// The default 24-joint template.
    pub fn procedural(opts: &TemplateOptions) -> Result<Self> {
        let parent = skeleton::default_parents();
        let rest = skeleton::default_rest_joints();
        let children: Vec<usize> = (0..NUM_JOINTS).filter(|&j| parent[j].is_some()).collect();
        let mesh_radii: Vec<f64> = children
            .iter()
            .map(|&c| skeleton::default_mesh_radius(c))
            .collect();
        let shape_dirs: Vec<[f64; SHAPE_DIM]> = children
            .iter()
            .map(|&c| skeleton::default_shape_dirs(c))
            .collect();
        let caps: Vec<f64> = children
            .iter()
            .map(|&c| skeleton::default_capsule_radius(c))
            .collect();
        let caps = shrink_capsules(&parent, &rest, &caps);
        Self::from_skeleton(parent, rest, &mesh_radii, caps, shape_dirs, opts)
    }

    /// Builds the tube mesh and weights for an arbitrary skeleton; per-bone
    /// arrays are in bone order (increasing child joint).
    pub fn from_skeleton(
        parent: Vec<Option<usize>>,
        rest_joints: Vec<Vector3<f64>>,
        mesh_radii: &[f64],
        capsule_radii: Vec<f64>,
        shape_dirs: Vec<[f64; SHAPE_DIM]>,
        opts: &TemplateOptions,
    ) -> Result<Self> {
        let mut tubes = Vec::new();
        let mut bone = 0;
        for c in 0..NUM_JOINTS.min(parent.len()) {
            if let Some(p) = parent[c] {
                tubes.push(Tube {
                    start: rest_joints[p],
                    end: rest_joints[c],
                    radius: mesh_radii[bone],
                    driver: p,
                    anchor: (p, c),
                });
                bone += 1;
            }
        }
        for leaf in 0..NUM_JOINTS.min(parent.len()) {
            let is_leaf = !parent.iter().any(|p| *p == Some(leaf));
            if let (true, Some((ext, radius))) = (is_leaf, skeleton::leaf_extension(leaf)) {
                tubes.push(Tube {
                    start: rest_joints[leaf],
                    end: rest_joints[leaf] + ext,
                    radius,
                    driver: leaf,
                    anchor: (leaf, leaf),
                });
            }
        }

        let mut vertices = Vec::new();
        let mut owner = Vec::new();
        let mut anchors = Vec::new();
        for (t, tube) in tubes.iter().enumerate() {
            let axis = tube.end - tube.start;
            let len = axis.norm();
            let dir = axis / len;
            let (e1, e2) = orthonormal_pair(&dir);
            let rings = ((len / opts.ring_spacing).ceil() as usize).max(2);
            for k in 0..rings {
                let u = (k as f64 + 0.5) / rings as f64;
                let phase = if k % 2 == 0 { 0.0 } else { 0.5 };
                for m in 0..opts.ring_segments {
                    let phi =
                        std::f64::consts::TAU * (m as f64 + phase) / opts.ring_segments as f64;
                    let v = tube.start + u * axis + tube.radius * (phi.cos() * e1 + phi.sin() * e2);
                    vertices.push(v);
                    owner.push(t);
                    anchors.push(ShapeAnchor {
                        a: tube.anchor.0,
                        b: tube.anchor.1,
                        u: if tube.anchor.0 == tube.anchor.1 {
                            0.0
                        } else {
                            u
                        },
                    });
                }
            }
        }

        let touches = |a: &Tube, b: &Tube| {
            a.anchor.0 == b.anchor.0
                || a.anchor.0 == b.anchor.1
                || a.anchor.1 == b.anchor.0
                || a.anchor.1 == b.anchor.1
        };
        let skin_weights = vertices
            .iter()
            .zip(&owner)
            .map(|(v, &t)| {
                let mut row = [0.0; NUM_JOINTS];
                for other in tubes.iter().filter(|o| touches(&tubes[t], o)) {
                    let gap = (segment_distance_point(v, &other.start, &other.end) - other.radius)
                        .max(0.0);
                    let w = (-(gap / opts.blend_width).powi(2)).exp();
                    if w > 1e-3 {
                        row[other.driver] += w;
                    }
                }
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|w| *w /= sum);
                row
            })
            .collect();

        SkinnedBody::new(BodyParts {
            parent,
            rest_joints,
            template_vertices: vertices,
            skin_weights,
            shape_anchors: anchors,
            shape_dirs,
            capsule_radii,
        })
    }
}

/// Caps each radius at 45% of the bone's distance to any non-adjacent bone.
fn shrink_capsules(parent: &[Option<usize>], rest: &[Vector3<f64>], radii: &[f64]) -> Vec<f64> {
    let bones: Vec<(usize, usize)> = (0..NUM_JOINTS)
        .filter_map(|c| parent[c].map(|p| (p, c)))
        .collect();
    bones
        .iter()
        .enumerate()
        .map(|(b, &(p0, c0))| {
            let nearest = bones
                .iter()
                .filter(|&&(p1, c1)| p0 != p1 && p0 != c1 && c0 != p1 && c0 != c1)
                .map(|&(p1, c1)| segment_distance(&rest[p0], &rest[c0], &rest[p1], &rest[c1]))
                .fold(f64::INFINITY, f64::min);
            radii[b].min(0.45 * nearest)
        })
        .collect()
}

fn segment_distance_point(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

fn orthonormal_pair(dir: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if dir.x.abs() <= dir.y.abs() && dir.x.abs() <= dir.z.abs() {
        Vector3::x()
    } else if dir.y.abs() <= dir.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = dir.cross(&helper).normalize();
    let e2 = dir.cross(&e1);
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_size_is_in_range() {
        let b = SkinnedBody::procedural(&TemplateOptions::default()).unwrap();
        let v = b.vertex_count();
        assert!((600..=2000).contains(&v), "V = {v}");
    }

    #[test]
    fn denser_template_has_more_vertices() {
        let coarse = SkinnedBody::procedural(&TemplateOptions::default()).unwrap();
        let fine = SkinnedBody::procedural(&TemplateOptions {
            ring_spacing: 0.04,
            ring_segments: 10,
            ..Default::default()
        })
        .unwrap();
        assert!(fine.vertex_count() > coarse.vertex_count());
    }

    #[test]
    fn weights_are_row_stochastic() {
        let b = SkinnedBody::procedural(&TemplateOptions::default()).unwrap();
        for row in &b.parts().skin_weights {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|w| *w >= 0.0));
        }
    }
}
