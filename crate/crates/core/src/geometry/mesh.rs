use nalgebra::Vector3;

use super::dist2;
use crate::error::{Error, Result};

/// Triangle soup with one outward unit normal per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector3<f64>>,
    // bounding sphere per triangle, used to skip far triangles
    centers: Vec<Vector3<f64>>,
    radii: Vec<f64>,
}

impl TriangleMesh {
    /// Normals from counter-clockwise winding seen from outside.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        check_indices(&vertices, &triangles)?;
        let normals = triangles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let n = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]]));
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    Ok(n / len)
                } else {
                    Err(Error::validation(format!("triangle {i} is degenerate")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(vertices, triangles, normals))
    }

    /// Uses the given normals, which must be unit length within 1e-9.
    pub fn with_normals(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        normals: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        check_indices(&vertices, &triangles)?;
        if normals.len() != triangles.len() {
            return Err(Error::validation(format!(
                "{} normals for {} triangles",
                normals.len(),
                triangles.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::validation(format!("normal {i} is not unit length")));
        }
        Ok(Self::assemble(vertices, triangles, normals))
    }

    fn assemble(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        normals: Vec<Vector3<f64>>,
    ) -> Self {
        let centers: Vec<Vector3<f64>> = triangles
            .iter()
            .map(|t| (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0)
            .collect();
        let radii = triangles
            .iter()
            .zip(&centers)
            .map(|(t, c)| {
                t.iter()
                    .map(|&i| (vertices[i] - c).norm())
                    .fold(0.0, f64::max)
            })
            .collect();
        Self {
            vertices,
            triangles,
            normals,
            centers,
            radii,
        }
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Square ground patch at height `z`, normals +z, side `size` meters
    /// centered on (`cx`, `cy`).
    pub fn ground_plane(cx: f64, cy: f64, size: f64, z: f64) -> Self {
        let h = size / 2.0;
        let v = vec![
            Vector3::new(cx - h, cy - h, z),
            Vector3::new(cx + h, cy - h, z),
            Vector3::new(cx + h, cy + h, z),
            Vector3::new(cx - h, cy + h, z),
        ];
        Self::new(v, vec![[0, 1, 2], [0, 2, 3]]).expect("valid quad")
    }

    /// Closed axis-aligned box with outward normals.
    pub fn axis_aligned_box(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if (0..3).any(|k| max[k] <= min[k]) {
            return Err(Error::validation("box max must exceed min on every axis"));
        }
        let mut v = Vec::with_capacity(8);
        for i in 0..8 {
            v.push(Vector3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            ));
        }
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let tris = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self::new(v, tris)
    }

    /// Concatenation of several meshes.
    pub fn merged(parts: &[TriangleMesh]) -> Self {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut normals = Vec::new();
        for m in parts {
            let base = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            triangles.extend(
                m.triangles
                    .iter()
                    .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
            );
            normals.extend_from_slice(&m.normals);
        }
        Self::assemble(vertices, triangles, normals)
    }

    /// Rigidly transformed copy.
    pub fn transformed(
        &self,
        rotation: &nalgebra::Matrix3<f64>,
        translation: &Vector3<f64>,
    ) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| rotation * v + translation)
            .collect();
        let normals = self.normals.iter().map(|n| rotation * n).collect();
        Self::assemble(vertices, self.triangles.clone(), normals)
    }

    /// Closest surface point to `p` and the index of its triangle; the lowest
    /// triangle index wins ties.
    pub fn closest_point(&self, p: &Vector3<f64>) -> Option<(Vector3<f64>, usize)> {
        let mut best: Option<(Vector3<f64>, usize, f64)> = None;
        for (i, t) in self.triangles.iter().enumerate() {
            if let Some((_, _, bd)) = best {
                let lower = ((p - self.centers[i]).norm() - self.radii[i]).max(0.0);
                if lower * lower > bd * (1.0 + 1e-12) {
                    continue;
                }
            }
            let c = closest_point_on_triangle(
                p,
                &self.vertices[t[0]],
                &self.vertices[t[1]],
                &self.vertices[t[2]],
            );
            let d = dist2(p, &c);
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((c, i, d));
            }
        }
        best.map(|(c, i, _)| (c, i))
    }

    /// Depth of `p` below the closest triangle, 0 on the outward side.
    pub fn penetration_depth(&self, p: &Vector3<f64>) -> f64 {
        match self.closest_point(p) {
            Some((c, i)) => (-(p - c).dot(&self.normals[i])).max(0.0),
            None => 0.0,
        }
    }
}

fn check_indices(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Result<()> {
    if vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(Error::validation("mesh vertices must be finite"));
    }
    if let Some(i) = triangles
        .iter()
        .position(|t| t.iter().any(|&k| k >= vertices.len()))
    {
        return Err(Error::validation(format!(
            "triangle {i} indexes past the vertex list"
        )));
    }
    Ok(())
}

/// Per-point penetration depth (meters, >= 0) into `scene`.
pub fn penetration_depths(points: &[Vector3<f64>], scene: &TriangleMesh) -> Vec<f64> {
    points.iter().map(|p| scene.penetration_depth(p)).collect()
}

/// Closest point on triangle `abc` (Ericson, Real-Time Collision Detection
/// 5.1.5).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_and_above_ground() {
        let g = TriangleMesh::ground_plane(0.0, 0.0, 4.0, 0.0);
        let d = penetration_depths(
            &[Vector3::new(0.0, 0.0, -0.1), Vector3::new(0.0, 0.0, 0.5)],
            &g,
        );
        assert!((d[0] - 0.1).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn cube_center_depth_is_half() {
        let cube = TriangleMesh::axis_aligned_box(Vector3::zeros(), Vector3::repeat(1.0)).unwrap();
        let d = cube.penetration_depth(&Vector3::repeat(0.5));
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn box_normals_point_outward() {
        let cube = TriangleMesh::axis_aligned_box(Vector3::zeros(), Vector3::repeat(1.0)).unwrap();
        let center = Vector3::repeat(0.5);
        for (t, n) in cube.triangles().iter().zip(cube.normals()) {
            assert!((cube.vertices()[t[0]] - center).dot(n) > 0.0);
        }
    }

    #[test]
    fn bad_normals_are_rejected() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(TriangleMesh::with_normals(
            v.clone(),
            vec![[0, 1, 2]],
            vec![Vector3::new(0.0, 0.0, 2.0)]
        )
        .is_err());
        assert!(TriangleMesh::with_normals(v, vec![[0, 1, 5]], vec![Vector3::z()]).is_err());
    }
}
