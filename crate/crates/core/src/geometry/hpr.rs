//! Hidden point removal by spherical flipping (Katz et al.): a point is
//! visible from the viewpoint iff its flipped image is a vertex of the hull
//! of all flipped points plus the viewpoint.

use nalgebra::Vector3;

use super::hull::convex_hull_with_tolerance;
use crate::error::{Error, Result};

pub const DEFAULT_HPR_GAMMA: f64 = 2.0;

/// Relative hull tolerance; scaled by the flipping radius so the test is
/// invariant under uniform scaling about the viewpoint.
const RELATIVE_EPS: f64 = 1e-12;

/// Flipping-sphere radius `10^gamma * max_i |p_i - viewpoint|`.
pub fn hpr_radius(points: &[Vector3<f64>], viewpoint: &Vector3<f64>, gamma: f64) -> f64 {
    let d_max = points
        .iter()
        .map(|p| (p - viewpoint).norm())
        .fold(0.0, f64::max);
    10f64.powf(gamma) * d_max
}

/// Sorted indices of the points visible from `viewpoint`.
pub fn hidden_point_removal(
    points: &[Vector3<f64>],
    viewpoint: &Vector3<f64>,
    gamma: f64,
) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::validation("hidden point removal on an empty cloud"));
    }
    if !gamma.is_finite() {
        return Err(Error::validation("hpr gamma must be finite"));
    }
    let rel: Vec<Vector3<f64>> = points.iter().map(|p| p - viewpoint).collect();
    if let Some(i) = rel
        .iter()
        .position(|p| p.norm() == 0.0 || !p.norm().is_finite())
    {
        return Err(Error::validation(format!(
            "point {i} coincides with the viewpoint or is not finite"
        )));
    }
    let radius = hpr_radius(points, viewpoint, gamma);
    let mut flipped: Vec<Vector3<f64>> = rel
        .iter()
        .map(|p| {
            let n = p.norm();
            p + 2.0 * (radius - n) * (p / n)
        })
        .collect();
    flipped.push(Vector3::zeros());
    let hull = convex_hull_with_tolerance(&flipped, RELATIVE_EPS * radius)?;
    Ok(hull
        .vertices
        .into_iter()
        .filter(|&i| i < points.len())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_visible() {
        let v =
            hidden_point_removal(&[Vector3::new(1.0, 0.0, 0.0)], &Vector3::zeros(), 2.0).unwrap();
        assert_eq!(v, vec![0]);
    }

    #[test]
    fn coincident_point_is_rejected() {
        let pts = [Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()];
        assert!(hidden_point_removal(&pts, &Vector3::zeros(), 2.0).is_err());
    }

    #[test]
    fn facing_grid_is_fully_visible() {
        let mut pts = Vec::new();
        for i in 0..11 {
            for j in 0..11 {
                pts.push(Vector3::new(
                    i as f64 * 0.1 - 0.5,
                    j as f64 * 0.1 - 0.5,
                    0.0,
                ));
            }
        }
        let vis = hidden_point_removal(&pts, &Vector3::new(0.0, 0.0, 3.0), 2.0).unwrap();
        assert_eq!(vis.len(), pts.len());
    }

    #[test]
    fn occluded_point_is_hidden() {
        // a point straight behind a small facing patch
        let mut pts = Vec::new();
        for i in -2..=2 {
            for j in -2..=2 {
                pts.push(Vector3::new(i as f64 * 0.05, j as f64 * 0.05, 0.0));
            }
        }
        pts.push(Vector3::new(0.0, 0.0, -0.3));
        let vis = hidden_point_removal(&pts, &Vector3::new(0.0, 0.0, 2.0), 2.0).unwrap();
        assert!(!vis.contains(&(pts.len() - 1)));
    }
}
