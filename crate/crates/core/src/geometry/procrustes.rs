use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// `y ~ scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Sum of squared residuals after alignment, m^2.
    pub residual: f64,
}

impl Similarity {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Least-squares similarity aligning `x` onto `y` (Umeyama): centroids,
/// cross-covariance SVD, reflection guard, closed-form scale.
pub fn procrustes_align(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> Result<Similarity> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "procrustes needs paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::validation("procrustes needs at least 3 point pairs"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vector3<f64>>() / n;
    let my = y.iter().sum::<Vector3<f64>>() / n;
    let var_x: f64 = x.iter().map(|p| (p - mx).norm_squared()).sum();
    if !(var_x > 1e-300) {
        return Err(Error::validation("procrustes source points all coincide"));
    }
    let cov = x.iter().zip(y).fold(Matrix3::zeros(), |acc, (p, q)| {
        acc + (q - my) * (p - mx).transpose()
    });
    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let trace: f64 = (0..3).map(|k| svd.singular_values[k] * d[(k, k)]).sum();
    let scale = trace / var_x;
    if !(scale > 0.0) {
        return Err(Error::validation(
            "procrustes produced a non-positive scale",
        ));
    }
    let translation = my - scale * rotation * mx;
    let mut sim = Similarity {
        scale,
        rotation,
        translation,
        residual: 0.0,
    };
    sim.residual = x
        .iter()
        .zip(y)
        .map(|(p, q)| (sim.apply(p) - q).norm_squared())
        .sum();
    Ok(sim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::rotation::axis_angle_to_matrix;

    fn points() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.2, 0.0),
            Vector3::new(0.3, 1.0, 0.1),
            Vector3::new(0.1, 0.4, 1.2),
            Vector3::new(-0.5, 0.2, 0.3),
        ]
    }

    #[test]
    fn recovers_exact_similarity() {
        let r0 = axis_angle_to_matrix(&Vector3::new(0.3, -1.1, 0.7));
        let t0 = Vector3::new(1.0, -2.0, 0.5);
        let x = points();
        let y: Vec<_> = x.iter().map(|p| 2.0 * r0 * p + t0).collect();
        let s = procrustes_align(&x, &y).unwrap();
        assert!((s.scale - 2.0).abs() < 1e-12);
        assert!((s.rotation - r0).norm() < 1e-12);
        assert!((s.translation - t0).norm() < 1e-12);
        assert!(s.residual < 1e-9);
    }

    #[test]
    fn identity_on_equal_sets() {
        let x = points();
        let s = procrustes_align(&x, &x).unwrap();
        assert!((s.scale - 1.0).abs() < 1e-12);
        assert!((s.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(s.residual < 1e-20);
    }

    #[test]
    fn reflection_is_never_returned() {
        let x = points();
        let y: Vec<_> = x.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let s = procrustes_align(&x, &y).unwrap();
        assert!((s.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_input_still_gives_a_rotation() {
        let x: Vec<_> = (0..4).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let y: Vec<_> = (0..4).map(|i| Vector3::new(0.0, i as f64, 0.0)).collect();
        let s = procrustes_align(&x, &y).unwrap();
        assert!((s.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!(s.residual < 1e-18);
    }

    #[test]
    fn coincident_and_short_inputs_fail() {
        let x = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        assert!(procrustes_align(&x, &points()[..4]).is_err());
        assert!(procrustes_align(&points()[..2], &points()[..2]).is_err());
    }
}
