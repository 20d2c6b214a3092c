//! Axis-angle helpers. Rotations are stored as scaled axes and converted
//! with Rodrigues' formula whenever they have to be composed.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Rodrigues' formula: rotation matrix of the axis-angle vector `aa`.
pub fn axis_angle_to_matrix(aa: &Vector3<f64>) -> Matrix3<f64> {
    let theta = aa.norm();
    if theta < 1e-12 {
        // second-order expansion keeps the map smooth through zero
        let k = cross_matrix(aa);
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let axis = aa / theta;
    let k = cross_matrix(&axis);
    Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * k * k
}

/// Inverse of [`axis_angle_to_matrix`], angle in `[0, pi]`.
pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Vector3<f64> {
    let rot = Rotation3::from_matrix_unchecked(*r);
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    quaternion_to_axis_angle(&q)
}

fn quaternion_to_axis_angle(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < 1e-15 {
        return 2.0 * v;
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

/// Angle of the relative rotation `a^T b`, robust near zero.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rel));
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Skew-symmetric matrix with `cross_matrix(a) * b == a.cross(&b)`.
pub fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation about +z by `angle` radians.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    axis_angle_to_matrix(&Vector3::new(0.0, 0.0, angle))
}

/// Spherical interpolation between two axis-angle rotations.
pub fn slerp_axis_angle(a: &Vector3<f64>, b: &Vector3<f64>, t: f64) -> Vector3<f64> {
    let qa = UnitQuaternion::from_scaled_axis(*a);
    let qb = UnitQuaternion::from_scaled_axis(*b);
    let q = qa
        .try_slerp(&qb, t, 1e-12)
        .unwrap_or(if t < 0.5 { qa } else { qb });
    quaternion_to_axis_angle(&q)
}
