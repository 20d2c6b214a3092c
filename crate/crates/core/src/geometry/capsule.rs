use nalgebra::Vector3;

/// Segment `p0`-`p1` swept by a sphere of `radius` meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub radius: f64,
}

/// Penetration depth `max(0, r_a + r_b - d)` with `d` the distance between
/// the two axes.
pub fn capsule_overlap(a: &Capsule, b: &Capsule) -> f64 {
    let d = segment_distance(&a.p0, &a.p1, &b.p0, &b.p1);
    (a.radius + b.radius - d).max(0.0)
}

pub fn segment_distance(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    q0: &Vector3<f64>,
    q1: &Vector3<f64>,
) -> f64 {
    let (s, t) = closest_segment_params(p0, p1, q0, q1);
    ((p0 + s * (p1 - p0)) - (q0 + t * (q1 - q0))).norm()
}

/// Parameters `(s, t)` in `[0,1]^2` of the closest points on two segments
/// (Ericson, Real-Time Collision Detection 5.1.9).
pub fn closest_segment_params(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    q0: &Vector3<f64>,
    q1: &Vector3<f64>,
) -> (f64, f64) {
    const EPS: f64 = 1e-15;
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    if a <= EPS && e <= EPS {
        return (0.0, 0.0);
    }
    if a <= EPS {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= EPS {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > EPS * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(a: [f64; 3], b: [f64; 3], r: f64) -> Capsule {
        Capsule {
            p0: Vector3::from(a),
            p1: Vector3::from(b),
            radius: r,
        }
    }

    #[test]
    fn far_apart_capsules_do_not_overlap() {
        let a = cap([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.1);
        let b = cap([0.0, 5.0, 0.0], [1.0, 5.0, 0.0], 0.1);
        assert_eq!(capsule_overlap(&a, &b), 0.0);
    }

    #[test]
    fn parallel_axes() {
        let a = cap([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.1);
        let b = cap([0.0, 0.15, 0.0], [1.0, 0.15, 0.0], 0.1);
        assert!((capsule_overlap(&a, &b) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn crossing_segments_touch() {
        let d = segment_distance(
            &Vector3::new(-1.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, -1.0, 0.0),
            &Vector3::new(0.0, 1.0, 0.0),
        );
        assert_eq!(d, 0.0);
    }

    #[test]
    fn endpoint_regions() {
        let d = segment_distance(
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(2.0, 1.0, 0.0),
            &Vector3::new(3.0, 1.0, 0.0),
        );
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }
}
