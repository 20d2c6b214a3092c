use nalgebra::Vector3;

use super::{dist2, KdTree, PointCloud};
use crate::error::{Error, Result};

/// Below this many point pairs an exhaustive scan beats building trees.
const EXHAUSTIVE_PAIRS: usize = 4096;

/// Two-sided Chamfer distance: mean squared nearest-neighbour distance from
/// `a` to `b` plus the same from `b` to `a`, in m^2.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation(
            "chamfer distance needs two non-empty clouds",
        ));
    }
    Ok(chamfer_points(&a.points, &b.points))
}

/// Unchecked variant of [`chamfer_distance`]; both slices must be non-empty.
pub fn chamfer_points(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    debug_assert!(!a.is_empty() && !b.is_empty());
    if a.len() * b.len() <= EXHAUSTIVE_PAIRS {
        let (sa, sb) = exhaustive_sums(a, b);
        return sa / a.len() as f64 + sb / b.len() as f64;
    }
    let ta = KdTree::new(a);
    let tb = KdTree::new(b);
    let sa: f64 = a.iter().map(|p| tb.nearest(p).unwrap().1).sum();
    let sb: f64 = b.iter().map(|q| ta.nearest(q).unwrap().1).sum();
    sa / a.len() as f64 + sb / b.len() as f64
}

fn exhaustive_sums(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> (f64, f64) {
    let mut col = vec![f64::INFINITY; b.len()];
    let mut sa = 0.0;
    for p in a {
        let mut row = f64::INFINITY;
        for (q, c) in b.iter().zip(col.iter_mut()) {
            let d = dist2(p, q);
            row = row.min(d);
            *c = c.min(d);
        }
        sa += row;
    }
    (sa, col.iter().sum())
}

/// A fixed cloud (typically one LiDAR frame) with its spatial index built
/// once, scored against many candidate vertex sets.
#[derive(Debug, Clone)]
pub struct ChamferTarget {
    points: Vec<Vector3<f64>>,
    tree: KdTree,
}

impl ChamferTarget {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("chamfer target cloud is empty"));
        }
        let tree = KdTree::new(&points);
        Ok(Self { points, tree })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Equals `chamfer_points(self.points(), other)` exactly.
    pub fn distance_to(&self, other: &[Vector3<f64>]) -> f64 {
        debug_assert!(!other.is_empty());
        if self.points.len() * other.len() <= EXHAUSTIVE_PAIRS {
            return chamfer_points(&self.points, other);
        }
        let other_tree = KdTree::new(other);
        let sa: f64 = self
            .points
            .iter()
            .map(|p| other_tree.nearest(p).unwrap().1)
            .sum();
        let sb: f64 = other.iter().map(|q| self.tree.nearest(q).unwrap().1).sum();
        sa / self.points.len() as f64 + sb / other.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = PointCloud::new(cloud(&mut rng, 50)).unwrap();
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair() {
        let a = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        let b = PointCloud::new(vec![Vector3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        let a = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        assert!(chamfer_distance(&a, &PointCloud::default()).is_err());
    }

    #[test]
    fn indexed_and_exhaustive_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = cloud(&mut rng, 300);
        let b = cloud(&mut rng, 200);
        let (sa, sb) = exhaustive_sums(&a, &b);
        let brute = sa / 300.0 + sb / 200.0;
        assert_eq!(chamfer_points(&a, &b), brute);
        let target = ChamferTarget::new(a.clone()).unwrap();
        assert_eq!(target.distance_to(&b), brute);
    }
}
