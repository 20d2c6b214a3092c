use nalgebra::Vector3;

use super::dist2;

/// Exact nearest-neighbour index over a fixed point set.
///
/// The tree is implicit: each subslice stores its splitting point at the
/// middle, with the split axis cycling x, y, z by depth.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    index: Vec<usize>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: order.iter().map(|&i| points[i]).collect(),
            index: order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(original index, squared distance)` of the closest point, or `None`
    /// for an empty tree.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), 0, &mut best);
        Some((self.index[best.0], best.1))
    }

    fn search(
        &self,
        q: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut (usize, f64),
    ) {
        if hi - lo <= 8 {
            for i in lo..hi {
                let d = dist2(q, &self.points[i]);
                if d < best.1
                    || (d == best.1
                        && self.index[i] < self.index.get(best.0).copied().unwrap_or(usize::MAX))
                {
                    *best = (i, d);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % 3;
        let p = &self.points[mid];
        let d = dist2(q, p);
        if d < best.1
            || (d == best.1
                && self.index[mid] < self.index.get(best.0).copied().unwrap_or(usize::MAX))
        {
            *best = (mid, d);
        }
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if delta * delta <= best.1 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[Vector3<f64>], order: &mut [usize], depth: usize) {
    if order.len() <= 8 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 5, 9, 40, 300] {
            let pts: Vec<Vector3<f64>> = (0..n)
                .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let tree = KdTree::new(&pts);
            for _ in 0..200 {
                let q = Vector3::new(rng.random::<f64>() * 1.4 - 0.2, rng.random(), rng.random());
                let (_, d) = tree.nearest(&q).unwrap();
                let brute = pts
                    .iter()
                    .map(|p| dist2(&q, p))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(d, brute);
            }
        }
    }

    #[test]
    fn empty_tree_has_no_neighbour() {
        assert!(KdTree::new(&[]).nearest(&Vector3::zeros()).is_none());
    }
}
