//! Incremental (quickhull-style) 3D convex hull with explicit handling of
//! lower-dimensional inputs.

use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

/// Coplanarity tolerance, meters.
pub const HULL_EPS: f64 = 1e-9;

/// Affine dimension of the hull. Anything below `Full` is degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullDimension {
    Point,
    Line,
    Plane,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    /// Sorted input indices of the hull's extreme points.
    pub vertices: Vec<usize>,
    /// Outward-oriented triangles (counter-clockwise seen from outside).
    /// Empty for point and line hulls; a fan triangulation for planar ones.
    pub faces: Vec<[usize; 3]>,
    pub dimension: HullDimension,
}

impl ConvexHull {
    pub fn is_degenerate(&self) -> bool {
        self.dimension != HullDimension::Full
    }
}

pub fn convex_hull_3d(points: &[Vector3<f64>]) -> Result<ConvexHull> {
    convex_hull_with_tolerance(points, HULL_EPS)
}

/// Hull with a caller-chosen coplanarity tolerance.
pub fn convex_hull_with_tolerance(points: &[Vector3<f64>], eps: f64) -> Result<ConvexHull> {
    if points.is_empty() {
        return Err(Error::validation("convex hull of an empty point set"));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::validation(
            "convex hull input has non-finite coordinates",
        ));
    }

    // extreme points along the axes, lowest index on ties
    let mut extremes = Vec::with_capacity(6);
    for axis in 0..3 {
        let mut lo = 0;
        let mut hi = 0;
        for (i, p) in points.iter().enumerate() {
            if p[axis] < points[lo][axis] {
                lo = i;
            }
            if p[axis] > points[hi][axis] {
                hi = i;
            }
        }
        extremes.push(lo);
        extremes.push(hi);
    }
    let mut a = extremes[0];
    let mut b = extremes[0];
    let mut best = -1.0;
    for &i in &extremes {
        for &j in &extremes {
            let d = (points[i] - points[j]).norm();
            if d > best {
                best = d;
                a = i.min(j);
                b = i.max(j);
            }
        }
    }
    if best <= eps {
        return Ok(ConvexHull {
            vertices: vec![0],
            faces: Vec::new(),
            dimension: HullDimension::Point,
        });
    }

    let dir = (points[b] - points[a]).normalize();
    let (c, dc) = farthest(points, |p| {
        let v = p - points[a];
        (v - dir * v.dot(&dir)).norm()
    });
    if dc <= eps {
        let (lo, _) = farthest(points, |p| -(p - points[a]).dot(&dir));
        let (hi, _) = farthest(points, |p| (p - points[a]).dot(&dir));
        let mut vertices = vec![lo, hi];
        vertices.sort_unstable();
        vertices.dedup();
        return Ok(ConvexHull {
            vertices,
            faces: Vec::new(),
            dimension: HullDimension::Line,
        });
    }

    let normal = (points[b] - points[a])
        .cross(&(points[c] - points[a]))
        .normalize();
    let (d, dd) = farthest(points, |p| (p - points[a]).dot(&normal).abs());
    if dd <= eps {
        return Ok(planar_hull(points, &points[a], &dir, &normal));
    }

    Ok(Quickhull::new(points, [a, b, c, d], eps).run())
}

/// Index of the maximum of `f`, lowest index on ties.
fn farthest(points: &[Vector3<f64>], f: impl Fn(&Vector3<f64>) -> f64) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let v = f(p);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn planar_hull(
    points: &[Vector3<f64>],
    origin: &Vector3<f64>,
    e1: &Vector3<f64>,
    normal: &Vector3<f64>,
) -> ConvexHull {
    let e2 = normal.cross(e1);
    let uv: Vec<Vector2<f64>> = points
        .iter()
        .map(|p| {
            let v = p - origin;
            Vector2::new(v.dot(e1), v.dot(&e2))
        })
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        uv[i]
            .x
            .total_cmp(&uv[j].x)
            .then(uv[i].y.total_cmp(&uv[j].y))
            .then(i.cmp(&j))
    });
    order.dedup_by(|i, j| uv[*i] == uv[*j]);
    let cross = |o: usize, a: usize, b: usize| (uv[a] - uv[o]).perp(&(uv[b] - uv[o]));
    // Andrew's monotone chain, collinear points dropped
    let mut ring: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = ring.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while ring.len() >= start + 2
                && cross(ring[ring.len() - 2], ring[ring.len() - 1], i) <= 0.0
            {
                ring.pop();
            }
            ring.push(i);
        }
        ring.pop();
    }
    let faces = (1..ring.len().saturating_sub(1))
        .map(|k| [ring[0], ring[k], ring[k + 1]])
        .collect();
    let mut vertices = ring;
    vertices.sort_unstable();
    ConvexHull {
        vertices,
        faces,
        dimension: HullDimension::Plane,
    }
}

struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

struct Quickhull<'a> {
    points: &'a [Vector3<f64>],
    eps: f64,
    faces: Vec<Face>,
    edges: HashMap<(usize, usize), usize>,
}

impl<'a> Quickhull<'a> {
    fn new(points: &'a [Vector3<f64>], simplex: [usize; 4], eps: f64) -> Self {
        let mut hull = Self {
            points,
            eps,
            faces: Vec::new(),
            edges: HashMap::new(),
        };
        let [a, b, c, d] = simplex;
        let centroid = (points[a] + points[b] + points[c] + points[d]) / 4.0;
        for tri in [[a, b, c], [a, c, d], [a, d, b], [b, d, c]] {
            let mut f = hull.make_face(tri);
            if f.normal.dot(&centroid) - f.offset > 0.0 {
                f = hull.make_face([tri[0], tri[2], tri[1]]);
            }
            hull.add_face(f);
        }
        let candidates: Vec<usize> = (0..points.len()).filter(|i| !simplex.contains(i)).collect();
        hull.assign(&candidates, 0);
        hull
    }

    fn make_face(&self, v: [usize; 3]) -> Face {
        let p = self.points;
        let n = (p[v[1]] - p[v[0]]).cross(&(p[v[2]] - p[v[0]]));
        let normal = n / n.norm();
        Face {
            v,
            normal,
            offset: normal.dot(&p[v[0]]),
            outside: Vec::new(),
            alive: true,
        }
    }

    fn add_face(&mut self, f: Face) -> usize {
        let id = self.faces.len();
        for k in 0..3 {
            self.edges.insert((f.v[k], f.v[(k + 1) % 3]), id);
        }
        self.faces.push(f);
        id
    }

    fn distance(&self, face: usize, p: usize) -> f64 {
        let f = &self.faces[face];
        f.normal.dot(&self.points[p]) - f.offset
    }

    /// Hands every point to the first live face (from `first_face` on) it
    /// lies strictly outside of; points outside no face are interior.
    fn assign(&mut self, candidates: &[usize], first_face: usize) {
        for &p in candidates {
            for f in first_face..self.faces.len() {
                if self.faces[f].alive && self.distance(f, p) > self.eps {
                    self.faces[f].outside.push(p);
                    break;
                }
            }
        }
    }

    fn run(mut self) -> ConvexHull {
        let mut cursor = 0;
        loop {
            while cursor < self.faces.len()
                && (!self.faces[cursor].alive || self.faces[cursor].outside.is_empty())
            {
                cursor += 1;
            }
            if cursor == self.faces.len() {
                break;
            }
            let face = cursor;
            let mut apex = self.faces[face].outside[0];
            let mut apex_d = self.distance(face, apex);
            for &p in &self.faces[face].outside[1..] {
                let d = self.distance(face, p);
                if d > apex_d || (d == apex_d && p < apex) {
                    apex = p;
                    apex_d = d;
                }
            }
            // orphans only ever move to faces appended after `cursor`
            self.insert(face, apex);
        }

        let faces: Vec<[usize; 3]> = self.faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
        let mut vertices: Vec<usize> = faces.iter().flatten().copied().collect();
        vertices.sort_unstable();
        vertices.dedup();
        ConvexHull {
            vertices,
            faces,
            dimension: HullDimension::Full,
        }
    }

    fn insert(&mut self, start: usize, apex: usize) {
        let mut visible = vec![start];
        let mut is_visible = HashMap::new();
        is_visible.insert(start, true);
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            let v = self.faces[f].v;
            for e in 0..3 {
                let nb = self.edges[&(v[(e + 1) % 3], v[e])];
                if is_visible.contains_key(&nb) {
                    continue;
                }
                let vis = self.distance(nb, apex) > self.eps;
                is_visible.insert(nb, vis);
                if vis {
                    visible.push(nb);
                }
            }
        }

        let mut horizon = Vec::new();
        for &f in &visible {
            let v = self.faces[f].v;
            for e in 0..3 {
                let nb = self.edges[&(v[(e + 1) % 3], v[e])];
                if !is_visible[&nb] {
                    horizon.push((v[e], v[(e + 1) % 3]));
                }
            }
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            let face = &mut self.faces[f];
            face.alive = false;
            orphans.append(&mut face.outside);
            let v = face.v;
            for e in 0..3 {
                self.edges.remove(&(v[e], v[(e + 1) % 3]));
            }
        }
        orphans.retain(|&p| p != apex);
        orphans.sort_unstable();

        let first_new = self.faces.len();
        for (a, b) in horizon {
            let f = self.make_face([a, b, apex]);
            self.add_face(f);
        }
        self.assign(&orphans, first_new);
    }
}
