//! Bounding-volume hierarchy over triangles with exact Möller–Trumbore hits.

use nalgebra::{Point3, Vector3};

use crate::cloud::TriangleMesh;

const LEAF_TRIS: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn union(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    /// Slab test; returns the entry distance if the ray hits before `t_max`.
    fn hit(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.lo[a] - origin[a]) * inv_dir[a];
            let mut far = (self.hi[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf on a slab boundary means "inside"; skip it.
            if near.is_nan() || far.is_nan() {
                continue;
            }
            t0 = t0.max(near);
            t1 = t1.min(far * (1.0 + 4.0 * f64::EPSILON));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `count > 0`, triangles `first..first + count`. Inner: children at
    /// `first` and `first + 1`.
    first: usize,
    count: usize,
}

/// Static BVH over a mesh; built once, queried concurrently.
#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Point3<f64>; 3]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the (unit) ray direction.
    pub t: f64,
    pub triangle: usize,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Point3<f64>; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
        let mut ids: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<Point3<f64>> = tris
            .iter()
            .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
            split(&tris, &centroids, &mut ids, &mut nodes, 0, 0, tris.len());
        }
        Self { tris, ids, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nearest two-sided intersection with `t` in `(t_min, t_max]`.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.hit(origin, &inv, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &id in &self.ids[node.first..node.first + node.count] {
                    if let Some(t) = moller_trumbore(origin, dir, &self.tris[id]) {
                        let closer = t < limit || (t == limit && best.is_some_and(|b| id < b.triangle));
                        if t > t_min && closer {
                            limit = t;
                            best = Some(Hit { t, triangle: id });
                        }
                    }
                }
            } else {
                let (a, b) = (node.first, node.first + 1);
                let ta = self.nodes[a].bounds.hit(origin, &inv, limit);
                let tb = self.nodes[b].bounds.hit(origin, &inv, limit);
                // Push the farther child first so the nearer one is visited first.
                match (ta, tb) {
                    (Some(x), Some(y)) if x <= y => {
                        stack.push(b);
                        stack.push(a);
                    }
                    (Some(_), Some(_)) => {
                        stack.push(a);
                        stack.push(b);
                    }
                    (Some(_), None) => stack.push(a),
                    (None, Some(_)) => stack.push(b),
                    (None, None) => {}
                }
            }
        }
        best
    }
}

fn split(
    tris: &[[Point3<f64>; 3]],
    centroids: &[Point3<f64>],
    ids: &mut [usize],
    nodes: &mut Vec<Node>,
    node: usize,
    start: usize,
    end: usize,
) {
    let mut bounds = Aabb::empty();
    let mut cb = Aabb::empty();
    for &i in &ids[start..end] {
        for p in &tris[i] {
            bounds.grow(p);
        }
        cb.grow(&centroids[i]);
    }
    nodes[node].bounds = bounds;
    let ext = cb.hi - cb.lo;
    let axis = ext.imax();
    if end - start <= LEAF_TRIS || ext[axis] <= 0.0 {
        nodes[node].first = start;
        nodes[node].count = end - start;
        return;
    }
    let mid = (end - start) / 2;
    ids[start..end].select_nth_unstable_by(mid, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
    let left = nodes.len();
    nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
    nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
    nodes[node].first = left;
    nodes[node].count = 0;
    split(tris, centroids, ids, nodes, left, start, start + mid);
    split(tris, centroids, ids, nodes, left + 1, start + mid, end);
    let (l, r) = (nodes[left].bounds, nodes[left + 1].bounds);
    let mut b = l;
    b.union(&r);
    nodes[node].bounds = b;
}

/// Two-sided Möller–Trumbore; returns the ray parameter of the hit.
pub fn moller_trumbore(origin: &Point3<f64>, dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}
