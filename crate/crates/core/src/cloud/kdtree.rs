//! Static balanced kd-tree with exact queries.
//!
//! Built once with median splits on the widest axis; leaves hold at most
//! [`LEAF_SIZE`] points. Distances are compared as squared sums accumulated
//! in axis order, so results match a linear scan bit for bit. Ties go to the
//! lowest point index.

use crate::error::{Error, Result};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

pub type KdTree3 = KdTree<3>;

#[inline]
pub fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

#[inline]
fn better(d: f64, idx: usize, best_d: f64, best_idx: usize) -> bool {
    d < best_d || (d == best_d && idx < best_idx)
}

impl<const D: usize> KdTree<D> {
    pub fn build(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            build_node(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64; D] {
        &self.points[idx]
    }

    /// Exact nearest neighbor: `(index, euclidean distance)`.
    pub fn nearest(&self, query: &[f64; D]) -> Result<(usize, f64)> {
        let (idx, d2) = self.nearest_squared(query).ok_or(Error::EmptyTarget)?;
        Ok((idx, d2.sqrt()))
    }

    /// Nearest neighbor with squared distance, `None` on an empty tree.
    pub fn nearest_squared(&self, query: &[f64; D]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, query, &mut best);
        Some(best)
    }

    /// Nearest neighbor within `max_dist` as `(index, squared distance)`.
    pub fn nearest_within(&self, query: &[f64; D], max_dist: f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        // Seed the bound just above the gate so equal-distance hits still count.
        let mut best = (usize::MAX, max_dist * max_dist * (1.0 + 1e-12) + f64::MIN_POSITIVE);
        self.nearest_rec(0, query, &mut best);
        (best.0 != usize::MAX && best.1 <= max_dist * max_dist).then_some(best)
    }

    fn nearest_rec(&self, node: usize, q: &[f64; D], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let d = dist2(&self.points[idx], q);
                    if better(d, idx, best.1, best.0) {
                        *best = (idx, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(distance², index)`.
    pub fn knn(&self, query: &[f64; D], k: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return out;
        }
        self.knn_rec(0, query, k, &mut out);
        out
    }

    fn knn_rec(&self, node: usize, q: &[f64; D], k: usize, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let d = dist2(&self.points[idx], q);
                    if out.len() == k {
                        let (wi, wd) = out[k - 1];
                        if !better(d, idx, wd, wi) {
                            continue;
                        }
                        out.pop();
                    }
                    let pos = out.partition_point(|&(i, dd)| better(dd, i, d, idx));
                    out.insert(pos, (idx, d));
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, out);
                if out.len() < k || diff * diff <= out[k - 1].1 {
                    self.knn_rec(far, q, k, out);
                }
            }
        }
    }

    /// All points within `radius` (inclusive), in ascending index order.
    pub fn within_radius(&self, query: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: &[f64; D], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&idx| dist2(&self.points[idx], q) <= r2),
                );
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.radius_rec(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.radius_rec(right, q, r2, out);
                }
            }
        }
    }
}

fn build_node<const D: usize>(
    points: &[[f64; D]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for &i in slice.iter() {
        for a in 0..D {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..D)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[slice[mid]][axis];

    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}
