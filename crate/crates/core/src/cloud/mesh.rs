use nalgebra::{Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::Transform;

/// Indexed triangle mesh, meters. Triangles are counter-clockwise seen from
/// outside when the source mesh is consistently wound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v as usize >= vertices.len()))
        {
            return Err(Error::Parameter(format!(
                "triangle {i} {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let mut mesh = Self { vertices, triangles };
        mesh.triangles.retain(|t| {
            let [a, b, c] = t.map(|v| mesh.vertices[v as usize]);
            (b - a).cross(&(c - a)).norm() > 0.0
        });
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn transformed(&self, tf: &Transform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| tf.transform_point(p)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| Point3::from(p.coords * s)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn append(&mut self, other: &TriangleMesh) {
        let offset = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|v| v + offset)));
    }

    /// Area-weighted uniform surface samples carrying face normals.
    pub fn sample_surface(&self, count: usize, seed: u64) -> PointCloud {
        if self.triangles.is_empty() || count == 0 {
            return PointCloud::default();
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for i in 0..self.triangles.len() {
            acc += self.triangle_area(i);
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        for _ in 0..count {
            let r = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c < r).min(cdf.len() - 1);
            let [a, b, c] = self.triangle(i);
            let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            points.push(a + (b - a) * u + (c - a) * v);
            normals.push(self.face_normal(i));
        }
        PointCloud::from_parts_unchecked(points, Some(normals))
    }

    /// Unsigned distance from `p` to the surface (brute force over triangles).
    pub fn distance_to(&self, p: &Point3<f64>) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Axis-aligned box spanning `lo..hi`, outward winding.
    pub fn cuboid(lo: Point3<f64>, hi: Point3<f64>) -> Self {
        let poly = [
            Point2::new(lo.x, lo.y),
            Point2::new(hi.x, lo.y),
            Point2::new(hi.x, hi.y),
            Point2::new(lo.x, hi.y),
        ];
        Self::extrude(&poly, lo.z, hi.z)
    }

    /// Prism over a counter-clockwise convex polygon in the XY plane,
    /// capped at `z0` and `z1`.
    pub fn extrude(polygon: &[Point2<f64>], z0: f64, z1: f64) -> Self {
        let n = polygon.len();
        let mut vertices = Vec::with_capacity(2 * n + 2);
        for p in polygon {
            vertices.push(Point3::new(p.x, p.y, z0));
        }
        for p in polygon {
            vertices.push(Point3::new(p.x, p.y, z1));
        }
        let c = polygon.iter().fold(nalgebra::Vector2::zeros(), |s, p| s + p.coords) / n as f64;
        vertices.push(Point3::new(c.x, c.y, z0));
        vertices.push(Point3::new(c.x, c.y, z1));
        let (cb, ct) = (2 * n as u32, 2 * n as u32 + 1);
        let mut triangles = Vec::with_capacity(4 * n);
        for i in 0..n as u32 {
            let j = (i + 1) % n as u32;
            let (bi, bj, ti, tj) = (i, j, i + n as u32, j + n as u32);
            triangles.push([bi, bj, tj]);
            triangles.push([bi, tj, ti]);
            triangles.push([cb, bj, bi]);
            triangles.push([ct, ti, tj]);
        }
        Self { vertices, triangles }
    }

    /// Faceted cylinder about the Z axis through `center`.
    pub fn cylinder(center: Point2<f64>, radius: f64, z0: f64, z1: f64, segments: usize) -> Self {
        let poly: Vec<Point2<f64>> = (0..segments)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / segments as f64;
                Point2::new(center.x + radius * a.cos(), center.y + radius * a.sin())
            })
            .collect();
        Self::extrude(&poly, z0, z1)
    }

    /// UV sphere with outward winding.
    pub fn uv_sphere(center: Point3<f64>, radius: f64, stacks: usize, slices: usize) -> Self {
        let mut vertices = vec![center + Vector3::z() * radius];
        for i in 1..stacks {
            let th = std::f64::consts::PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let ph = std::f64::consts::TAU * j as f64 / slices as f64;
                vertices.push(center + radius * Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()));
            }
        }
        vertices.push(center - Vector3::z() * radius);
        let bottom = vertices.len() as u32 - 1;
        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
            triangles.push([bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                triangles.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
                triangles.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        Self { vertices, triangles }
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub(crate) fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
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
    fn cube_counts_and_outward_normals() {
        let m = TriangleMesh::cuboid(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        assert!((m.area() - 24.0).abs() < 1e-12);
        for i in 0..m.triangles().len() {
            let [a, b, c] = m.triangle(i);
            let centroid = (a.coords + b.coords + c.coords) / 3.0;
            assert!(m.face_normal(i).dot(&centroid) > 0.0);
        }
    }

    #[test]
    fn drops_degenerate_and_rejects_bad_index() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let m = TriangleMesh::new(v.clone(), vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangles().len(), 1);
        assert!(TriangleMesh::new(v, vec![[0, 1, 9]]).is_err());
    }

    #[test]
    fn samples_lie_on_surface() {
        let m = TriangleMesh::cylinder(Point2::new(0.1, 0.0), 0.05, 0.0, 0.1, 24);
        let s = m.sample_surface(300, 1);
        assert_eq!(s.len(), 300);
        for p in s.points() {
            assert!(m.distance_to(p) < 1e-12);
        }
    }

    #[test]
    fn sphere_is_closed_and_outward() {
        let m = TriangleMesh::uv_sphere(Point3::origin(), 1.0, 12, 24);
        for i in 0..m.triangles().len() {
            let [a, b, c] = m.triangle(i);
            assert!(m.face_normal(i).dot(&((a.coords + b.coords + c.coords) / 3.0)) > 0.0);
        }
    }
}
