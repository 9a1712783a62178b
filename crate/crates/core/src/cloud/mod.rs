//! Point clouds, triangle meshes and the operations the registration
//! pipeline needs on them.

mod io;
pub mod kdtree;
mod mesh;
mod normals;
mod voxel;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::Transform;

pub(crate) use io::ext as io_ext;
pub use io::{load_cloud, load_obj, load_ply, load_xyz, save_obj, save_ply, save_xyz, PlyFormat};
pub use kdtree::{KdTree, KdTree3};
pub use mesh::TriangleMesh;
pub use normals::{estimate_normals, orient_normals_outward};
pub use voxel::{voxel_downsample, voxel_key_count};

/// Ordered 3D points in meters with optional unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::Parameter(format!("point {i} is not finite")));
        }
        Ok(Self { points, normals: None })
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::Parameter(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::Parameter(format!("normal {i} is not unit length")));
        }
        let mut c = Self::new(points)?;
        c.normals = Some(normals);
        Ok(c)
    }

    /// Builds without validation; callers guarantee finite points and unit normals.
    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3<f64>>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Self {
        Self { points, normals }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn drop_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn coords(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Applies a rigid transform to points and normals.
    pub fn transformed(&self, tf: &Transform) -> Self {
        Self {
            points: self.points.iter().map(|p| tf.transform_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| tf.transform_vector(n)).collect()),
        }
    }

    /// Uniform scale about the frame origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| Point3::from(p.coords * s)).collect(),
            normals: self.normals.clone(),
        }
    }

    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = self.points.first()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some((lo, hi))
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        Some(Point3::from(sum / self.points.len() as f64))
    }

    /// Keeps the points for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3<f64>) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i, &self.points[i])).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|ns| idx.iter().map(|&i| ns[i]).collect()),
        }
    }

    /// Appends another cloud. Normals are kept only if both sides have them.
    pub fn extend(&mut self, other: &PointCloud) {
        self.normals = match (self.normals.take(), other.normals.as_ref()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if self.points.is_empty() => Some(b.clone()),
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
    }

    pub fn kdtree(&self) -> KdTree3 {
        KdTree3::build(self.coords())
    }
}
