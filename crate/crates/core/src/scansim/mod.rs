//! Virtual depth scanner: pinhole ray casting against triangle meshes.

pub mod bvh;
mod dataset;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::Transform;

pub use bvh::Bvh;
pub use dataset::{
    arm_proxy_mesh, generate_dataset, random_rigid_transform, read_manifest, read_sample, view_rng, write_dataset,
    AugmentationRanges, AugmentedRotation, DatasetManifest, DatasetParams, SampleKind, SampleMeta, ScanSample,
};

/// Camera pose at `eye` whose +Z axis points along `forward`; +Y points
/// "down" (away from world +Z) unless looking straight up or down.
pub fn look_at(eye: &Point3<f64>, forward: &Vector3<f64>) -> Transform {
    let z = forward.normalize();
    let up = if z.z.abs() > 0.999 { Vector3::y() } else { Vector3::z() };
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_columns(&[x, y, z]);
    Transform::from_rotation_matrix(&r, eye.coords)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualCamera {
    /// Camera frame in the world (robot base) frame; +Z is the viewing direction.
    pub pose: Transform,
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Default for VirtualCamera {
    fn default() -> Self {
        Self {
            pose: Transform::identity(),
            h_fov_deg: 60.0,
            v_fov_deg: 45.0,
            width: 320,
            height: 240,
            near: 0.1,
            far: 2.0,
        }
    }
}

impl VirtualCamera {
    pub fn with_pose(&self, pose: Transform) -> Self {
        Self { pose, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let fov_ok = |f: f64| f > 0.0 && f < 180.0;
        if !fov_ok(self.h_fov_deg) || !fov_ok(self.v_fov_deg) {
            return Err(Error::Parameter("field of view must lie in (0, 180) degrees".into()));
        }
        if !(self.near < self.far) || self.near < 0.0 {
            return Err(Error::Parameter("need 0 <= near < far".into()));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::Parameter("resolution must be at least 2x2".into()));
        }
        Ok(())
    }

    /// Focal lengths in pixels.
    pub fn focal(&self) -> (f64, f64) {
        let fx = 0.5 * self.width as f64 / (0.5 * self.h_fov_deg.to_radians()).tan();
        let fy = 0.5 * self.height as f64 / (0.5 * self.v_fov_deg.to_radians()).tan();
        (fx, fy)
    }

    /// Unit ray through the center of pixel `(u, v)`, camera frame.
    pub fn ray(&self, u: usize, v: usize) -> Vector3<f64> {
        let (fx, fy) = self.focal();
        let x = (u as f64 + 0.5 - 0.5 * self.width as f64) / fx;
        let y = (v as f64 + 0.5 - 0.5 * self.height as f64) / fy;
        Vector3::new(x, y, 1.0).normalize()
    }

    /// Whether a camera-frame point projects inside the image and depth range.
    pub fn in_frustum(&self, p: &Point3<f64>) -> bool {
        if p.z <= 0.0 {
            return false;
        }
        let d = p.coords.norm();
        if d < self.near || d > self.far {
            return false;
        }
        let (fx, fy) = self.focal();
        let u = fx * p.x / p.z + 0.5 * self.width as f64;
        let v = fy * p.y / p.z + 0.5 * self.height as f64;
        u >= 0.0 && u <= self.width as f64 && v >= 0.0 && v <= self.height as f64
    }
}

/// Cameras on the upper hemisphere of `radius` around `center`, spread by a
/// Fibonacci spiral and aimed at the center. `n = 1` gives the pole.
pub fn hemisphere_viewpoints(radius: f64, n: usize, center: &Point3<f64>, template: &VirtualCamera) -> Vec<VirtualCamera> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = if n == 1 { 1.0 } else { 1.0 - (i as f64 + 0.5) / n as f64 };
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let eye = center + dir * radius;
            template.with_pose(look_at(&eye, &(center - eye)))
        })
        .collect()
}

/// Zero-mean Gaussian range noise along each ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_mm: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma_mm: 0.3 }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { sigma_mm: 0.0 }
    }
}

/// A mesh with its acceleration structure, ready to be scanned from many views.
#[derive(Debug, Clone)]
pub struct Scene {
    mesh: TriangleMesh,
    bvh: Bvh,
}

impl Scene {
    pub fn new(mesh: TriangleMesh) -> Self {
        let bvh = Bvh::build(&mesh);
        Self { mesh, bvh }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// One ray per pixel; the nearest hit within `[near, far]` becomes a
    /// camera-frame point. Noise draws come from `rng` in pixel order, so the
    /// output does not depend on thread scheduling.
    pub fn render<R: Rng + ?Sized>(&self, camera: &VirtualCamera, noise: NoiseSpec, rng: &mut R) -> Result<PointCloud> {
        camera.validate()?;
        let origin = Point3::from(camera.pose.translation);
        let rot = camera.pose.rotation;
        let hits: Vec<(Vector3<f64>, f64)> = (0..camera.height)
            .into_par_iter()
            .flat_map_iter(|v| {
                (0..camera.width).filter_map(move |u| {
                    let d = camera.ray(u, v);
                    let hit = self.bvh.intersect(&origin, &(rot * d), 0.0, camera.far)?;
                    (hit.t >= camera.near).then_some((d, hit.t))
                })
            })
            .collect();
        let sigma = noise.sigma_mm * 1e-3;
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        let points = hits
            .into_iter()
            .map(|(d, t)| {
                let t = match &normal {
                    Some(n) => t + n.sample(rng),
                    None => t,
                };
                Point3::from(d * t)
            })
            .collect();
        PointCloud::new(points)
    }
}

/// Surface samples of `mesh` that can be seen from outside, one per `voxel`
/// cell, with normals pointing to the open side. Faces buried inside other
/// parts or covered by coincident faces are dropped, so only surfaces a
/// scanner could ever observe remain.
pub fn reference_cloud(mesh: &TriangleMesh, voxel: f64, seed: u64) -> Result<PointCloud> {
    if !(voxel > 0.0) {
        return Err(Error::Parameter(format!("voxel size must be positive, got {voxel}")));
    }
    if mesh.is_empty() {
        return Err(Error::Parameter("mesh has no triangles".into()));
    }
    let count = ((8.0 * mesh.area() / (voxel * voxel)).ceil() as usize).clamp(1000, 4_000_000);
    let samples = mesh.sample_surface(count, seed);
    let bvh = Bvh::build(mesh);
    let eps = 1e-6 * mesh.bounding_box().map_or(1.0, |(lo, hi)| (hi - lo).norm().max(1e-3));
    let normals = samples.normals().expect("surface samples carry normals");
    let kept: Vec<(Point3<f64>, Vector3<f64>)> = samples
        .points()
        .par_iter()
        .zip(normals.par_iter())
        .filter_map(|(p, n)| {
            [*n, -n].into_iter().find(|side| escapes(&bvh, p, side, eps)).map(|side| (*p, side))
        })
        .collect();
    let (points, normals): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
    let visible = PointCloud::with_normals(points, normals)?;
    crate::cloud::voxel_downsample(&visible, voxel)
}

/// Whether some ray leaving `p` into the half-space of `n` reaches infinity.
fn escapes(bvh: &Bvh, p: &Point3<f64>, n: &Vector3<f64>, eps: f64) -> bool {
    let a = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&a).normalize();
    let v = n.cross(&u);
    let origin = p + n * eps;
    let tilt = 60f64.to_radians();
    std::iter::once(*n)
        .chain((0..8).map(|k| {
            let phi = k as f64 * std::f64::consts::FRAC_PI_4;
            n * tilt.cos() + (u * phi.cos() + v * phi.sin()) * tilt.sin()
        }))
        .any(|d| bvh.intersect(&origin, &d, 0.0, f64::INFINITY).is_none())
}

/// Renders one scan of `mesh`. Builds the BVH on every call; use [`Scene`]
/// to scan the same mesh repeatedly.
pub fn render_scan<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    camera: &VirtualCamera,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<PointCloud> {
    Scene::new(mesh.clone()).render(camera, noise, rng)
}
