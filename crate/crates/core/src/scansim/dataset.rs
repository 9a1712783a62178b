//! Registration datasets: scans of the base from hemisphere viewpoints and
//! from cameras looking past a randomly posed arm.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Point2, Point3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hemisphere_viewpoints, look_at, NoiseSpec, Scene, VirtualCamera};
use crate::cloud::{load_ply, save_ply, voxel_downsample, PlyFormat, PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::geom::{rre, rte};
use crate::kinematics::{JointConfig, KinematicChain};
use crate::Transform;

/// Seeded generator for one independent stream, e.g. one view.
pub fn view_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rotation uniform over SO(3), translation uniform in `[-max_t, max_t]` per axis.
pub fn random_rigid_transform<R: Rng + ?Sized>(rng: &mut R, max_t: f64) -> Transform {
    let mut q = [0.0f64; 4];
    for v in &mut q {
        *v = rng.sample(StandardNormal);
    }
    let rot = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    let t = Vector3::from_fn(|_, _| if max_t > 0.0 { rng.random_range(-max_t..=max_t) } else { 0.0 });
    Transform::new(rot, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRanges {
    /// Augmented copies per sample.
    pub copies: usize,
    pub rotation: AugmentedRotation,
    pub max_translation_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentedRotation {
    UniformSo3,
}

impl Default for AugmentationRanges {
    fn default() -> Self {
        Self { copies: 5, rotation: AugmentedRotation::UniformSo3, max_translation_m: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub radii: Vec<f64>,
    pub n_views: usize,
    pub n_configs: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub camera: VirtualCamera,
    /// Point the hemisphere cameras aim at, base frame.
    pub center: [f64; 3],
    pub voxel: f64,
    pub min_points: usize,
    pub augmentation: Option<AugmentationRanges>,
    /// Radius of the cylinders standing in for arm links.
    pub link_radius: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            radii: vec![0.5, 0.7],
            n_views: 10,
            n_configs: 0,
            noise: NoiseSpec::default(),
            seed: 0,
            camera: VirtualCamera::default(),
            center: [0.0, 0.0, 0.05],
            voxel: 0.002,
            min_points: 200,
            augmentation: None,
            link_radius: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleKind {
    Hemisphere { radius: f64, view: usize },
    ArmConfig { index: usize },
    Augmented { parent: String, copy: usize },
}

/// One registration example. `truth` maps base-frame points into the camera
/// frame and always equals `camera.pose.inverse()`.
#[derive(Debug, Clone)]
pub struct ScanSample {
    pub id: String,
    pub kind: SampleKind,
    /// Simulated scan, camera frame.
    pub source: PointCloud,
    /// Reference base model, base frame. Shared by every sample.
    pub target: Arc<PointCloud>,
    pub truth: Transform,
    pub camera: VirtualCamera,
    pub robot: String,
    pub config: Option<JointConfig<f64>>,
}

/// Everything but the clouds, as stored in `camera.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    #[serde(flatten)]
    pub kind: SampleKind,
    pub robot: String,
    pub camera: VirtualCamera,
    pub config: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub robot: String,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub augmentation: Option<AugmentationRanges>,
    pub voxel: f64,
    pub n_views: usize,
    pub n_configs: usize,
    pub samples: Vec<String>,
    pub skipped: Vec<String>,
}

/// Cylinders along the segments joining consecutive link frames.
pub fn arm_proxy_mesh(chain: &KinematicChain<f64>, q: &JointConfig<f64>, radius: f64) -> Result<TriangleMesh> {
    let frames = chain.link_frames(q)?;
    let mut mesh = TriangleMesh::default();
    for w in frames.windows(2) {
        let (a, b) = (w[0].translation, w[1].translation);
        let len = (b - a).norm();
        if len < 0.01 {
            continue;
        }
        let place = look_at(&Point3::from(a), &(b - a));
        mesh.append(&TriangleMesh::cylinder(Point2::origin(), radius, 0.0, len, 16).transformed(&place));
    }
    Ok(mesh)
}

struct Job {
    id: String,
    kind: SampleKind,
    camera: VirtualCamera,
    config: Option<JointConfig<f64>>,
    stream: u64,
}

/// Renders the dataset. Views are rendered in parallel, each from its own
/// noise stream, so the output depends only on the parameters.
pub fn generate_dataset(
    chain: &KinematicChain<f64>,
    base_mesh: &TriangleMesh,
    params: &DatasetParams,
) -> Result<(Vec<ScanSample>, DatasetManifest)> {
    if params.radii.is_empty() || params.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Parameter("radii must be a non-empty list of positive distances".into()));
    }
    if base_mesh.is_empty() {
        return Err(Error::Parameter("base mesh has no triangles".into()));
    }
    params.camera.validate()?;
    let center = Point3::from(params.center);
    let target = Arc::new(super::reference_cloud(base_mesh, params.voxel, params.seed)?);

    let mut jobs = Vec::new();
    for (ri, &radius) in params.radii.iter().enumerate() {
        for (view, camera) in hemisphere_viewpoints(radius, params.n_views, &center, &params.camera)
            .into_iter()
            .enumerate()
        {
            jobs.push(Job {
                id: format!("r{ri}_v{view:04}"),
                kind: SampleKind::Hemisphere { radius, view },
                camera,
                config: None,
                stream: jobs.len() as u64,
            });
        }
    }
    let mut cfg_rng = view_rng(params.seed, u64::MAX);
    for index in 0..params.n_configs {
        let angles = chain
            .revolute_joints()
            .map(|j| {
                let (lo, hi) = j.limits.expect("revolute joints carry limits");
                if hi > lo {
                    cfg_rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        let radius = params.radii[cfg_rng.random_range(0..params.radii.len())];
        let z: f64 = cfg_rng.random_range(0.25..1.0);
        let phi: f64 = cfg_rng.random_range(0.0..std::f64::consts::TAU);
        let dir = Vector3::new((1.0 - z * z).sqrt() * phi.cos(), (1.0 - z * z).sqrt() * phi.sin(), z);
        let eye = center + dir * radius;
        jobs.push(Job {
            id: format!("c{index:04}"),
            kind: SampleKind::ArmConfig { index },
            camera: params.camera.with_pose(look_at(&eye, &(center - eye))),
            config: Some(JointConfig::new(angles)),
            stream: jobs.len() as u64,
        });
    }

    let base_scene = Scene::new(base_mesh.clone());
    let rendered: Vec<Result<Option<ScanSample>>> = jobs
        .into_par_iter()
        .map(|job| {
            let mut rng = view_rng(params.seed, job.stream);
            let raw = match &job.config {
                None => base_scene.render(&job.camera, params.noise, &mut rng)?,
                Some(q) => {
                    let mut mesh = base_mesh.clone();
                    mesh.append(&arm_proxy_mesh(chain, q, params.link_radius)?);
                    Scene::new(mesh).render(&job.camera, params.noise, &mut rng)?
                }
            };
            if raw.len() < params.min_points {
                log::warn!("skipping {}: {} points rendered, need {}", job.id, raw.len(), params.min_points);
                return Ok(None);
            }
            Ok(Some(ScanSample {
                truth: job.camera.pose.inverse(),
                source: voxel_downsample(&raw, params.voxel)?,
                target: Arc::clone(&target),
                id: job.id,
                kind: job.kind,
                camera: job.camera,
                robot: chain.name.clone(),
                config: job.config,
            }))
        })
        .collect();

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in rendered.into_iter().enumerate() {
        match r? {
            Some(s) => samples.push(s),
            None => skipped.push(i),
        }
    }
    let skipped_ids = skipped.iter().map(|i| format!("job{i}")).collect();

    if let Some(aug) = params.augmentation {
        let base_len = samples.len();
        for i in 0..base_len {
            let mut rng = view_rng(params.seed ^ 0xa5a5_a5a5, i as u64);
            for copy in 0..aug.copies {
                let a = random_rigid_transform(&mut rng, aug.max_translation_m);
                let parent = &samples[i];
                let camera = parent.camera.with_pose(parent.camera.pose.compose(&a.inverse()));
                let s = ScanSample {
                    id: format!("{}_a{copy}", parent.id),
                    kind: SampleKind::Augmented { parent: parent.id.clone(), copy },
                    source: parent.source.transformed(&a),
                    target: Arc::clone(&target),
                    truth: camera.pose.inverse(),
                    camera,
                    robot: parent.robot.clone(),
                    config: parent.config.clone(),
                };
                samples.push(s);
            }
        }
    }

    for s in &samples {
        let expected = s.camera.pose.inverse();
        if rte(&s.truth, &expected) != 0.0 || rre(&s.truth, &expected) != 0.0 {
            return Err(Error::Parameter(format!("sample {} truth disagrees with its camera pose", s.id)));
        }
    }

    let manifest = DatasetManifest {
        robot: chain.name.clone(),
        radii: params.radii.clone(),
        seed: params.seed,
        noise: params.noise,
        augmentation: params.augmentation,
        voxel: params.voxel,
        n_views: params.n_views,
        n_configs: params.n_configs,
        samples: samples.iter().map(|s| s.id.clone()).collect(),
        skipped: skipped_ids,
    };
    Ok((samples, manifest))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json` and one directory per sample holding
/// `source.ply`, `target.ply`, `truth.json` and `camera.json`.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[ScanSample], manifest: &DatasetManifest) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("manifest.json"), manifest)?;
    for s in samples {
        let sd = dir.join(&s.id);
        fs::create_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
        save_ply(sd.join("source.ply"), &s.source, PlyFormat::BinaryLittleEndian)?;
        save_ply(sd.join("target.ply"), &s.target, PlyFormat::BinaryLittleEndian)?;
        write_json(&sd.join("truth.json"), &s.truth)?;
        let meta = SampleMeta {
            id: s.id.clone(),
            kind: s.kind.clone(),
            robot: s.robot.clone(),
            camera: s.camera.clone(),
            config: s.config.as_ref().map(|q| q.angles.clone()),
        };
        write_json(&sd.join("camera.json"), &meta)?;
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    read_json(&dir.as_ref().join("manifest.json"))
}

/// Loads one sample directory: scan, ground truth and metadata.
pub fn read_sample(dir: impl AsRef<Path>) -> Result<(PointCloud, Transform, SampleMeta)> {
    let dir = dir.as_ref();
    let source = load_ply(dir.join("source.ply"))?;
    let truth = read_json(&dir.join("truth.json"))?;
    let meta = read_json(&dir.join("camera.json"))?;
    Ok((source, truth, meta))
}
