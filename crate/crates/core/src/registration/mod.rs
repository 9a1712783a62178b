//! Rigid registration of a base scan against the base model: unit
//! pre-transform, feature-based global alignment, point-to-plane refinement.

mod fpfh;
mod icp;
mod ransac;

use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::cloud::{estimate_normals, load_cloud, load_obj, orient_normals_outward, voxel_downsample, PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::Transform;

pub use fpfh::{compute_fpfh, Feature, BINS, FPFH_DIM};
pub use icp::{icp_point_to_plane, kabsch, IcpOutcome, IcpParams, IcpTarget};
pub use ransac::{feature_correspondences, fitness, ransac_hypotheses, FeatureCloud, Hypothesis, RansacParams};

/// Length unit of a reference model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitHint {
    M,
    Mm,
    /// Millimeters if the bounding-box diagonal exceeds 10, else meters.
    #[default]
    Auto,
}

impl std::str::FromStr for UnitHint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Self::M),
            "mm" => Ok(Self::Mm),
            "auto" => Ok(Self::Auto),
            _ => Err(Error::Parameter(format!("unknown unit `{s}`, expected m, mm or auto"))),
        }
    }
}

/// Scale and rigid part applied to the reference before alignment. The scale
/// acts about the model origin, which is the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreTransform {
    pub scale: f64,
    pub transform: Transform,
}

impl PreTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, transform: Transform::identity() }
    }
}

fn unit_scale(lo: &Point3<f64>, hi: &Point3<f64>, hint: UnitHint) -> f64 {
    match hint {
        UnitHint::M => 1.0,
        UnitHint::Mm => 1e-3,
        UnitHint::Auto if (hi - lo).norm() > 10.0 => 1e-3,
        UnitHint::Auto => 1.0,
    }
}

/// Rescales the model to meters.
pub fn pre_transform_reference(model: &PointCloud, hint: UnitHint) -> Result<(PointCloud, PreTransform)> {
    let (lo, hi) = model.bounding_box().ok_or(Error::EmptyTarget)?;
    let scale = unit_scale(&lo, &hi, hint);
    let pre = PreTransform { scale, transform: Transform::identity() };
    let out = if scale == 1.0 { model.clone() } else { model.scaled(scale) };
    Ok((out, pre))
}

/// Mesh counterpart of [`pre_transform_reference`], deciding units from the vertices.
pub fn pre_transform_mesh(mesh: &TriangleMesh, hint: UnitHint) -> Result<(TriangleMesh, PreTransform)> {
    let (lo, hi) = mesh.bounding_box().ok_or(Error::EmptyTarget)?;
    let scale = unit_scale(&lo, &hi, hint);
    let out = if scale == 1.0 { mesh.clone() } else { mesh.scaled(scale) };
    Ok((out, PreTransform { scale, transform: Transform::identity() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationParams {
    pub unit: UnitHint,
    /// Fine-stage voxel, meters.
    pub voxel: f64,
    /// Voxel for descriptors and RANSAC, meters.
    pub coarse_voxel: f64,
    /// Feature radius as a multiple of `coarse_voxel`.
    pub feature_radius_factor: f64,
    pub normal_k: usize,
    pub ransac_iterations: usize,
    /// RANSAC inlier distance as a multiple of `coarse_voxel`.
    pub ransac_distance_factor: f64,
    pub edge_ratio: f64,
    /// Shortest sampled pair as a multiple of `coarse_voxel`.
    pub min_baseline_factor: f64,
    pub normal_tolerance_deg: f64,
    /// Scan points used to rank RANSAC samples before full scoring.
    pub score_points: usize,
    /// Distinct RANSAC hypotheses scored by fitness.
    pub ransac_candidates: usize,
    /// Best coarse hypotheses refined by ICP.
    pub hypotheses: usize,
    /// ICP correspondence gate as a multiple of `voxel`.
    pub gate_factor: f64,
    /// Final fitness inlier distance as a multiple of `voxel`.
    pub inlier_factor: f64,
    pub max_iterations: usize,
    /// ICP iterations spent screening each coarse hypothesis.
    pub screen_iterations: usize,
    pub update_tolerance: f64,
    pub min_fitness: f64,
    /// Largest accepted point-to-plane RMSE as a multiple of `voxel`.
    pub max_plane_rmse_factor: f64,
    pub ambiguity_fitness: f64,
    pub ambiguity_angle_deg: f64,
    /// Seed used for sampling the reference surface from a mesh.
    pub model_seed: u64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            unit: UnitHint::Auto,
            voxel: 0.002,
            coarse_voxel: 0.005,
            feature_radius_factor: 5.0,
            normal_k: 16,
            ransac_iterations: 100_000,
            ransac_distance_factor: 1.5,
            edge_ratio: 0.9,
            min_baseline_factor: 4.0,
            normal_tolerance_deg: 20.0,
            score_points: 256,
            ransac_candidates: 64,
            hypotheses: 4,
            gate_factor: 3.0,
            inlier_factor: 1.5,
            max_iterations: 100,
            screen_iterations: 20,
            update_tolerance: 1e-8,
            min_fitness: 0.2,
            max_plane_rmse_factor: 0.3,
            ambiguity_fitness: 0.05,
            ambiguity_angle_deg: 5.0,
            model_seed: 7,
        }
    }
}

impl RegistrationParams {
    fn validate(&self) -> Result<()> {
        let pos = [self.voxel, self.coarse_voxel, self.feature_radius_factor, self.gate_factor, self.inlier_factor];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Parameter("voxel sizes and distance factors must be positive".into()));
        }
        if self.normal_k < 3 || self.hypotheses == 0 || self.ransac_iterations == 0 {
            return Err(Error::Parameter("normal_k >= 3, hypotheses >= 1 and ransac_iterations >= 1 required".into()));
        }
        Ok(())
    }

    fn ransac(&self, seed: u64) -> RansacParams {
        RansacParams {
            iterations: self.ransac_iterations,
            distance: self.ransac_distance_factor * self.coarse_voxel,
            edge_ratio: self.edge_ratio,
            min_baseline: self.min_baseline_factor * self.coarse_voxel,
            normal_tolerance_deg: self.normal_tolerance_deg,
            score_points: self.score_points,
            candidates: self.ransac_candidates,
            keep: self.ransac_candidates,
            seed,
        }
    }

    fn icp(&self) -> IcpParams {
        IcpParams {
            max_distance: self.gate_factor * self.voxel,
            max_iterations: self.max_iterations,
            update_tolerance: self.update_tolerance,
            min_correspondences: 10,
        }
    }
}

/// A candidate kept after refinement, for ambiguity reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub transform: Transform,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps reference-model points into the camera (scan) frame.
    pub transform: Transform,
    /// Fraction of scan points within the inlier distance of the model.
    pub fitness: f64,
    /// Point-to-point RMSE over gated correspondences, meters.
    pub inlier_rmse: f64,
    /// Point-to-plane RMSE over gated correspondences, meters.
    pub plane_rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Another hypothesis scored within the ambiguity margin while
    /// disagreeing in rotation.
    pub ambiguous: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<Alternative>,
}

/// Reference model in meters with everything registration needs, built once
/// and reused across scans.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    pub pre: PreTransform,
    pub fine: PointCloud,
    icp_target: IcpTarget,
    coarse: FeatureCloud,
    params: RegistrationParams,
}

impl PreparedReference {
    /// From a point cloud. Missing normals are estimated and pointed away
    /// from the centroid.
    pub fn from_cloud(model: &PointCloud, params: &RegistrationParams) -> Result<Self> {
        params.validate()?;
        let (scaled, pre) = pre_transform_reference(model, params.unit)?;
        let fine = voxel_downsample(&scaled, params.voxel)?;
        let fine = if fine.has_normals() {
            fine
        } else {
            let c = fine.centroid().ok_or(Error::EmptyTarget)?;
            orient_normals_outward(&estimate_normals(&fine, params.normal_k, &c)?, &c)
        };
        Self::finish(fine, pre, params)
    }

    /// From a mesh: units decided on the vertices, then dense surface sampling.
    pub fn from_mesh(mesh: &TriangleMesh, params: &RegistrationParams) -> Result<Self> {
        params.validate()?;
        let (scaled, pre) = pre_transform_mesh(mesh, params.unit)?;
        let fine = crate::scansim::reference_cloud(&scaled, params.voxel, params.model_seed)?;
        Self::finish(fine, pre, params)
    }

    /// Loads `.obj` as a mesh, anything else as a point cloud.
    pub fn load(path: impl AsRef<Path>, params: &RegistrationParams) -> Result<Self> {
        let path = path.as_ref();
        if crate::cloud::io_ext(path) == "obj" {
            Self::from_mesh(&load_obj(path)?, params)
        } else {
            Self::from_cloud(&load_cloud(path)?, params)
        }
    }

    fn finish(fine: PointCloud, pre: PreTransform, params: &RegistrationParams) -> Result<Self> {
        if fine.len() < 100 {
            return Err(Error::TooFewPoints { needed: 100, have: fine.len() });
        }
        let icp_target = IcpTarget::new(&fine)?;
        let coarse_cloud = voxel_downsample(&fine, params.coarse_voxel)?;
        let coarse = FeatureCloud::new(coarse_cloud, params.feature_radius_factor * params.coarse_voxel)?;
        Ok(Self { pre, fine, icp_target, coarse, params: params.clone() })
    }

    pub fn params(&self) -> &RegistrationParams {
        &self.params
    }

    /// Model points in meters, base frame.
    pub fn cloud(&self) -> &PointCloud {
        &self.fine
    }

    /// Registers a camera-frame scan against this reference.
    ///
    /// RANSAC hypotheses are screened by a short ICP on the coarse scan,
    /// deduplicated and ranked by fitness on the fine scan; only the winner
    /// is refined on the fine scan.
    pub fn register(&self, scan: &PointCloud, seed: u64) -> Result<(Transform, RegistrationResult)> {
        let p = &self.params;
        let fine = voxel_downsample(scan, p.voxel)?;
        let coarse = self.scan_features(&fine)?;
        let hyps = ransac_hypotheses(&coarse, &self.coarse, &p.ransac(seed))?;
        let inlier = p.inlier_factor * p.voxel;
        let screen = IcpParams {
            max_distance: p.gate_factor * p.coarse_voxel,
            max_iterations: p.screen_iterations,
            ..p.icp()
        };
        // (source -> target, fitness on the fine scan)
        let mut screened: Vec<(Transform, f64)> = Vec::new();
        let mut attempts = 0;
        for h in &hyps {
            if screened.len() >= p.hypotheses || attempts >= 2 * p.hypotheses || h.fitness < p.min_fitness {
                break;
            }
            let start = h.transform.inverse();
            if screened.iter().any(|(o, _)| !ransac::distinct(o, &start, 10.0, 4.0 * p.coarse_voxel)) {
                continue;
            }
            attempts += 1;
            match icp_point_to_plane(coarse.cloud.points(), &self.icp_target, &h.transform.inverse(), &screen) {
                Ok(out) => {
                    let x = out.source_to_target;
                    if screened.iter().all(|(o, _)| ransac::distinct(o, &x, 1.0, p.coarse_voxel)) {
                        let f = fitness(fine.points(), &self.icp_target.tree, &x.inverse(), inlier);
                        screened.push((x, f));
                    }
                }
                Err(Error::Diverged(n)) => log::debug!("hypothesis dropped, {n} correspondences"),
                Err(e) => return Err(e),
            }
        }
        // Highest fitness, ties to the earlier hypothesis.
        let Some(best) = (0..screened.len()).max_by(|&a, &b| screened[a].1.total_cmp(&screened[b].1).then(b.cmp(&a))) else {
            // Nothing survived: report the best coarse guess as a failure.
            let h = hyps.first().ok_or_else(|| Error::Registration("no RANSAC hypothesis".into()))?;
            let result = RegistrationResult {
                transform: h.transform.compose(&self.pre.transform),
                fitness: h.fitness,
                inlier_rmse: f64::NAN,
                plane_rmse: f64::NAN,
                iterations: 0,
                converged: false,
                ambiguous: false,
                objective_history: vec![],
                alternatives: vec![],
            };
            return Ok((result.transform, result));
        };
        let out = icp_point_to_plane(fine.points(), &self.icp_target, &screened[best].0, &p.icp())?;
        let t_c_refp = out.source_to_target.inverse();
        let fit = fitness(fine.points(), &self.icp_target.tree, &t_c_refp, inlier);
        let mut ambiguous = false;
        let mut alternatives = Vec::new();
        for (i, (x, f)) in screened.iter().enumerate() {
            if i == best {
                continue;
            }
            let alt = x.inverse();
            if (screened[best].1 - f).abs() <= p.ambiguity_fitness
                && ransac::distinct(&alt, &t_c_refp, p.ambiguity_angle_deg, f64::INFINITY)
            {
                ambiguous = true;
            }
            alternatives.push(Alternative { transform: alt.compose(&self.pre.transform), fitness: *f });
        }
        if ambiguous {
            log::warn!("registration ambiguous: competing hypotheses within {} fitness", p.ambiguity_fitness);
        }
        let transform = t_c_refp.compose(&self.pre.transform);
        let result = RegistrationResult {
            transform,
            fitness: fit,
            inlier_rmse: out.inlier_rmse,
            plane_rmse: out.plane_rmse,
            iterations: out.iterations,
            converged: out.converged && fit >= p.min_fitness && out.plane_rmse <= p.max_plane_rmse_factor * p.voxel,
            ambiguous,
            objective_history: out.objective_history,
            alternatives,
        };
        Ok((transform, result))
    }

    fn scan_features(&self, fine: &PointCloud) -> Result<FeatureCloud> {
        let p = &self.params;
        let coarse = voxel_downsample(fine, p.coarse_voxel)?;
        if coarse.len() < 100 {
            return Err(Error::TooFewPoints { needed: 100, have: coarse.len() });
        }
        let with_normals = estimate_normals(&coarse, p.normal_k, &Point3::origin())?;
        FeatureCloud::new(with_normals, p.feature_radius_factor * p.coarse_voxel)
    }
}

/// Global alignment only: descriptors on both clouds, RANSAC, best hypothesis.
/// The returned transform maps `target` points into the `source` frame.
pub fn coarse_align(source: &PointCloud, target: &PointCloud, params: &RegistrationParams, seed: u64) -> Result<RegistrationResult> {
    params.validate()?;
    for c in [source, target] {
        if c.len() < 100 {
            return Err(Error::TooFewPoints { needed: 100, have: c.len() });
        }
    }
    let prep = |c: &PointCloud| -> Result<FeatureCloud> {
        let d = voxel_downsample(c, params.coarse_voxel)?;
        let d = if d.has_normals() { d } else { estimate_normals(&d, params.normal_k, &Point3::origin())? };
        FeatureCloud::new(d, params.feature_radius_factor * params.coarse_voxel)
    };
    let (s, t) = (prep(source)?, prep(target)?);
    let hyps = ransac_hypotheses(&s, &t, &params.ransac(seed))?;
    let best = hyps.first().ok_or_else(|| Error::Registration("no RANSAC hypothesis".into()))?;
    Ok(RegistrationResult {
        transform: best.transform,
        fitness: best.fitness,
        inlier_rmse: f64::NAN,
        plane_rmse: f64::NAN,
        iterations: 0,
        converged: best.fitness >= params.min_fitness,
        ambiguous: false,
        objective_history: vec![],
        alternatives: hyps[1..].iter().map(|h| Alternative { transform: h.transform, fitness: h.fitness }).collect(),
    })
}

/// Fine alignment from `init` (target → source). `target` needs normals.
pub fn refine_icp(source: &PointCloud, target: &PointCloud, init: &Transform, params: &RegistrationParams) -> Result<RegistrationResult> {
    params.validate()?;
    let t = IcpTarget::new(target)?;
    let out = icp_point_to_plane(source.points(), &t, &init.inverse(), &params.icp())?;
    let transform = out.source_to_target.inverse();
    let fit = fitness(source.points(), &t.tree, &transform, params.inlier_factor * params.voxel);
    Ok(RegistrationResult {
        transform,
        fitness: fit,
        inlier_rmse: out.inlier_rmse,
        plane_rmse: out.plane_rmse,
        iterations: out.iterations,
        converged: out.converged,
        ambiguous: false,
        objective_history: out.objective_history,
        alternatives: vec![],
    })
}

/// Full pipeline. Returns the transform mapping the original reference frame
/// (the robot base frame) into the camera frame.
pub fn register(scan: &PointCloud, reference: &PointCloud, params: &RegistrationParams, seed: u64) -> Result<(Transform, RegistrationResult)> {
    PreparedReference::from_cloud(reference, params)?.register(scan, seed)
}
