//! Global alignment from feature correspondences: RANSAC over pairs of
//! oriented points with length and angle compatibility pruning.

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;

use super::fpfh::{compute_fpfh, Feature, FPFH_DIM};
use crate::cloud::{KdTree, KdTree3, PointCloud};
use crate::error::{Error, Result};
use crate::geom::rotation_distance;
use crate::scansim::view_rng;
use crate::Transform;

const CHUNK: usize = 1024;

/// A cloud with normals, FPFH descriptors and both search indices.
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    pub cloud: PointCloud,
    pub tree: KdTree3,
    pub features: Vec<Feature>,
    pub feature_tree: KdTree<FPFH_DIM>,
}

impl FeatureCloud {
    pub fn new(cloud: PointCloud, feature_radius: f64) -> Result<Self> {
        let tree = cloud.kdtree();
        let features = compute_fpfh(&cloud, &tree, feature_radius)?;
        let feature_tree = KdTree::build(features.clone());
        Ok(Self { cloud, tree, features, feature_tree })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier distance for correspondences and fitness, meters.
    pub distance: f64,
    /// Minimum ratio between corresponding pair distances.
    pub edge_ratio: f64,
    /// Shortest pair distance worth sampling, meters.
    pub min_baseline: f64,
    /// Largest disagreement of the pair's normal angles, degrees.
    pub normal_tolerance_deg: f64,
    /// Source points used for the quick fitness score.
    pub score_points: usize,
    /// Distinct hypotheses scored by full fitness.
    pub candidates: usize,
    /// Best-scoring hypotheses returned.
    pub keep: usize,
    pub seed: u64,
}

/// A candidate alignment mapping target (model) points into the source frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub transform: Transform,
    /// Fraction of source points with a target neighbor within the inlier distance.
    pub fitness: f64,
}

/// Index pairs `(source, target)` of nearest neighbors in feature space.
pub fn feature_correspondences(source: &FeatureCloud, target: &FeatureCloud) -> Vec<(usize, usize)> {
    source
        .features
        .par_iter()
        .enumerate()
        .filter_map(|(i, f)| target.feature_tree.nearest_squared(f).map(|(j, _)| (i, j)))
        .collect()
}

/// Fraction of `source` points lying within `distance` of the target after
/// mapping them into the target frame with `tf.inverse()`.
pub fn fitness(source: &[Point3<f64>], target: &KdTree3, tf: &Transform, distance: f64) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    let inv = tf.inverse();
    let hits = source
        .par_iter()
        .filter(|p| {
            let q = inv.transform_point(p);
            target.nearest_within(&[q.x, q.y, q.z], distance).is_some()
        })
        .count();
    hits as f64 / source.len() as f64
}

fn quick_score(sub: &[Point3<f64>], target: &KdTree3, tf: &Transform, distance: f64) -> usize {
    let inv = tf.inverse();
    sub.iter()
        .filter(|p| {
            let q = inv.transform_point(p);
            target.nearest_within(&[q.x, q.y, q.z], distance).is_some()
        })
        .count()
}

/// Frame at `p` with x along the pair direction and y from the normal's
/// perpendicular part. `None` when the normal is parallel to the pair.
fn pair_frame(p: &Point3<f64>, q: &Point3<f64>, n: &Vector3<f64>) -> Option<Matrix3<f64>> {
    let x = (q - p).normalize();
    let y = n - x * n.dot(&x);
    let yn = y.norm();
    if yn < 0.2 {
        return None;
    }
    let y = y / yn;
    Some(Matrix3::from_columns(&[x, y, x.cross(&y)]))
}

fn pair_angles(p: &Point3<f64>, n: &Vector3<f64>, q: &Point3<f64>, m: &Vector3<f64>) -> [f64; 3] {
    let d = (q - p).normalize();
    [n.dot(&d).clamp(-1.0, 1.0).acos(), m.dot(&d).clamp(-1.0, 1.0).acos(), n.dot(m).clamp(-1.0, 1.0).acos()]
}

pub(crate) fn distinct(a: &Transform, b: &Transform, angle_deg: f64, dist: f64) -> bool {
    rotation_distance(&a.rotation, &b.rotation).to_degrees() > angle_deg || (a.translation - b.translation).norm() > dist
}

/// Top `params.keep` distinct hypotheses, best fitness first. Each sample is
/// two feature correspondences of oriented points; pairs whose lengths or
/// normal angles disagree are pruned before scoring. Deterministic for a
/// fixed seed regardless of thread count.
pub fn ransac_hypotheses(source: &FeatureCloud, target: &FeatureCloud, params: &RansacParams) -> Result<Vec<Hypothesis>> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let corr = feature_correspondences(source, target);
    if corr.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, have: corr.len() });
    }
    let s = source.cloud.points();
    let t = target.cloud.points();
    let sn = source.cloud.normals().ok_or_else(|| Error::Parameter("source features need normals".into()))?;
    let tn = target.cloud.normals().ok_or_else(|| Error::Parameter("target features need normals".into()))?;
    let stride = (s.len() / params.score_points.max(1)).max(1);
    let sub: Vec<Point3<f64>> = s.iter().step_by(stride).copied().collect();
    let tol = params.normal_tolerance_deg.to_radians();
    let chunks = params.iterations.div_ceil(CHUNK);
    let keep = params.candidates.max(params.keep).max(1);

    // (quick score, iteration index, transform)
    let mut found: Vec<(usize, usize, Transform)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = view_rng(params.seed, c as u64);
            let mut best: Vec<(usize, usize, Transform)> = Vec::new();
            let end = ((c + 1) * CHUNK).min(params.iterations);
            for it in c * CHUNK..end {
                let (i0, j0) = corr[rng.random_range(0..corr.len())];
                let (i1, j1) = corr[rng.random_range(0..corr.len())];
                let ls = (s[i1] - s[i0]).norm();
                let lt = (t[j1] - t[j0]).norm();
                if ls < params.min_baseline || lt < params.min_baseline || ls.min(lt) < params.edge_ratio * ls.max(lt) {
                    continue;
                }
                let a = pair_angles(&s[i0], &sn[i0], &s[i1], &sn[i1]);
                let b = pair_angles(&t[j0], &tn[j0], &t[j1], &tn[j1]);
                if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > tol) {
                    continue;
                }
                let (Some(fs), Some(ft)) = (pair_frame(&s[i0], &s[i1], &sn[i0]), pair_frame(&t[j0], &t[j1], &tn[j0])) else {
                    continue;
                };
                let rot = UnitQuaternion::from_matrix(&(fs * ft.transpose()));
                let mid_s = Point3::from((s[i0].coords + s[i1].coords) * 0.5);
                let mid_t = Point3::from((t[j0].coords + t[j1].coords) * 0.5);
                let tf = Transform::new(rot, mid_s.coords - rot * mid_t.coords);
                let score = quick_score(&sub, &target.tree, &tf, params.distance);
                best.push((score, it, tf));
                if best.len() > 4 * keep {
                    best.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    best.truncate(keep);
                }
            }
            best.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            best.truncate(keep);
            best
        })
        .collect();
    found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut chosen: Vec<Hypothesis> = Vec::new();
    for (_, _, tf) in found {
        if chosen.len() >= keep {
            break;
        }
        if chosen.iter().all(|h| distinct(&h.transform, &tf, 5.0, 4.0 * params.distance)) {
            let f = fitness(s, &target.tree, &tf, params.distance);
            chosen.push(Hypothesis { transform: tf, fitness: f });
        }
    }
    chosen.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    chosen.truncate(params.keep.max(1));
    Ok(chosen)
}
