//! Point-to-plane ICP with a truncated objective and step halving.

use nalgebra::{Matrix3, Matrix6, Point3, UnitQuaternion, Vector3, Vector6};
use rayon::prelude::*;

use crate::cloud::{KdTree3, PointCloud};
use crate::error::{Error, Result};
use crate::Transform;

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Option<Transform> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cd = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let v = vt.transpose();
    let det = (v * u.transpose()).determinant();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    let r = v * fix * u.transpose();
    let rot = UnitQuaternion::from_matrix(&r);
    Some(Transform::new(rot, cd - rot * cs))
}

/// Model side of the fine stage: points with normals and their index.
#[derive(Debug, Clone)]
pub struct IcpTarget {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<nalgebra::Vector3<f64>>,
    pub tree: KdTree3,
}

impl IcpTarget {
    pub fn new(cloud: &PointCloud) -> Result<Self> {
        let normals = cloud
            .normals()
            .ok_or_else(|| Error::Parameter("point-to-plane ICP needs target normals".into()))?
            .to_vec();
        if cloud.is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(Self { points: cloud.points().to_vec(), normals, tree: cloud.kdtree() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    /// Correspondence gate, meters.
    pub max_distance: f64,
    pub max_iterations: usize,
    /// Stop once the norm of the accepted update falls below this.
    pub update_tolerance: f64,
    pub min_correspondences: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self { max_distance: 0.006, max_iterations: 100, update_tolerance: 1e-8, min_correspondences: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    /// Maps source points into the target frame.
    pub source_to_target: Transform,
    pub iterations: usize,
    pub converged: bool,
    /// Truncated point-to-plane objective after each accepted iteration,
    /// starting with the initial guess. Non-increasing.
    pub objective_history: Vec<f64>,
    /// Point-to-point RMSE over gated correspondences, meters.
    pub inlier_rmse: f64,
    /// Root mean squared point-to-plane residual over the gated pairs.
    pub plane_rmse: f64,
    pub correspondences: usize,
}

struct Eval {
    objective: f64,
    /// (source index, target index) of gated pairs.
    pairs: Vec<(usize, usize)>,
    sq_dist: f64,
    sq_plane: f64,
}

fn evaluate(src: &[Point3<f64>], target: &IcpTarget, x: &Transform, gate: f64) -> Eval {
    let g2 = gate * gate;
    let per: Vec<Option<(usize, f64, f64)>> = src
        .par_iter()
        .map(|p| {
            let q = x.transform_point(p);
            let (j, d2) = target.tree.nearest_within(&[q.x, q.y, q.z], gate)?;
            let r = target.normals[j].dot(&(q - target.points[j]));
            Some((j, r * r, d2))
        })
        .collect();
    let mut objective = 0.0;
    let mut sq_dist = 0.0;
    let mut sq_plane = 0.0;
    let mut pairs = Vec::new();
    for (i, c) in per.into_iter().enumerate() {
        match c {
            Some((j, r2, d2)) => {
                objective += r2.min(g2);
                sq_dist += d2;
                sq_plane += r2;
                pairs.push((i, j));
            }
            None => objective += g2,
        }
    }
    Eval { objective: objective / src.len().max(1) as f64, pairs, sq_dist, sq_plane }
}

/// Gauss-Newton step `(omega, v)` for a left update of `x`.
fn solve_step(src: &[Point3<f64>], target: &IcpTarget, x: &Transform, pairs: &[(usize, usize)]) -> Option<Vector6<f64>> {
    let mut a = Matrix6::zeros();
    let mut b = Vector6::zeros();
    for &(i, j) in pairs {
        let q = x.transform_point(&src[i]);
        let n = target.normals[j];
        let r = n.dot(&(q - target.points[j]));
        let c = q.coords.cross(&n);
        let jrow = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        a += jrow * jrow.transpose();
        b += jrow * r;
    }
    a.cholesky().map(|ch| -ch.solve(&b))
}

fn apply(step: &Vector6<f64>, x: &Transform) -> Transform {
    let omega = Vector3::new(step[0], step[1], step[2]);
    let v = Vector3::new(step[3], step[4], step[5]);
    Transform::new(UnitQuaternion::from_scaled_axis(omega), v).compose(x)
}

/// Refines `init` (source → target) by point-to-plane ICP. A step is accepted
/// only if it lowers the truncated objective; otherwise it is halved.
pub fn icp_point_to_plane(source: &[Point3<f64>], target: &IcpTarget, init: &Transform, params: &IcpParams) -> Result<IcpOutcome> {
    if target.points.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let gate = params.max_distance;
    let mut x = *init;
    let mut cur = evaluate(source, target, &x, gate);
    let mut history = vec![cur.objective];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        if cur.pairs.len() < params.min_correspondences {
            return Err(Error::Diverged(cur.pairs.len()));
        }
        let Some(mut step) = solve_step(source, target, &x, &cur.pairs) else {
            return Err(Error::Registration("degenerate point-to-plane system".into()));
        };
        iterations += 1;
        let mut accepted = None;
        for _ in 0..12 {
            if step.norm() < params.update_tolerance {
                break;
            }
            let cand = apply(&step, &x);
            let e = evaluate(source, target, &cand, gate);
            if e.objective <= cur.objective {
                accepted = Some((cand, e));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, e)) => {
                x = cand;
                cur = e;
                history.push(cur.objective);
                if step.norm() < params.update_tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                // No descent left along the Gauss-Newton direction.
                converged = true;
                break;
            }
        }
    }
    if cur.pairs.len() < params.min_correspondences {
        return Err(Error::Diverged(cur.pairs.len()));
    }
    let inlier_rmse = (cur.sq_dist / cur.pairs.len() as f64).sqrt();
    let plane_rmse = (cur.sq_plane / cur.pairs.len() as f64).sqrt();
    Ok(IcpOutcome {
        source_to_target: x,
        iterations,
        converged,
        objective_history: history,
        inlier_rmse,
        plane_rmse,
        correspondences: cur.pairs.len(),
    })
}
