//! Rejection sampling of joint configurations whose flange-mounted camera
//! looks at the robot base.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{JointConfig, KinematicChain};
use crate::error::{Error, Result};
use crate::geom::RigidTransform;
use crate::scalar::Real;

/// How two configurations must differ to count as distinct poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoseDiffRule {
    /// At least one joint differs by the threshold.
    #[default]
    AnyJoint,
    /// Every joint differs by the threshold.
    AllJoints,
    /// Sum of absolute joint differences reaches the threshold.
    SumAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewConstraints {
    /// Half-angle of the cone around the camera +Z axis that must contain the target.
    pub cone_half_angle_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Lowest allowed camera height in the base frame.
    pub min_camera_height: f64,
    /// Steepest allowed camera elevation above the target, degrees. 90 disables.
    #[serde(default = "right_angle")]
    pub max_elevation_deg: f64,
    /// Point that must be visible, base frame. Usually the base origin.
    pub target: [f64; 3],
    pub min_joint_delta_deg: f64,
    pub rule: PoseDiffRule,
    pub max_attempts: usize,
}

impl Default for ViewConstraints {
    fn default() -> Self {
        Self {
            cone_half_angle_deg: 12.0,
            min_range: 0.4,
            max_range: 0.8,
            min_camera_height: 0.15,
            max_elevation_deg: 90.0,
            target: [0.0, 0.0, 0.0],
            min_joint_delta_deg: 20.0,
            rule: PoseDiffRule::AnyJoint,
            max_attempts: 2_000_000,
        }
    }
}

fn right_angle() -> f64 {
    90.0
}

impl ViewConstraints {
    /// Accepts every in-limit configuration.
    pub fn unconstrained() -> Self {
        Self {
            cone_half_angle_deg: 180.0,
            min_range: 0.0,
            max_range: f64::INFINITY,
            min_camera_height: f64::NEG_INFINITY,
            min_joint_delta_deg: 0.0,
            ..Self::default()
        }
    }
}

/// Geometric visibility of the constraint target from `camera` (camera pose in
/// the base frame, +Z viewing). No occlusion test.
pub fn is_base_visible<T: Real>(camera: &RigidTransform<T>, c: &ViewConstraints) -> bool {
    let cam = camera.cast::<f64>();
    if cam.translation.z < c.min_camera_height {
        return false;
    }
    let target = cam.inverse().transform_point(&Point3::from(c.target));
    let range = target.coords.norm();
    if !(range >= c.min_range && range <= c.max_range) {
        return false;
    }
    if c.max_elevation_deg < 90.0 {
        let d = cam.translation - Vector3::from(c.target);
        if d.z > 0.0 && (d.z / range).asin().to_degrees() > c.max_elevation_deg {
            return false;
        }
    }
    if c.cone_half_angle_deg >= 180.0 {
        return true;
    }
    if range == 0.0 {
        return false;
    }
    let angle = target.coords.angle(&Vector3::z()).to_degrees();
    angle <= c.cone_half_angle_deg
}

pub fn pose_is_distinct<T: Real>(q: &JointConfig<T>, accepted: &[JointConfig<T>], c: &ViewConstraints) -> bool {
    let thr = c.min_joint_delta_deg.to_radians();
    accepted.iter().all(|prev| {
        let d = q.angles.iter().zip(&prev.angles).map(|(a, b)| (*a - *b).abs().as_f64());
        match c.rule {
            PoseDiffRule::AnyJoint => d.fold(0.0, f64::max) >= thr,
            PoseDiffRule::AllJoints => d.fold(f64::INFINITY, f64::min) >= thr,
            PoseDiffRule::SumAbs => d.sum::<f64>() >= thr,
        }
    })
}

/// Draws one configuration within limits that sees the base and differs from
/// every configuration in `accepted`.
pub fn sample_base_looking_pose<T: Real, R: Rng + ?Sized>(
    chain: &KinematicChain<T>,
    camera_offset: &RigidTransform<T>,
    constraints: &ViewConstraints,
    accepted: &[JointConfig<T>],
    rng: &mut R,
) -> Result<JointConfig<T>> {
    let limits: Vec<(f64, f64)> = chain
        .revolute_joints()
        .map(|j| {
            let (lo, hi) = j.limits.expect("revolute joints carry limits");
            (lo.as_f64(), hi.as_f64())
        })
        .collect();
    let mut angles = vec![T::zero(); limits.len()];
    for _ in 0..constraints.max_attempts {
        for (a, &(lo, hi)) in angles.iter_mut().zip(&limits) {
            *a = T::lit(if hi > lo { rng.random_range(lo..=hi) } else { lo });
        }
        let camera = chain.fk_unchecked(&angles).compose(camera_offset);
        if !is_base_visible(&camera, constraints) {
            continue;
        }
        let q = JointConfig::new(angles.clone());
        if pose_is_distinct(&q, accepted, constraints) {
            return Ok(q);
        }
    }
    Err(Error::PoseSamplingExhausted {
        attempts: constraints.max_attempts,
        accepted: accepted.len(),
        requested: accepted.len() + 1,
    })
}

pub fn sample_base_looking_poses<T: Real, R: Rng + ?Sized>(
    chain: &KinematicChain<T>,
    camera_offset: &RigidTransform<T>,
    constraints: &ViewConstraints,
    n: usize,
    rng: &mut R,
) -> Result<Vec<JointConfig<T>>> {
    let mut accepted = Vec::with_capacity(n);
    for _ in 0..n {
        match sample_base_looking_pose(chain, camera_offset, constraints, &accepted, rng) {
            Ok(q) => accepted.push(q),
            Err(Error::PoseSamplingExhausted { attempts, accepted: got, .. }) => {
                return Err(Error::PoseSamplingExhausted { attempts, accepted: got, requested: n })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(accepted)
}
