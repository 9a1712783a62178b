//! Hand-eye solution from one registered base scan: invert the registration
//! to get the camera pose in the base frame, then close the chain through the
//! flange pose. Samples from many scans are fused by averaging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{average_transforms, RigidTransform};
use crate::registration::{PreparedReference, RegistrationResult};
use crate::scalar::Real;
use crate::Transform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Camera on the flange; the estimate is flange → camera.
    EyeInHand,
    /// Camera fixed in the cell; the estimate is the camera pose in the base frame.
    EyeToHand,
}

impl std::str::FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eye-in-hand" => Ok(Self::EyeInHand),
            "eye-to-hand" => Ok(Self::EyeToHand),
            _ => Err(Error::Parameter(format!("unknown mode `{s}`, expected eye-in-hand or eye-to-hand"))),
        }
    }
}

fn check_finite<T: Real>(t: &RigidTransform<T>, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} is not finite")))
    }
}

/// Camera pose in the base frame from the registration result (base → camera).
pub fn solve_eye_to_hand<T: Real>(t_c_ref: &RigidTransform<T>) -> Result<RigidTransform<T>> {
    check_finite(t_c_ref, "registration transform")?;
    Ok(t_c_ref.inverse())
}

/// Flange → camera transform from the registration result and the flange
/// pose in the base frame. Panics if the closed chain
/// `T_b_t · X · T_c_ref` is not the identity to rounding accuracy.
pub fn solve_eye_in_hand<T: Real>(t_c_ref: &RigidTransform<T>, t_b_t: &RigidTransform<T>) -> Result<RigidTransform<T>> {
    check_finite(t_b_t, "flange pose")?;
    let t_b_c = solve_eye_to_hand(t_c_ref)?;
    let x = t_b_t.inverse().compose(&t_b_c);
    let loop_ = t_b_t.compose(&x).compose(t_c_ref);
    let scale = T::one() + t_b_t.translation.norm() + t_c_ref.translation.norm();
    let tol = T::EPS * T::lit(1e3);
    assert!(
        loop_.angle() <= tol && loop_.translation.norm() <= tol * scale,
        "chain closure violated: {loop_:?}"
    );
    Ok(x)
}

/// Registration quality carried along with each estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub fitness: f64,
    pub rmse_m: f64,
    pub converged: bool,
}

impl From<&RegistrationResult> for Quality {
    fn from(r: &RegistrationResult) -> Self {
        Self { fitness: r.fitness, rmse_m: r.inlier_rmse, converged: r.converged }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub scan_id: String,
    /// Robot pose the scan was taken at, for per-pose fusion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_index: Option<usize>,
    /// Base → camera, from registration.
    pub t_c_b: Transform,
    /// Flange pose in the base frame (eye-in-hand only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b_t: Option<Transform>,
    pub estimate: Transform,
    pub quality: Quality,
}

impl CalibrationSample {
    pub fn eye_in_hand(scan_id: impl Into<String>, t_c_b: Transform, t_b_t: Transform, quality: Quality) -> Result<Self> {
        Ok(Self {
            scan_id: scan_id.into(),
            pose_index: None,
            estimate: solve_eye_in_hand(&t_c_b, &t_b_t)?,
            t_c_b,
            t_b_t: Some(t_b_t),
            quality,
        })
    }

    pub fn eye_to_hand(scan_id: impl Into<String>, t_c_b: Transform, quality: Quality) -> Result<Self> {
        Ok(Self {
            scan_id: scan_id.into(),
            pose_index: None,
            estimate: solve_eye_to_hand(&t_c_b)?,
            t_c_b,
            t_b_t: None,
            quality,
        })
    }

    pub fn with_pose_index(mut self, i: usize) -> Self {
        self.pose_index = Some(i);
        self
    }

    pub fn mode(&self) -> CalibrationMode {
        if self.t_b_t.is_some() {
            CalibrationMode::EyeInHand
        } else {
            CalibrationMode::EyeToHand
        }
    }

    /// Whether `estimate` is exactly what the solver returns for the stored inputs.
    pub fn is_consistent(&self) -> bool {
        let again = match &self.t_b_t {
            Some(t_b_t) => solve_eye_in_hand(&self.t_c_b, t_b_t),
            None => solve_eye_to_hand(&self.t_c_b),
        };
        again.is_ok_and(|e| e == self.estimate)
    }
}

/// Registers `scan` and solves for one calibration sample.
pub fn calibrate_scan(
    reference: &PreparedReference,
    scan: &PointCloud,
    t_b_t: Option<&Transform>,
    scan_id: impl Into<String>,
    seed: u64,
) -> Result<(CalibrationSample, RegistrationResult)> {
    let (t_c_b, res) = reference.register(scan, seed)?;
    let q = Quality::from(&res);
    let sample = match t_b_t {
        Some(t) => CalibrationSample::eye_in_hand(scan_id, t_c_b, *t, q)?,
        None => CalibrationSample::eye_to_hand(scan_id, t_c_b, q)?,
    };
    Ok((sample, res))
}

/// Per-axis spread of the sample estimates around the fused result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub translation_std_mm: [f64; 3],
    /// Std of the rotation-vector deviation from the fused rotation, per axis.
    pub rotation_std_deg: [f64; 3],
}

/// Fused result in the reporting convention: translation in meters and
/// XYZ Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSummary {
    pub translation_m: [f64; 3],
    pub euler_xyz_rad: [f64; 3],
    pub matrix: [[f64; 4]; 4],
}

impl From<&Transform> for PoseSummary {
    fn from(t: &Transform) -> Self {
        Self {
            translation_m: [t.translation.x, t.translation.y, t.translation.z],
            euler_xyz_rad: t.euler_xyz(),
            matrix: t.matrix_rows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mode: CalibrationMode,
    pub fused: Transform,
    pub summary: PoseSummary,
    pub spread: Spread,
    pub samples: Vec<CalibrationSample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuseOptions {
    /// Average per pose first, then average the pose means. Samples without
    /// a pose index form one group each.
    pub per_pose_mean: bool,
}

fn std_dev(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Spread of `estimates` around `center`.
pub fn spread(estimates: &[Transform], center: &Transform) -> Spread {
    let dev: Vec<_> = estimates.iter().map(|e| center.inverse().compose(e).rotation_vector()).collect();
    Spread {
        translation_std_mm: std::array::from_fn(|k| std_dev(estimates.iter().map(move |e| e.translation[k] * 1e3))),
        rotation_std_deg: std::array::from_fn(|k| std_dev(dev.iter().map(move |d| d[k].to_degrees()))),
    }
}

/// Plain average of all sample estimates.
pub fn fuse(samples: Vec<CalibrationSample>) -> Result<CalibrationReport> {
    fuse_with(samples, FuseOptions::default())
}

pub fn fuse_with(samples: Vec<CalibrationSample>, opts: FuseOptions) -> Result<CalibrationReport> {
    let first = samples.first().ok_or(Error::NoSamples)?;
    let mode = first.mode();
    if samples.iter().any(|s| s.mode() != mode) {
        return Err(Error::Parameter("samples mix eye-in-hand and eye-to-hand".into()));
    }
    let estimates: Vec<Transform> = samples.iter().map(|s| s.estimate).collect();
    let fused = if opts.per_pose_mean {
        let mut groups: BTreeMap<(usize, usize), Vec<Transform>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            let key = s.pose_index.map_or((1, i), |p| (0, p));
            groups.entry(key).or_default().push(s.estimate);
        }
        let means = groups.values().map(|g| average_transforms(g)).collect::<Result<Vec<_>>>()?;
        average_transforms(&means)?
    } else {
        average_transforms(&estimates)?
    };
    Ok(CalibrationReport {
        mode,
        summary: PoseSummary::from(&fused),
        spread: spread(&estimates, &fused),
        fused,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rre, rte};
    use nalgebra::Vector3;

    #[test]
    fn identities_give_identity() {
        let i = Transform::identity();
        assert_eq!(solve_eye_in_hand(&i, &i).unwrap(), i);
        assert_eq!(solve_eye_to_hand(&i).unwrap(), i);
    }

    #[test]
    fn eye_to_hand_matches_hand_inverse() {
        let t = Transform::new(
            nalgebra::UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let inv = solve_eye_to_hand(&t).unwrap();
        assert!((inv.translation - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let r = inv.rotation_matrix();
        let expect = nalgebra::Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expect).abs().max() < 1e-15);
    }

    #[test]
    fn single_precision_closes_too() {
        let a = crate::Transform32::from_xyz_rpy([0.3, -0.2, 0.5], [0.1, 0.7, -1.2]);
        let b = crate::Transform32::from_xyz_rpy([-0.4, 0.1, 0.9], [2.0, -0.3, 0.4]);
        let x = solve_eye_in_hand(&a, &b).unwrap();
        assert!(x.is_finite());
    }

    #[test]
    fn rejects_non_finite() {
        let bad = Transform::from_translation(Vector3::new(f64::NAN, 0.0, 0.0));
        assert!(solve_eye_to_hand(&bad).is_err());
        assert!(solve_eye_in_hand(&Transform::identity(), &bad).is_err());
    }

    fn sample(i: usize, t: Transform) -> CalibrationSample {
        let q = Quality { fitness: 1.0, rmse_m: 0.0, converged: true };
        CalibrationSample::eye_to_hand(format!("s{i}"), t.inverse(), q).unwrap()
    }

    #[test]
    fn fuse_one_and_identical() {
        let t = Transform::from_xyz_rpy([0.1, 0.2, 0.3], [0.4, 0.5, 0.6]);
        let r = fuse(vec![sample(0, t)]).unwrap();
        assert!(rte(&r.fused, &t) < 1e-12 && rre(&r.fused, &t) < 1e-9);
        let r = fuse((0..5).map(|i| sample(i, t)).collect()).unwrap();
        assert!(r.spread.translation_std_mm.iter().chain(&r.spread.rotation_std_deg).all(|&s| s < 1e-9));
        assert!(r.samples.iter().all(CalibrationSample::is_consistent));
        assert!(matches!(fuse(vec![]), Err(Error::NoSamples)));
    }

    #[test]
    fn per_pose_mean_weights_poses_equally() {
        let a = Transform::from_translation(Vector3::new(0.0, 0.0, 0.0));
        let b = Transform::from_translation(Vector3::new(0.003, 0.0, 0.0));
        let mut s: Vec<_> = (0..3).map(|i| sample(i, a).with_pose_index(0)).collect();
        s.push(sample(3, b).with_pose_index(1));
        let flat = fuse(s.clone()).unwrap();
        let per = fuse_with(s, FuseOptions { per_pose_mean: true }).unwrap();
        assert!((flat.fused.translation.x - 0.00075).abs() < 1e-15);
        assert!((per.fused.translation.x - 0.0015).abs() < 1e-15);
    }

    #[test]
    fn spread_is_sample_std() {
        let s = vec![
            sample(0, Transform::from_translation(Vector3::new(0.001, 0.0, 0.0))),
            sample(1, Transform::from_translation(Vector3::new(-0.001, 0.0, 0.0))),
        ];
        let r = fuse(s).unwrap();
        assert!((r.spread.translation_std_mm[0] - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.spread.translation_std_mm[1], 0.0);
    }
}
