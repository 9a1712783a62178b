//! Classical AX = XB eye-in-hand solver over relative motions (Park and
//! Martin: rotation by orthogonal Procrustes on log-map axes, translation by
//! linear least squares), and a generator of synthetic target observations.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::RigidTransform;
use crate::scalar::Real;
use crate::Transform;

/// Rotations below this angle count as weakly constraining.
pub const WEAK_MOTION_DEG: f64 = 5.0;
/// Smallest spread between motion axes the solver accepts.
pub const MIN_AXIS_SPREAD_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPair<T: Real> {
    /// Relative flange motion `T_b_t[i]⁻¹ · T_b_t[j]`.
    pub a: RigidTransform<T>,
    /// Relative target motion `T_c_o[i] · T_c_o[j]⁻¹`.
    pub b: RigidTransform<T>,
    pub i: usize,
    pub j: usize,
    /// Rotation of `a` below [`WEAK_MOTION_DEG`].
    pub weak: bool,
}

impl<T: Real> MotionPair<T> {
    pub fn new(a: RigidTransform<T>, b: RigidTransform<T>, i: usize, j: usize) -> Self {
        let weak = a.angle() < T::lit(WEAK_MOTION_DEG).to_rad();
        Self { a, b, i, j, weak }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairOptions {
    /// Every `i < j` instead of consecutive `(i, i + 1)`.
    pub all_pairs: bool,
}

/// Motion pairs from flange poses (flange → base) and target observations
/// (target → camera) taken at the same robot poses.
pub fn make_pairs<T: Real>(
    flange_poses: &[RigidTransform<T>],
    target_obs: &[RigidTransform<T>],
    opts: PairOptions,
) -> Result<Vec<MotionPair<T>>> {
    if flange_poses.len() != target_obs.len() {
        return Err(Error::LengthMismatch(flange_poses.len(), target_obs.len()));
    }
    let n = flange_poses.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, have: n });
    }
    let index: Vec<(usize, usize)> = if opts.all_pairs {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        (0..n - 1).map(|i| (i, i + 1)).collect()
    };
    Ok(index
        .into_iter()
        .map(|(i, j)| {
            let a = flange_poses[i].inverse().compose(&flange_poses[j]);
            let b = target_obs[i].compose(&target_obs[j].inverse());
            MotionPair::new(a, b, i, j)
        })
        .collect())
}

/// Solves `A X = X B` for the flange → camera transform `X`.
///
/// Pairs without rotation carry no axis and are skipped. Fails with
/// [`Error::Unobservable`] when the remaining rotation axes are all within
/// [`MIN_AXIS_SPREAD_DEG`] of one line.
pub fn solve_ax_xb<T: Real>(pairs: &[MotionPair<T>]) -> Result<RigidTransform<T>> {
    let tiny = T::EPS.sqrt();
    let usable: Vec<&MotionPair<T>> = pairs.iter().filter(|p| p.a.angle() > tiny && p.b.angle() > tiny).collect();
    if usable.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, have: usable.len() });
    }
    let axes: Vec<(Vector3<T>, Vector3<T>)> = usable.iter().map(|p| (p.a.rotation_vector(), p.b.rotation_vector())).collect();
    let min_spread = T::lit(MIN_AXIS_SPREAD_DEG).to_rad();
    let spread = axes
        .iter()
        .enumerate()
        .flat_map(|(k, (a, _))| axes[k + 1..].iter().map(move |(b, _)| {
            let c = (a.dot(b) / (a.norm() * b.norm())).abs();
            c.min(T::one()).acos()
        }))
        .fold(T::zero(), |m, v| if v > m { v } else { m });
    if spread <= min_spread {
        return Err(Error::Unobservable(format!(
            "motion axes span only {:.3} deg, need more than {MIN_AXIS_SPREAD_DEG} deg",
            spread.to_deg().as_f64()
        )));
    }

    // Rotation: R maximizing Σ αᵀ R β, i.e. R βₖ ≈ αₖ.
    let mut h = Matrix3::<T>::zeros();
    for (alpha, beta) in &axes {
        h += beta * alpha.transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let mut fix = Matrix3::<T>::identity();
    if d < T::zero() {
        fix[(2, 2)] = -T::one();
    }
    let r_x = v * fix * u.transpose();

    // Translation: (R_A − I) t = R_X t_B − t_A, stacked.
    let m = usable.len();
    let mut c = DMatrix::<T>::zeros(3 * m, 3);
    let mut rhs = DVector::<T>::zeros(3 * m);
    for (k, p) in usable.iter().enumerate() {
        let ra = p.a.rotation_matrix() - Matrix3::identity();
        let r = r_x * p.b.translation - p.a.translation;
        c.view_mut((3 * k, 0), (3, 3)).copy_from(&ra);
        rhs.rows_mut(3 * k, 3).copy_from(&r);
    }
    let t = c
        .svd(true, true)
        .solve(&rhs, T::EPS)
        .map_err(|e| Error::Unobservable(format!("translation system: {e}")))?;
    Ok(RigidTransform::from_rotation_matrix(&r_x, Vector3::new(t[0], t[1], t[2])))
}

/// Gaussian perturbation applied to synthetic observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    /// Per-axis std of the rotation-vector error, degrees.
    pub sigma_rot_deg: f64,
    /// Per-axis std of the translation error, millimeters.
    pub sigma_t_mm: f64,
}

impl ObservationNoise {
    pub fn none() -> Self {
        Self { sigma_rot_deg: 0.0, sigma_t_mm: 0.0 }
    }
}

impl Default for ObservationNoise {
    fn default() -> Self {
        Self { sigma_rot_deg: 0.1, sigma_t_mm: 0.5 }
    }
}

/// Target → camera observations consistent with flange → camera `x` and a
/// target fixed at `t_b_o` in the base frame, each perturbed on the left by
/// `noise`.
pub fn synthesize_observations<R: Rng + ?Sized>(
    flange_poses: &[Transform],
    x: &Transform,
    t_b_o: &Transform,
    noise: ObservationNoise,
    rng: &mut R,
) -> Result<Vec<Transform>> {
    let rot = Normal::new(0.0, noise.sigma_rot_deg.to_radians()).map_err(|e| Error::Parameter(e.to_string()))?;
    let tr = Normal::new(0.0, noise.sigma_t_mm * 1e-3).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(flange_poses
        .iter()
        .map(|t_b_t| {
            let exact = x.inverse().compose(&t_b_t.inverse()).compose(t_b_o);
            let w = Vector3::new(rot.sample(rng), rot.sample(rng), rot.sample(rng));
            let d = Vector3::new(tr.sample(rng), tr.sample(rng), tr.sample(rng));
            let e = Transform::new(nalgebra::UnitQuaternion::from_scaled_axis(w), d);
            e.compose(&exact)
        })
        .collect())
}
