//! Rigid-body math on SE(3): transforms, error metrics and rotation averaging.
//!
//! Rotations are unit quaternions internally and translations are meters.
//! The reporting helpers (`rte`, `rre`, [`PoseError`]) convert to
//! millimeters and degrees.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, SymmetricEigen, Unit, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Element of SE(3). Maps points from its source frame into its target frame:
/// `p_target = rotation * p_source + translation`.
#[derive(Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> fmt::Debug for RigidTransform<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "RigidTransform {{ q: [{:?}, {:?}, {:?}, {:?}], t: [{:?}, {:?}, {:?}] }}",
            q.w, q.i, q.j, q.k, self.translation.x, self.translation.y, self.translation.z
        )
    }
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, re-normalizing the rotation.
    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: UnitQuaternion<T>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        Self::from_rotation(UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle))
    }

    pub fn rot_x(angle: T) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }

    pub fn rot_y(angle: T) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn rot_z(angle: T) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    /// Fixed-axis roll/pitch/yaw: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [T; 3], rpy: [T; 3]) -> Self {
        Self::new(
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
            Vector3::new(xyz[0], xyz[1], xyz[2]),
        )
    }

    /// Rotation from a (nearly) orthonormal matrix plus translation.
    pub fn from_rotation_matrix(r: &Matrix3<T>, translation: Vector3<T>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// Reads a homogeneous 4x4 matrix. The bottom row is ignored.
    pub fn from_matrix4(m: &Matrix4<T>) -> Self {
        let r: Matrix3<T> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<T> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::from_rotation_matrix(&r, t)
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn to_matrix4(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: renormalize(self.rotation * other.rotation),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// `(R, t) ↦ (Rᵀ, −Rᵀt)`.
    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> T {
        quat_angle(&self.rotation)
    }

    /// Axis-angle vector (log map of the rotation).
    pub fn rotation_vector(&self) -> Vector3<T> {
        self.rotation.scaled_axis()
    }

    /// Fixed-axis XYZ Euler angles `(rx, ry, rz)` in radians.
    pub fn euler_xyz(&self) -> [T; 3] {
        let (r, p, y) = self.rotation.euler_angles();
        [r, p, y]
    }

    pub fn is_finite(&self) -> bool {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k, self.translation.x, self.translation.y, self.translation.z]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        let q = self.rotation.quaternion();
        let c = |v: T| U::lit(v.as_f64());
        RigidTransform::new(
            UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(
                c(q.w),
                c(q.i),
                c(q.j),
                c(q.k),
            )),
            Vector3::new(c(self.translation.x), c(self.translation.y), c(self.translation.z)),
        )
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [T; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Row-major 4x4 matrix.
    pub fn matrix_rows(&self) -> [[T; 4]; 4] {
        let m = self.to_matrix4();
        let mut rows = [[T::zero(); 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        rows
    }
}

impl<T: Real> std::ops::Mul for RigidTransform<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

/// Rotation angle via `atan2`, accurate near the identity where `acos(w)` is not.
pub fn quat_angle<T: Real>(q: &UnitQuaternion<T>) -> T {
    let q = q.quaternion();
    T::lit(2.0) * q.imag().norm().atan2(q.w.abs())
}

/// Geodesic distance between two rotations, radians.
pub fn rotation_distance<T: Real>(a: &UnitQuaternion<T>, b: &UnitQuaternion<T>) -> T {
    // conj(a) * b written out so that a == b yields an exactly zero vector part.
    let (a, b) = (a.quaternion(), b.quaternion());
    let w = a.w * b.w + a.i * b.i + a.j * b.j + a.k * b.k;
    let x = a.w * b.i - b.w * a.i - (a.j * b.k - a.k * b.j);
    let y = a.w * b.j - b.w * a.j - (a.k * b.i - a.i * b.k);
    let z = a.w * b.k - b.w * a.k - (a.i * b.j - a.j * b.i);
    let v = (x * x + y * y + z * z).sqrt();
    T::lit(2.0) * v.atan2(w.abs())
}

fn renormalize<T: Real>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    UnitQuaternion::new_normalize(q.into_inner())
}

pub fn compose<T: Real>(a: &RigidTransform<T>, b: &RigidTransform<T>) -> RigidTransform<T> {
    a.compose(b)
}

pub fn inverse<T: Real>(t: &RigidTransform<T>) -> RigidTransform<T> {
    t.inverse()
}

/// Relative translation error in millimeters.
pub fn rte<T: Real>(estimate: &RigidTransform<T>, truth: &RigidTransform<T>) -> T {
    (estimate.translation - truth.translation).norm() * T::lit(1000.0)
}

/// Relative rotation error (geodesic angle) in degrees.
///
/// Evaluated on the relative quaternion with `atan2`, which equals
/// `acos((trace(RᵀR̄) − 1) / 2)` but stays exact at zero and well-conditioned
/// for tiny angles.
pub fn rre<T: Real>(estimate: &RigidTransform<T>, truth: &RigidTransform<T>) -> T {
    rotation_distance(&estimate.rotation, &truth.rotation).to_deg()
}

/// Translation (mm) and rotation (deg) error of an estimate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rte_mm: f64,
    pub rre_deg: f64,
}

impl PoseError {
    pub fn between<T: Real>(estimate: &RigidTransform<T>, truth: &RigidTransform<T>) -> Self {
        Self {
            rte_mm: rte(estimate, truth).as_f64(),
            rre_deg: rre(estimate, truth).as_f64(),
        }
    }
}

/// Mean of rigid transforms: arithmetic mean of translations, and the
/// principal eigenvector of `Σ qᵢqᵢᵀ` for the rotation. Quaternions are
/// sign-aligned to the first element before accumulating.
pub fn average_transforms<T: Real>(list: &[RigidTransform<T>]) -> Result<RigidTransform<T>> {
    let first = list.first().ok_or(Error::NoSamples)?;
    let reference = first.rotation.into_inner().coords;
    let mut acc = Matrix4::<T>::zeros();
    let mut t_sum = Vector3::<T>::zeros();
    for tf in list {
        let mut q: Vector4<T> = tf.rotation.into_inner().coords;
        if q.dot(&reference) < T::zero() {
            q = -q;
        }
        acc += q * q.transpose();
        t_sum += tf.translation;
    }
    let n = T::from_usize(list.len()).expect("count fits scalar");

    let eig = SymmetricEigen::new(acc);
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut v: Vector4<T> = eig.eigenvectors.column(best).into_owned();
    if v.dot(&reference) < T::zero() {
        v = -v;
    }
    // nalgebra stores quaternion coords as [i, j, k, w].
    let q = nalgebra::Quaternion::from(v);
    Ok(RigidTransform::new(UnitQuaternion::new_normalize(q), t_sum / n))
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    quaternion: [f64; 4],
    translation_m: [f64; 3],
}

impl<T: Real> Serialize for RigidTransform<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let q = self.quaternion_wxyz();
        TransformRepr {
            quaternion: q.map(Real::as_f64),
            translation_m: [
                self.translation.x.as_f64(),
                self.translation.y.as_f64(),
                self.translation.z.as_f64(),
            ],
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for RigidTransform<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TransformRepr::deserialize(d)?;
        let [w, x, y, z] = r.quaternion.map(T::lit);
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if q.norm() <= T::zero() {
            return Err(serde::de::Error::custom("zero quaternion"));
        }
        let [tx, ty, tz] = r.translation_m.map(T::lit);
        Ok(RigidTransform::new(UnitQuaternion::new_normalize(q), Vector3::new(tx, ty, tz)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    type Tf = RigidTransform<f64>;

    /// Plain 4x4 product used as an independent oracle.
    fn matmul4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    fn rotz_rows(theta: f64, t: [f64; 3]) -> [[f64; 4]; 4] {
        let (s, c) = theta.sin_cos();
        [
            [c, -s, 0.0, t[0]],
            [s, c, 0.0, t[1]],
            [0.0, 0.0, 1.0, t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    fn assert_rows_close(a: [[f64; 4]; 4], b: [[f64; 4]; 4], tol: f64) {
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[i][j] - b[i][j]).abs() < tol, "({i},{j}): {a:?} vs {b:?}");
            }
        }
    }

    fn arb_transform() -> impl Strategy<Value = Tf> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            0.0..PI,
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_filter("non-zero axis", |(a, _, _)| {
                Vector3::new(a[0], a[1], a[2]).norm() > 1e-3
            })
            .prop_map(|(a, ang, t)| {
                let r = Tf::from_axis_angle(&Vector3::new(a[0], a[1], a[2]), ang);
                Tf::new(r.rotation, Vector3::new(t[0], t[1], t[2]))
            })
    }

    #[test]
    fn compose_identity() {
        let id = Tf::identity();
        assert_eq!(compose(&id, &id), id);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = Tf::new(Tf::rot_z(FRAC_PI_2).rotation, Vector3::new(1.0, 0.0, 0.0));
        let b = Tf::rot_z(FRAC_PI_2);
        let c = compose(&a, &b);
        let oracle = matmul4(&rotz_rows(FRAC_PI_2, [1.0, 0.0, 0.0]), &rotz_rows(FRAC_PI_2, [0.0; 3]));
        assert_rows_close(c.matrix_rows(), oracle, 1e-12);
        assert_rows_close(c.matrix_rows(), rotz_rows(PI, [1.0, 0.0, 0.0]), 1e-12);
    }

    #[test]
    fn inverse_matches_matrix_inverse() {
        let t = Tf::new(Tf::rot_z(FRAC_PI_2).rotation, Vector3::new(1.0, 2.0, 3.0));
        let inv = inverse(&t);
        assert_rows_close(inv.matrix_rows(), rotz_rows(-FRAC_PI_2, [-2.0, 1.0, -3.0]), 1e-12);
        let m = t.to_matrix4().try_inverse().unwrap();
        assert!((m - inv.to_matrix4()).abs().max() < 1e-12);
        assert_eq!(inverse(&Tf::identity()), Tf::identity());
    }

    #[test]
    fn rte_unit_conversion() {
        let est = Tf::from_translation(Vector3::new(0.001, 0.0, 0.0));
        assert!((rte(&est, &Tf::identity()) - 1.0).abs() < 1e-12);
        assert_eq!(rte(&est, &est), 0.0);
    }

    #[test]
    fn rre_known_angles() {
        assert!((rre(&Tf::rot_z(PI), &Tf::identity()) - 180.0).abs() < 1e-9);
        let est = Tf::rot_x(0.39f64.to_radians());
        assert!((rre(&est, &Tf::identity()) - 0.39).abs() < 1e-9);
        let tiny = Tf::rot_y(1e-9);
        let v = rre(&tiny, &Tf::identity());
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn average_rejects_empty() {
        assert!(matches!(average_transforms::<f64>(&[]), Err(Error::NoSamples)));
    }

    #[test]
    fn average_of_copies_and_double_cover() {
        let t = Tf::new(
            Tf::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 1.1).rotation,
            Vector3::new(0.1, -0.2, 0.3),
        );
        let avg = average_transforms(&[t; 7]).unwrap();
        assert!(rre(&avg, &t) < 1e-9);
        assert!(rte(&avg, &t) < 1e-9);

        let flipped = Tf {
            rotation: UnitQuaternion::new_unchecked(-t.rotation.into_inner()),
            ..t
        };
        let avg = average_transforms(&[t, flipped]).unwrap();
        assert!(rre(&avg, &t) < 1e-9);
    }

    #[test]
    fn average_same_axis_matches_slerp_midpoint() {
        let a = Tf::rot_z(10f64.to_radians());
        let b = Tf::rot_z(20f64.to_radians());
        let avg = average_transforms(&[a, b]).unwrap();
        let mid = a.rotation.slerp(&b.rotation, 0.5);
        assert!(rotation_distance(&avg.rotation, &mid) < 1e-9);
        assert!((avg.angle() - 15f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn json_shape() {
        let t = Tf::new(Tf::rot_z(FRAC_PI_2).rotation, Vector3::new(1.0, 2.0, 3.0));
        let v = serde_json::to_value(t).unwrap();
        assert_eq!(v["translation_m"], serde_json::json!([1.0, 2.0, 3.0]));
        assert_eq!(v["quaternion"].as_array().unwrap().len(), 4);
        let back: Tf = serde_json::from_value(v).unwrap();
        assert!(rre(&back, &t) < 1e-12 && rte(&back, &t) < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let t = RigidTransform::<f32>::new(
            RigidTransform::<f32>::rot_x(0.3).rotation,
            Vector3::new(0.1, 0.2, 0.3),
        );
        let id = t.compose(&t.inverse());
        assert!(id.angle() < 1e-3 && id.translation.norm() < 1e-6);
        let back: RigidTransform<f64> = t.cast();
        assert!((back.angle() - 0.3).abs() < 1e-6);
    }

    /// Trace form of the rotation error, clamped before `acos`.
    fn rre_trace(a: &Tf, b: &Tf) -> f64 {
        let tr = (a.rotation_matrix().transpose() * b.rotation_matrix()).trace();
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
    }

    proptest! {
        #[test]
        fn rre_matches_trace_formula(a in arb_transform(), b in arb_transform()) {
            prop_assert!((rre(&a, &b) - rre_trace(&a, &b)).abs() < 1e-6);
        }

        #[test]
        fn compose_inverse_is_identity(t in arb_transform()) {
            let id = t.compose(&t.inverse());
            prop_assert!(id.angle() < 1e-12);
            prop_assert!(id.translation.norm() < 1e-12);
            let back = t.inverse().inverse();
            prop_assert!(rotation_distance(&back.rotation, &t.rotation) < 1e-12);
            prop_assert!((back.translation - t.translation).norm() < 1e-12);
        }

        #[test]
        fn rotation_matrix_is_orthonormal(t in arb_transform()) {
            let r = t.rotation_matrix();
            prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
            let q = t.rotation.quaternion();
            prop_assert!((q.norm_squared() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn quaternion_matrix_round_trip(t in arb_transform()) {
            let back = Tf::from_rotation_matrix(&t.rotation_matrix(), Vector3::zeros());
            let a = t.quaternion_wxyz();
            let b = back.quaternion_wxyz();
            let s = if a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for i in 0..4 {
                prop_assert!((a[i] - s * b[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn metrics_are_zero_on_self_and_symmetric(a in arb_transform(), b in arb_transform()) {
            prop_assert_eq!(rre(&a, &a), 0.0);
            prop_assert_eq!(rte(&a, &a), 0.0);
            prop_assert!((rre(&a, &b) - rre(&b, &a)).abs() < 1e-12);
            let r = rre(&a, &b);
            prop_assert!((0.0..=180.0).contains(&r));
        }

        #[test]
        fn near_identical_rotations_give_finite_rre(t in arb_transform(), eps in 0.0f64..1e-8) {
            let p = t.compose(&Tf::rot_x(eps));
            prop_assert!(rre(&p, &t).is_finite());
        }

        #[test]
        fn average_invariant_to_sign_and_order(
            base in arb_transform(),
            deltas in prop::collection::vec((prop::array::uniform3(-0.2f64..0.2), any::<bool>()), 2..8),
        ) {
            let list: Vec<Tf> = deltas.iter().map(|(d, _)| {
                base.compose(&Tf::from_rotation(UnitQuaternion::from_scaled_axis(Vector3::new(d[0], d[1], d[2]))))
            }).collect();
            let flipped: Vec<Tf> = list.iter().zip(&deltas).map(|(t, (_, f))| {
                if *f { Tf { rotation: UnitQuaternion::new_unchecked(-t.rotation.into_inner()), ..*t } } else { *t }
            }).collect();
            let mut reversed = flipped.clone();
            reversed.reverse();
            let a = average_transforms(&list).unwrap();
            let b = average_transforms(&flipped).unwrap();
            let c = average_transforms(&reversed).unwrap();
            prop_assert!(rotation_distance(&a.rotation, &b.rotation) < 1e-10);
            prop_assert!(rotation_distance(&a.rotation, &c.rotation) < 1e-10);
        }
    }
}
