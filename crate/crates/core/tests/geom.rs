//! Rigid-body math against plain 4×4 matrix arithmetic, plus the metric and
//! averaging invariants.

use basecal::geom::{compose, inverse, rotation_distance};
use basecal::{average_transforms, rre, rte, PoseError, Transform};
use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;

fn arb_transform() -> impl Strategy<Value = Transform> {
    (
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform3(-2.0f64..2.0),
    )
        .prop_filter("quaternion needs a direction", |(q, _)| q.iter().map(|c| c * c).sum::<f64>() > 1e-3)
        .prop_map(|(q, t)| {
            let q = UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3]));
            Transform::new(q, Vector3::from(t))
        })
}

fn mat(t: &Transform) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| t.matrix_rows()[i][j])
}

fn max_abs(m: Matrix4<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

proptest! {
    #[test]
    fn compose_is_matrix_product(a in arb_transform(), b in arb_transform()) {
        prop_assert!(max_abs(mat(&compose(&a, &b)) - mat(&a) * mat(&b)) < 1e-12);
    }

    #[test]
    fn inverse_is_matrix_inverse(a in arb_transform()) {
        let m_inv = mat(&a).try_inverse().unwrap();
        prop_assert!(max_abs(mat(&inverse(&a)) - m_inv) < 1e-12);
    }

    #[test]
    fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!(rte(&l, &r) < 1e-9 && rre(&l, &r) < 1e-9);
    }

    #[test]
    fn inverse_cancels_both_sides(a in arb_transform()) {
        let i = Transform::identity();
        for t in [a.compose(&a.inverse()), a.inverse().compose(&a)] {
            prop_assert!(t.translation.norm() < 1e-12);
            prop_assert!(t.angle() < 1e-12);
            prop_assert!(rre(&t, &i).to_radians() < 1e-12);
        }
        let back = a.inverse().inverse();
        prop_assert!(rte(&back, &a) < 1e-9 && rre(&back, &a).to_radians() < 1e-12);
    }

    #[test]
    fn quaternion_stays_unit(a in arb_transform(), b in arb_transform()) {
        for t in [a.compose(&b), a.inverse(), b.compose(&a.inverse())] {
            prop_assert!((t.rotation.quaternion().norm() - 1.0).abs() < 1e-12);
            let r = t.rotation_matrix();
            prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn errors_are_bounded_and_symmetric(a in arb_transform(), b in arb_transform()) {
        let e = PoseError::between(&a, &b);
        prop_assert!(e.rte_mm >= 0.0 && (0.0..=180.0).contains(&e.rre_deg));
        prop_assert!((rre(&a, &b) - rre(&b, &a)).abs() < 1e-12);
        prop_assert!((rte(&a, &b) - rte(&b, &a)).abs() < 1e-12);
        prop_assert_eq!(rre(&a, &a), 0.0);
        prop_assert_eq!(rte(&a, &a), 0.0);
    }

    #[test]
    fn rre_is_the_relative_rotation_angle(a in arb_transform(), b in arb_transform()) {
        let rel = a.inverse().compose(&b).angle().to_degrees();
        prop_assert!((rre(&a, &b) - rel).abs() < 1e-9);
        prop_assert!((rotation_distance(&a.rotation, &b.rotation).to_degrees() - rel).abs() < 1e-9);
    }

    #[test]
    fn average_of_small_spread_is_permutation_and_sign_invariant(
        center in arb_transform(),
        jitter in prop::collection::vec((prop::array::uniform3(-0.2f64..0.2), prop::array::uniform3(-0.01f64..0.01), any::<bool>()), 2..12),
    ) {
        let list: Vec<Transform> = jitter
            .iter()
            .map(|(w, t, _)| center.compose(&Transform::new(UnitQuaternion::from_scaled_axis(Vector3::from(*w)), Vector3::from(*t))))
            .collect();
        let flipped: Vec<Transform> = list
            .iter()
            .zip(&jitter)
            .map(|(t, (_, _, flip))| {
                if *flip {
                    Transform::new(UnitQuaternion::new_unchecked(-t.rotation.into_inner()), t.translation)
                } else {
                    *t
                }
            })
            .collect();
        let mut reversed = list.clone();
        reversed.reverse();
        let base = average_transforms(&list).unwrap();
        for other in [average_transforms(&flipped).unwrap(), average_transforms(&reversed).unwrap()] {
            prop_assert!(rotation_distance(&base.rotation, &other.rotation) < 1e-10);
            prop_assert!((base.translation - other.translation).norm() < 1e-12);
        }
        // The mean rotation lies within the spread of the inputs.
        let worst = list.iter().map(|t| rre(t, &base)).fold(0.0, f64::max);
        prop_assert!(worst <= 2.0 * 0.35f64.to_degrees());
    }
}

#[test]
fn hand_computed_compose_and_inverse() {
    let rz90 = |t: [f64; 3]| Transform::new(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2), Vector3::from(t));
    let c = compose(&rz90([1.0, 0.0, 0.0]), &rz90([0.0, 0.0, 0.0]));
    let rz180 = Transform::new(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI), Vector3::new(1.0, 0.0, 0.0));
    assert!(rte(&c, &rz180) < 1e-12 && rre(&c, &rz180).to_radians() < 1e-12);

    let inv = inverse(&rz90([1.0, 2.0, 3.0]));
    assert!((inv.translation - Vector3::new(-2.0, 1.0, -3.0)).norm() < 1e-12);
    let rzm90 = Transform::rot_z(-std::f64::consts::FRAC_PI_2);
    assert!(rre(&inv, &rzm90).to_radians() < 1e-12);
}

#[test]
fn same_axis_average_is_angle_mean() {
    // Many angles about one axis: the quaternion mean equals the plain angle mean
    // when the spread is small and symmetric enough.
    let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
    let angles = [0.1, 0.15, 0.2, 0.12, 0.18];
    let list: Vec<Transform> = angles.iter().map(|a| Transform::from_axis_angle(&axis, *a)).collect();
    let got = average_transforms(&list).unwrap();
    // Markley's mean of same-axis rotations is the rotation whose half-angle
    // direction is the normalized sum of the half-angle unit vectors.
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + (a / 2.0f64).sin(), c + (a / 2.0f64).cos()));
    let oracle = 2.0 * s.atan2(c);
    let want = Transform::from_axis_angle(&axis, oracle);
    assert!(rre(&got, &want).to_radians() < 1e-9);
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    assert!((oracle - mean).abs() < 1e-4);

    let two = [Transform::rot_z(10f64.to_radians()), Transform::rot_z(20f64.to_radians())];
    let mid = average_transforms(&two).unwrap();
    assert!(rre(&mid, &Transform::rot_z(15f64.to_radians())).to_radians() < 1e-9);
}

#[test]
fn small_x_rotation_error_in_degrees() {
    let e = Transform::rot_x(0.39f64.to_radians());
    assert!((rre(&e, &Transform::identity()) - 0.39).abs() < 1e-9);
}

#[test]
fn json_matches_documented_shape() {
    let t = Transform::from_xyz_rpy([0.1, -0.2, 0.3], [0.4, 0.0, -0.1]);
    let v = serde_json::to_value(t).unwrap();
    let obj = v.as_object().unwrap();
    assert_eq!(obj.len(), 2);
    assert_eq!(obj["quaternion"].as_array().unwrap().len(), 4);
    assert_eq!(v["translation_m"], serde_json::json!([0.1, -0.2, 0.3]));
    let back: Transform = serde_json::from_value(v).unwrap();
    assert!(rte(&back, &t) < 1e-15 && rre(&back, &t).to_radians() < 1e-12);
}
