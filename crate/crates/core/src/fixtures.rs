//! Procedural test robots: base meshes and a 6-DOF serial chain with
//! UR5e-like dimensions. The same data ships as files under `fixtures/`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point2, Point3, Vector3};

use crate::cloud::TriangleMesh;
use crate::kinematics::{Joint, KinematicChain};
use crate::Transform;

/// Base of the default test robot, meters, base frame at the mounting face
/// center with +Z up. Mounting plate with a tab, faceted column with an
/// off-center cap, cable connector, side boss and cable gland; no rotational
/// or mirror symmetry.
pub fn robot_base_mesh() -> TriangleMesh {
    let plate = [
        Point2::new(-0.085, -0.095),
        Point2::new(0.095, -0.095),
        Point2::new(0.15, -0.03),
        Point2::new(0.15, 0.02),
        Point2::new(0.095, 0.095),
        Point2::new(-0.03, 0.095),
        Point2::new(-0.085, 0.06),
    ];
    let mut m = TriangleMesh::extrude(&plate, 0.0, 0.012);
    m.append(&TriangleMesh::cylinder(Point2::origin(), 0.075, 0.012, 0.09, 40));
    m.append(&TriangleMesh::cylinder(Point2::new(0.012, -0.008), 0.05, 0.09, 0.104, 32));
    m.append(&TriangleMesh::cuboid(Point3::new(0.07, -0.022, 0.02), Point3::new(0.115, 0.022, 0.058)));
    m.append(&TriangleMesh::cylinder(Point2::new(-0.03, -0.078), 0.016, 0.012, 0.05, 16));
    m.append(&TriangleMesh::cylinder(Point2::new(-0.06, 0.07), 0.01, 0.012, 0.035, 16));
    // Strain-relief wedge on the tab; its slope faces +Y so yaw is observable from above.
    let wedge = [Point2::new(-0.025, 0.012), Point2::new(0.015, 0.012), Point2::new(-0.025, 0.042)];
    m.append(&TriangleMesh::extrude(&wedge, 0.12, 0.145).transformed(&yz_to_xy()));
    m
}

/// Maps an extrusion built in the XY plane along Z onto the YZ plane along X.
fn yz_to_xy() -> Transform {
    let r = nalgebra::Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    Transform::new(nalgebra::UnitQuaternion::from_matrix(&r), Vector3::zeros())
}

/// A different robot's base, for negative registration tests.
pub fn other_base_mesh() -> TriangleMesh {
    let mut m = TriangleMesh::cuboid(Point3::new(-0.11, -0.11, 0.0), Point3::new(0.11, 0.11, 0.02));
    m.append(&TriangleMesh::cylinder(Point2::origin(), 0.095, 0.02, 0.13, 48));
    m.append(&TriangleMesh::cuboid(Point3::new(-0.03, 0.085, 0.03), Point3::new(0.03, 0.13, 0.1)));
    m
}

/// Six revolute joints with UR5e-like link lengths and URDF-style origins,
/// followed by a fixed flange frame.
pub fn ur5e_like_chain() -> KinematicChain<f64> {
    let rev = |name: &str, xyz: [f64; 3], rpy: [f64; 3], lim: f64| {
        Joint::revolute(name, Transform::from_xyz_rpy(xyz, rpy), Vector3::z(), (-lim, lim)).expect("valid joint")
    };
    let tau = 2.0 * PI;
    KinematicChain::new(
        "ur5e_like",
        vec![
            rev("shoulder_pan", [0.0, 0.0, 0.1625], [0.0, 0.0, 0.0], tau),
            rev("shoulder_lift", [0.0, 0.0, 0.0], [FRAC_PI_2, 0.0, 0.0], tau),
            rev("elbow", [-0.425, 0.0, 0.0], [0.0, 0.0, 0.0], PI),
            rev("wrist_1", [-0.3922, 0.0, 0.1333], [0.0, 0.0, 0.0], tau),
            rev("wrist_2", [0.0, -0.0997, 0.0], [FRAC_PI_2, 0.0, 0.0], tau),
            rev("wrist_3", [0.0, 0.0996, 0.0], [FRAC_PI_2, PI, PI], tau),
            Joint::fixed("flange", Transform::identity()),
        ],
    )
    .expect("valid chain")
}

/// Flange-to-camera transform used as simulation ground truth: a camera
/// mounted about 12 cm ahead of the flange, slightly off-axis.
pub fn default_camera_offset() -> Transform {
    Transform::from_xyz_rpy([-0.051, -0.096, 0.125], [0.014, 0.044, 0.019])
}

/// URDF text for [`ur5e_like_chain`].
pub fn ur5e_like_urdf(base_mesh: Option<&str>) -> String {
    let chain = ur5e_like_chain();
    let mut s = String::from("<?xml version=\"1.0\"?>\n<robot name=\"ur5e_like\">\n  <link name=\"base_link\">");
    if let Some(mesh) = base_mesh {
        s += &format!("\n    <visual>\n      <geometry>\n        <mesh filename=\"{mesh}\"/>\n      </geometry>\n    </visual>\n  ");
    }
    s += "</link>\n";
    let mut parent = "base_link".to_string();
    for j in &chain.joints {
        let child = format!("{}_link", j.name);
        let [x, y, z] = [j.origin.translation.x, j.origin.translation.y, j.origin.translation.z];
        let [r, p, yw] = j.origin.euler_xyz();
        let kind = match j.kind {
            crate::kinematics::JointKind::Fixed => "fixed",
            crate::kinematics::JointKind::Revolute => "revolute",
        };
        s += &format!("  <link name=\"{child}\"/>\n");
        s += &format!("  <joint name=\"{}\" type=\"{kind}\">\n", j.name);
        s += &format!("    <parent link=\"{parent}\"/>\n    <child link=\"{child}\"/>\n");
        s += &format!("    <origin xyz=\"{x} {y} {z}\" rpy=\"{r} {p} {yw}\"/>\n");
        if let Some((lo, hi)) = j.limits {
            s += "    <axis xyz=\"0 0 1\"/>\n";
            s += &format!("    <limit lower=\"{lo}\" upper=\"{hi}\" effort=\"150\" velocity=\"3.14\"/>\n");
        }
        s += "  </joint>\n";
        parent = child;
    }
    s += "</robot>\n";
    s
}
