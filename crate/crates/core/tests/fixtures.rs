//! Shipped fixture files match the procedural generators.
//! Regenerate with `BASECAL_REGEN_FIXTURES=1 cargo test --test fixtures`.

use std::path::{Path, PathBuf};

use basecal::cloud::{load_obj, save_obj, TriangleMesh};
use basecal::fixtures::{other_base_mesh, robot_base_mesh, ur5e_like_chain, ur5e_like_urdf};
use basecal::kinematics::{load_chain, ChainDocument, JointConfig};
use basecal::registration::{pre_transform_mesh, UnitHint};
use basecal::{rre, rte};

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn regenerate() {
    let d = dir();
    std::fs::create_dir_all(&d).unwrap();
    save_obj(d.join("base.obj"), &robot_base_mesh()).unwrap();
    save_obj(d.join("base_mm.obj"), &robot_base_mesh().scaled(1000.0)).unwrap();
    save_obj(d.join("other_base.obj"), &other_base_mesh()).unwrap();
    let mut chain = ur5e_like_chain();
    chain.base_mesh = Some("base.obj".into());
    let json = serde_json::to_string_pretty(&ChainDocument::from_chain(&chain)).unwrap();
    std::fs::write(d.join("ur5e_like.json"), json + "\n").unwrap();
    std::fs::write(d.join("ur5e_like.urdf"), ur5e_like_urdf(Some("base.obj"))).unwrap();
}

fn same_mesh(a: &TriangleMesh, b: &TriangleMesh, tol: f64) {
    assert_eq!(a.triangles(), b.triangles());
    assert_eq!(a.vertices().len(), b.vertices().len());
    for (p, q) in a.vertices().iter().zip(b.vertices()) {
        assert!((p - q).norm() <= tol, "{p} vs {q}");
    }
}

#[test]
fn meshes_match_generators() {
    if std::env::var_os("BASECAL_REGEN_FIXTURES").is_some() {
        regenerate();
    }
    let d = dir();
    same_mesh(&load_obj(d.join("base.obj")).unwrap(), &robot_base_mesh(), 0.0);
    same_mesh(&load_obj(d.join("other_base.obj")).unwrap(), &other_base_mesh(), 0.0);
    let mm = load_obj(d.join("base_mm.obj")).unwrap();
    same_mesh(&mm, &robot_base_mesh().scaled(1000.0), 0.0);
    // The millimeter file is recognized by its size and scaled back.
    let (m, pre) = pre_transform_mesh(&mm, UnitHint::Auto).unwrap();
    assert_eq!(pre.scale, 1e-3);
    same_mesh(&m, &robot_base_mesh(), 1e-15);
}

#[test]
fn chain_files_match_generator() {
    let truth = ur5e_like_chain();
    let q = JointConfig::new(vec![0.4, -1.3, 1.1, -0.5, 1.7, -2.2]);
    let want = truth.forward_kinematics(&q).unwrap();
    for file in ["ur5e_like.json", "ur5e_like.urdf"] {
        let c = load_chain(dir().join(file)).unwrap();
        assert_eq!(c.revolute_joints().count(), 6);
        let got = c.forward_kinematics(&q).unwrap();
        assert!(rte(&got, &want) < 1e-9 && rre(&got, &want) < 1e-9, "{file}");
        let mesh = c.base_mesh.expect("base mesh reference");
        assert_eq!(mesh, dir().join("base.obj"));
        assert!(mesh.exists());
    }
}
