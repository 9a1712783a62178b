//! Spatial index, voxel grid, normals and file formats against brute-force
//! oracles.

use std::collections::HashSet;

use basecal::cloud::{
    estimate_normals, load_cloud, load_obj, load_ply, load_xyz, save_obj, save_ply, save_xyz, voxel_downsample,
    KdTree3, PlyFormat, PointCloud, TriangleMesh,
};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{bucket_oracle, linear_nearest};

fn random_cloud(n: usize, seed: u64, scale: f64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(
        (0..n)
            .map(|_| Point3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn kdtree_matches_linear_scan_on_random_queries() {
    let cloud = random_cloud(1000, 1, 1.0);
    let tree = cloud.kdtree();
    let queries = random_cloud(100, 2, 1.2);
    for q in queries.points() {
        let (i, d) = tree.nearest(&[q.x, q.y, q.z]).unwrap();
        let (j, e) = linear_nearest(cloud.points(), q);
        assert_eq!(i, j);
        assert_eq!(d, e);
    }
}

proptest! {
    #[test]
    fn kdtree_is_exact_including_ties(
        grid in prop::collection::vec(prop::array::uniform3(-4i32..4), 1..200),
        queries in prop::collection::vec(prop::array::uniform3(-5i32..5), 1..20),
    ) {
        // Integer lattice points force many exact distance ties and duplicates.
        let pts: Vec<Point3<f64>> = grid.iter().map(|a| Point3::new(a[0] as f64, a[1] as f64, a[2] as f64)).collect();
        let tree = KdTree3::build(pts.iter().map(|p| [p.x, p.y, p.z]).collect());
        for q in &queries {
            let q = Point3::new(q[0] as f64 + 0.5, q[1] as f64, q[2] as f64 - 0.5);
            let got = tree.nearest(&[q.x, q.y, q.z]).unwrap();
            prop_assert_eq!(got, linear_nearest(&pts, &q));
        }
    }

    #[test]
    fn voxel_grid_matches_bucket_oracle(
        pts in prop::collection::vec(prop::array::uniform3(-0.05f64..0.05), 1..400),
        voxel in 0.002f64..0.03,
    ) {
        let cloud = PointCloud::new(pts.iter().map(|a| Point3::from(*a)).collect()).unwrap();
        let down = voxel_downsample(&cloud, voxel).unwrap();
        let cells = bucket_oracle(&cloud, voxel);
        prop_assert_eq!(down.len(), cells.len());
        prop_assert!(down.len() <= cloud.len());
        let want: Vec<Vector3<f64>> = cells.values().map(|(s, n)| s / *n as f64).collect();
        for p in down.points() {
            prop_assert!(want.iter().any(|c| (c - p.coords).norm() < 1e-12));
        }
        // Every output point lies in its own cell.
        let (lo, _) = cloud.bounding_box().unwrap();
        let keys: HashSet<_> = down
            .points()
            .iter()
            .map(|p| (((p.x - lo.x) / voxel).floor() as i64, ((p.y - lo.y) / voxel).floor() as i64, ((p.z - lo.z) / voxel).floor() as i64))
            .collect();
        prop_assert_eq!(keys.len(), down.len());
    }

    #[test]
    fn xyz_and_ply_round_trip(pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..100)) {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(pts.iter().map(|a| Point3::from(*a)).collect()).unwrap();
        save_xyz(dir.path().join("a.xyz"), &cloud).unwrap();
        save_ply(dir.path().join("a.ply"), &cloud, PlyFormat::Ascii).unwrap();
        save_ply(dir.path().join("b.ply"), &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        for (name, tol) in [("a.xyz", 1e-7), ("a.ply", 1e-6), ("b.ply", 1e-6)] {
            let back = load_cloud(dir.path().join(name)).unwrap();
            prop_assert_eq!(back.len(), cloud.len());
            for (p, q) in back.points().iter().zip(cloud.points()) {
                // Single-precision storage: relative error of one float ulp.
                prop_assert!((p - q).norm() <= tol * (1.0 + q.coords.norm()), "{} {} {}", name, p, q);
            }
        }
    }
}

#[test]
fn hundred_points_round_trip_within_tenth_micron() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(100, 5, 0.5);
    save_xyz(dir.path().join("c.xyz"), &cloud).unwrap();
    save_ply(dir.path().join("c.ply"), &cloud, PlyFormat::BinaryLittleEndian).unwrap();
    for back in [load_xyz(dir.path().join("c.xyz")).unwrap(), load_ply(dir.path().join("c.ply")).unwrap()] {
        for (p, q) in back.points().iter().zip(cloud.points()) {
            assert!((p - q).norm() < 1e-7);
        }
    }
}

#[test]
fn normals_survive_ply() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<_> = (0..50).map(|i| Point3::new(i as f64 * 0.01, (i % 7) as f64 * 0.01, 0.0)).collect();
    let normals = vec![Vector3::z(); pts.len()];
    let cloud = PointCloud::with_normals(pts, normals).unwrap();
    save_ply(dir.path().join("n.ply"), &cloud, PlyFormat::BinaryLittleEndian).unwrap();
    let back = load_ply(dir.path().join("n.ply")).unwrap();
    assert!(back.normals().unwrap().iter().all(|n| (n - Vector3::z()).norm() < 1e-7));
}

#[test]
fn obj_cube_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
                f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n\
                f 2 3 7\nf 2 7 6\nf 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8\n";
    std::fs::write(dir.path().join("cube.obj"), text).unwrap();
    let cube = load_obj(dir.path().join("cube.obj")).unwrap();
    assert_eq!((cube.vertices().len(), cube.triangles().len()), (8, 12));
    assert!((cube.area() - 6.0).abs() < 1e-12);
    save_obj(dir.path().join("again.obj"), &cube).unwrap();
    let back = load_obj(dir.path().join("again.obj")).unwrap();
    assert_eq!(back.triangles(), cube.triangles());
    assert_eq!(back.vertices(), cube.vertices());

    let boxy = TriangleMesh::cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(0.1, 0.2, 0.3));
    assert!((boxy.area() - 2.0 * (0.02 + 0.03 + 0.06)).abs() < 1e-12);

    let bad = dir.path().join("bad.obj");
    std::fs::write(&bad, "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 0 1 2\n").unwrap();
    let msg = load_obj(&bad).unwrap_err().to_string();
    assert!(msg.contains('5'), "{msg}");
}

#[test]
fn sphere_normals_point_radially() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<Point3<f64>> = (0..5000)
        .map(|_| {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            Point3::from(v.normalize())
        })
        .collect();
    let cloud = PointCloud::new(pts).unwrap();
    // Orientation toward the eye is only radial on the cap it can see (z > 1/5),
    // so check away from that rim.
    let eye = Point3::new(0.0, 0.0, 5.0);
    let with = estimate_normals(&cloud, 10, &eye).unwrap();
    for (p, n) in with.points().iter().zip(with.normals().unwrap()) {
        if p.z > 0.4 {
            let a = n.dot(&p.coords).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(a < 5.0, "{p} {a}");
        }
    }
}

#[test]
fn nearest_on_empty_target_is_an_error() {
    let tree = KdTree3::build(vec![]);
    assert!(tree.nearest(&[0.0, 0.0, 0.0]).is_err());
    let one = KdTree3::build(vec![[0.0, 0.0, 0.0]]);
    let (i, d) = one.nearest(&[1.0, 1.0, 1.0]).unwrap();
    assert_eq!(i, 0);
    assert!((d - 3f64.sqrt()).abs() < 1e-15);
}
