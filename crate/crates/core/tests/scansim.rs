//! Virtual scanner and dataset emission on the fixture robot.

use std::fs;
use std::path::Path;

use basecal::cloud::voxel_downsample;
use basecal::fixtures::{robot_base_mesh, ur5e_like_chain};
use basecal::scansim::{
    generate_dataset, hemisphere_viewpoints, read_manifest, read_sample, render_scan, view_rng, write_dataset,
    DatasetParams, NoiseSpec, SampleKind, VirtualCamera,
};
use basecal::{rre, rte};
use nalgebra::Point3;

fn params() -> DatasetParams {
    DatasetParams {
        radii: vec![0.5, 0.7],
        n_views: 4,
        n_configs: 2,
        camera: VirtualCamera { width: 160, height: 120, ..Default::default() },
        ..Default::default()
    }
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push((e.strip_prefix(dir).unwrap().display().to_string(), fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn dataset_bytes_do_not_depend_on_worker_count() {
    let chain = ur5e_like_chain();
    let mesh = robot_base_mesh();
    let dirs: Vec<_> = [1usize, 3]
        .iter()
        .map(|&threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let dir = tempfile::tempdir().unwrap();
            pool.install(|| {
                let (s, m) = generate_dataset(&chain, &mesh, &params()).unwrap();
                write_dataset(dir.path(), &s, &m).unwrap();
            });
            dir
        })
        .collect();
    let a = files_under(dirs[0].path());
    assert!(a.len() > 4);
    assert_eq!(a, files_under(dirs[1].path()));
}

#[test]
fn emitted_samples_agree_with_their_files() {
    let chain = ur5e_like_chain();
    let p = params();
    let (samples, manifest) = generate_dataset(&chain, &robot_base_mesh(), &p).unwrap();
    assert!(samples.len() <= 2 * 4 + 2);
    assert!(samples.iter().any(|s| matches!(s.kind, SampleKind::ArmConfig { .. })));
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &samples, &manifest).unwrap();
    let back = read_manifest(dir.path()).unwrap();
    assert_eq!(back.samples, manifest.samples);
    assert_eq!(back.radii, vec![0.5, 0.7]);

    let tree = samples[0].target.kdtree();
    for s in &samples {
        let (src, truth, meta) = read_sample(dir.path().join(&s.id)).unwrap();
        assert_eq!(src.len(), s.source.len());
        assert!(rte(&truth, &s.truth) < 1e-12 && rre(&truth, &s.truth) < 1e-9);
        assert_eq!(rte(&s.truth, &s.camera.pose.inverse()), 0.0);
        assert_eq!(meta.config.is_some(), s.config.is_some());

        // Stored at 2 mm: re-gridding changes at most a handful of points.
        let again = voxel_downsample(&s.source, p.voxel).unwrap();
        assert!(again.len() as f64 >= 0.9 * s.source.len() as f64);

        // Base-only views: the scan mapped into the base frame sits on the model.
        if s.config.is_none() {
            let base = s.source.transformed(&s.truth.inverse());
            let mut d: Vec<f64> = base.points().iter().map(|q| tree.nearest(&[q.x, q.y, q.z]).unwrap().1).collect();
            d.sort_by(f64::total_cmp);
            assert!(d[d.len() / 2] < p.noise.sigma_mm * 1e-3 + p.voxel, "{}", s.id);
        }
    }
}

#[test]
fn noise_free_base_scans_lie_on_the_mesh() {
    let mesh = robot_base_mesh();
    let template = VirtualCamera { width: 80, height: 60, ..Default::default() };
    for cam in hemisphere_viewpoints(0.5, 6, &Point3::new(0.0, 0.0, 0.05), &template) {
        let scan = render_scan(&mesh, &cam, NoiseSpec::none(), &mut view_rng(0, 0)).unwrap();
        assert!(!scan.is_empty());
        let world = scan.transformed(&cam.pose);
        for q in world.points() {
            assert!(mesh.distance_to(q) < 1e-9);
        }
    }
}

#[test]
fn hemisphere_cameras_sit_on_the_radius() {
    let c = Point3::new(0.1, -0.2, 0.0);
    for r in [0.5, 0.7] {
        let cams = hemisphere_viewpoints(r, 50, &c, &VirtualCamera::default());
        assert_eq!(cams.len(), 50);
        for cam in &cams {
            let eye = Point3::from(cam.pose.translation);
            assert!(((eye - c).norm() - r).abs() < 1e-9);
            assert!(eye.z >= c.z - 1e-12);
            let fwd = cam.pose.transform_vector(&nalgebra::Vector3::z());
            assert!((fwd - (c - eye).normalize()).norm() < 1e-9);
        }
    }
}
