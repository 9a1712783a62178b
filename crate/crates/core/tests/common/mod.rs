//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use basecal::cloud::PointCloud;
use nalgebra::{Point3, Vector3};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub type M4 = [[f64; 4]; 4];

pub fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn eye() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn rx(a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

pub fn ry(a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

pub fn rz(a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Rotation about a unit axis (Rodrigues, written out).
pub fn axis_angle(k: [f64; 3], a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    let v = 1.0 - c;
    let [x, y, z] = k;
    [
        [c + x * x * v, x * y * v - z * s, x * z * v + y * s, 0.0],
        [y * x * v + z * s, c + y * y * v, y * z * v - x * s, 0.0],
        [z * x * v - y * s, z * y * v + x * s, c + z * z * v, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn vec3(v: &Value) -> [f64; 3] {
    let a = v.as_array().unwrap();
    [a[0].as_f64().unwrap(), a[1].as_f64().unwrap(), a[2].as_f64().unwrap()]
}

/// Flange pose by multiplying translation · Rz · Ry · Rx · R(axis, q) per joint.
pub fn matrix_chain(doc: &Value, q: &[f64]) -> M4 {
    let mut m = eye();
    let mut k = 0;
    for j in doc["joints"].as_array().unwrap() {
        let xyz = vec3(&j["origin"]["xyz"]);
        let rpy = vec3(&j["origin"]["rpy"]);
        let mut t = eye();
        for i in 0..3 {
            t[i][3] = xyz[i];
        }
        let origin = mul(&mul(&mul(&t, &rz(rpy[2])), &ry(rpy[1])), &rx(rpy[0]));
        m = mul(&m, &origin);
        if j["kind"] == "revolute" {
            let a = vec3(&j["axis"]);
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            m = mul(&m, &axis_angle([a[0] / n, a[1] / n, a[2] / n], q[k]));
            k += 1;
        }
    }
    assert_eq!(k, q.len());
    m
}

pub fn max_diff(a: &M4, b: &M4) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| (a[i][j] - b[i][j]).abs()).fold(0.0, f64::max)
}

pub fn chain_doc() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("ur5e_like.json")).unwrap()).unwrap()
}

/// Linear scan with ties going to the lowest index.
pub fn linear_nearest(points: &[Point3<f64>], q: &Point3<f64>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Bucket count over `floor((p − min) / voxel)`, plus centroids keyed by cell.
pub fn bucket_oracle(cloud: &PointCloud, voxel: f64) -> BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> {
    let (lo, _) = cloud.bounding_box().unwrap();
    let mut cells = BTreeMap::new();
    for p in cloud.points() {
        let k = (
            ((p.x - lo.x) / voxel).floor() as i64,
            ((p.y - lo.y) / voxel).floor() as i64,
            ((p.z - lo.z) / voxel).floor() as i64,
        );
        let e = cells.entry(k).or_insert((Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    cells
}

