//! Fast point feature histograms: 11 bins for each of the three Darboux-frame
//! angles, weighted over the radius neighborhood.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::cloud::{KdTree3, PointCloud};
use crate::error::{Error, Result};

pub const BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * BINS;

pub type Feature = [f64; FPFH_DIM];

/// Angle triple (alpha, phi, theta) of the pair, with the source point chosen
/// so the result does not depend on argument order.
fn pair_features(p1: &Point3<f64>, n1: &Vector3<f64>, p2: &Point3<f64>, n2: &Vector3<f64>) -> Option<[f64; 3]> {
    let mut dp = p2 - p1;
    let d = dp.norm();
    if d == 0.0 {
        return None;
    }
    let (mut ns, mut nt) = (n1, n2);
    let a1 = n1.dot(&dp) / d;
    let a2 = n2.dot(&dp) / d;
    if a1.abs().acos() > a2.abs().acos() {
        std::mem::swap(&mut ns, &mut nt);
        dp = -dp;
    }
    let u = *ns;
    let mut v = dp.cross(&u);
    let vn = v.norm();
    if vn == 0.0 {
        return None;
    }
    v /= vn;
    let w = u.cross(&v);
    let alpha = v.dot(nt);
    let phi = u.dot(&dp) / d;
    let theta = w.dot(nt).atan2(u.dot(nt));
    Some([alpha, phi, theta])
}

fn bin(v: f64, lo: f64, hi: f64) -> usize {
    let b = ((v - lo) / (hi - lo) * BINS as f64).floor();
    (b.max(0.0) as usize).min(BINS - 1)
}

fn spfh(i: usize, pts: &[Point3<f64>], ns: &[Vector3<f64>], nbrs: &[usize]) -> Feature {
    let mut h = [0.0; FPFH_DIM];
    let mut count = 0usize;
    for &j in nbrs {
        if j == i {
            continue;
        }
        if let Some([a, f, t]) = pair_features(&pts[i], &ns[i], &pts[j], &ns[j]) {
            h[bin(a, -1.0, 1.0)] += 1.0;
            h[BINS + bin(f, -1.0, 1.0)] += 1.0;
            h[2 * BINS + bin(t, -std::f64::consts::PI, std::f64::consts::PI)] += 1.0;
            count += 1;
        }
    }
    if count > 0 {
        let s = 100.0 / count as f64;
        h.iter_mut().for_each(|v| *v *= s);
    }
    h
}

/// FPFH descriptor for every point of `cloud`, which must carry normals.
/// `tree` must index the same points.
pub fn compute_fpfh(cloud: &PointCloud, tree: &KdTree3, radius: f64) -> Result<Vec<Feature>> {
    let ns = cloud
        .normals()
        .ok_or_else(|| Error::Parameter("FPFH needs normals".into()))?;
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("feature radius must be positive, got {radius}")));
    }
    let pts = cloud.points();
    let nbrs: Vec<Vec<usize>> = pts.par_iter().map(|p| tree.within_radius(&[p.x, p.y, p.z], radius)).collect();
    let spfh: Vec<Feature> = (0..pts.len()).into_par_iter().map(|i| spfh(i, pts, ns, &nbrs[i])).collect();
    Ok((0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut f = spfh[i];
            let mut acc = [0.0; FPFH_DIM];
            let mut wsum = 0.0;
            for &j in &nbrs[i] {
                if j == i {
                    continue;
                }
                let d = (pts[j] - pts[i]).norm();
                if d == 0.0 {
                    continue;
                }
                let w = 1.0 / d;
                wsum += w;
                for (a, s) in acc.iter_mut().zip(&spfh[j]) {
                    *a += w * s;
                }
            }
            if wsum > 0.0 {
                for (v, a) in f.iter_mut().zip(&acc) {
                    *v += a / wsum;
                }
            }
            // Each sub-histogram sums to 100 again.
            for part in f.chunks_mut(BINS) {
                let s: f64 = part.iter().sum();
                if s > 0.0 {
                    part.iter_mut().for_each(|v| *v *= 100.0 / s);
                }
            }
            f
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::TriangleMesh;
    use crate::geom::RigidTransform;

    #[test]
    fn pair_features_are_symmetric() {
        let p1 = Point3::new(0.0, 0.0, 0.0);
        let p2 = Point3::new(0.1, 0.02, -0.01);
        let n1 = Vector3::new(0.1, 0.2, 1.0).normalize();
        let n2 = Vector3::new(-0.3, 0.1, 1.0).normalize();
        let a = pair_features(&p1, &n1, &p2, &n2).unwrap();
        let b = pair_features(&p2, &n2, &p1, &n1).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rigid_invariance() {
        let mesh = TriangleMesh::uv_sphere(Point3::origin(), 0.05, 12, 24);
        let mut m = mesh;
        m.append(&TriangleMesh::cuboid(Point3::new(0.0, -0.02, -0.02), Point3::new(0.1, 0.02, 0.02)));
        let cloud = m.sample_surface(3000, 1);
        let tf = RigidTransform::from_xyz_rpy([0.3, -0.1, 0.2], [0.4, -1.0, 2.0]);
        let moved = cloud.transformed(&tf);
        let fa = compute_fpfh(&cloud, &cloud.kdtree(), 0.02).unwrap();
        let fb = compute_fpfh(&moved, &moved.kdtree(), 0.02).unwrap();
        let mut max = 0.0f64;
        for (a, b) in fa.iter().zip(&fb) {
            for (x, y) in a.iter().zip(b) {
                max = max.max((x - y).abs());
            }
        }
        // Radius queries may differ at the boundary by rounding; nearly all bins agree.
        assert!(max < 5.0, "{max}");
        let sums: f64 = fa[0][..BINS].iter().sum();
        assert!((sums - 100.0).abs() < 1e-9);
    }

    #[test]
    fn plane_and_corner_differ() {
        let cube = TriangleMesh::cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(0.1, 0.1, 0.1));
        let c = cube.sample_surface(6000, 3);
        let f = compute_fpfh(&c, &c.kdtree(), 0.015).unwrap();
        let center = c
            .points()
            .iter()
            .position(|p| (p.z - 0.1).abs() < 1e-12 && (p.x - 0.05).abs() < 0.01 && (p.y - 0.05).abs() < 0.01)
            .unwrap();
        let corner = c
            .points()
            .iter()
            .position(|p| p.x < 0.005 && p.y < 0.005 && p.z < 0.005)
            .unwrap();
        let d: f64 = f[center].iter().zip(&f[corner]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d > 20.0, "{d}");
    }
}
