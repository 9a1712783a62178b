use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::PointCloud;
use crate::error::{Error, Result};

/// Per-point normals from the covariance of the `k` nearest neighbors
/// (smallest eigenvector), flipped to face `viewpoint`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Point3<f64>) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::Parameter(format!("k must be at least 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(Error::TooFewPoints { needed: k, have: cloud.len() });
    }
    let tree = cloud.kdtree();
    let pts = cloud.points();
    let normals: Vec<Vector3<f64>> = pts
        .par_iter()
        .map(|p| {
            let nbrs = tree.knn(&[p.x, p.y, p.z], k);
            let n = plane_normal(nbrs.iter().map(|&(i, _)| &pts[i]));
            if n.dot(&(viewpoint - p)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    Ok(PointCloud::from_parts_unchecked(pts.to_vec(), Some(normals)))
}

/// Flips each normal to point away from `center`. For closed models without a
/// meaningful viewpoint.
pub fn orient_normals_outward(cloud: &PointCloud, center: &Point3<f64>) -> PointCloud {
    let normals = cloud.normals().map(|ns| {
        ns.iter()
            .zip(cloud.points())
            .map(|(n, p)| if n.dot(&(p - center)) < 0.0 { -n } else { *n })
            .collect()
    });
    PointCloud::from_parts_unchecked(cloud.points().to_vec(), normals)
}

pub(crate) fn plane_normal<'a>(pts: impl Iterator<Item = &'a Point3<f64>> + Clone) -> Vector3<f64> {
    let mut n = 0usize;
    let mut mean = Vector3::zeros();
    for p in pts.clone() {
        mean += p.coords;
        n += 1;
    }
    mean /= n.max(1) as f64;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imin();
    eig.eigenvectors.column(i).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane() -> PointCloud {
        let pts = (0..20)
            .flat_map(|i| (0..20).map(move |j| Point3::new(i as f64 * 0.01, j as f64 * 0.013, 0.0)))
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn planar_normals_face_viewpoint() {
        let up = estimate_normals(&plane(), 8, &Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(up.normals().unwrap().iter().all(|n| (n - Vector3::z()).norm() < 1e-6));
        let down = estimate_normals(&plane(), 8, &Point3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(down.normals().unwrap().iter().all(|n| (n + Vector3::z()).norm() < 1e-6));
    }

    #[test]
    fn too_few_points() {
        let c = PointCloud::new(vec![Point3::origin(); 4]).unwrap();
        assert!(matches!(
            estimate_normals(&c, 5, &Point3::origin()),
            Err(Error::TooFewPoints { needed: 5, have: 4 })
        ));
        assert!(estimate_normals(&c, 2, &Point3::origin()).is_err());
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3<f64>> = (0..5000)
            .map(|_| loop {
                let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let n = v.norm();
                if n > 0.1 && n <= 1.0 {
                    break Point3::from(v / n);
                }
            })
            .collect();
        let camera = Point3::new(0.0, 0.0, 3.0);
        let c = estimate_normals(&PointCloud::new(pts).unwrap(), 10, &camera).unwrap();
        let cos5 = 5f64.to_radians().cos();
        for (p, n) in c.points().iter().zip(c.normals().unwrap()) {
            let radial = p.coords.normalize();
            assert!(n.dot(&radial).abs() >= cos5, "normal {n:?} at {p:?}");
            // Points the camera can see get outward normals.
            if radial.dot(&(camera - p).normalize()) > 0.2 {
                assert!(n.dot(&radial) > 0.0);
            }
        }
    }

    #[test]
    fn outward_orientation() {
        let c = PointCloud::with_normals(
            vec![Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0)],
            vec![Vector3::x(), Vector3::x()],
        )
        .unwrap();
        let o = orient_normals_outward(&c, &Point3::origin());
        assert_eq!(o.normals().unwrap()[1], -Vector3::x());
    }
}
