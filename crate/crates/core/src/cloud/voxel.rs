use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::PointCloud;
use crate::error::{Error, Result};

type Key = (i64, i64, i64);

fn key_of(p: &Point3<f64>, origin: &Point3<f64>, voxel: f64) -> Key {
    (
        ((p.x - origin.x) / voxel).floor() as i64,
        ((p.y - origin.y) / voxel).floor() as i64,
        ((p.z - origin.z) / voxel).floor() as i64,
    )
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// The grid is anchored at the cloud's minimum corner. Output order follows
/// the first occurrence of each voxel in the input. Normals, when present,
/// are averaged and re-normalized.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::Parameter(format!("voxel size must be positive, got {voxel_size}")));
    }
    let Some((origin, _)) = cloud.bounding_box() else {
        return Ok(PointCloud::default());
    };

    let mut slots: HashMap<Key, usize> = HashMap::new();
    let mut sums: Vec<(Vector3<f64>, usize)> = Vec::new();
    let mut normal_sums: Vec<Vector3<f64>> = Vec::new();
    let normals = cloud.normals();
    for (i, p) in cloud.points().iter().enumerate() {
        let slot = *slots.entry(key_of(p, &origin, voxel_size)).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            normal_sums.push(Vector3::zeros());
            sums.len() - 1
        });
        sums[slot].0 += p.coords;
        sums[slot].1 += 1;
        if let Some(ns) = normals {
            // Align to the first normal of the voxel so opposite faces don't cancel.
            let n = ns[i];
            let acc = &mut normal_sums[slot];
            *acc += if acc.dot(&n) < 0.0 { -n } else { n };
        }
    }

    let points: Vec<Point3<f64>> = sums
        .iter()
        .map(|(s, n)| Point3::from(s / *n as f64))
        .collect();
    let normals = normals.map(|_| {
        normal_sums
            .iter()
            .map(|n| n.try_normalize(1e-12).unwrap_or_else(Vector3::z))
            .collect()
    });
    Ok(PointCloud::from_parts_unchecked(points, normals))
}

/// Number of distinct occupied voxels, using the same anchoring rule.
pub fn voxel_key_count(cloud: &PointCloud, voxel_size: f64) -> usize {
    let Some((origin, _)) = cloud.bounding_box() else {
        return 0;
    };
    let mut keys: Vec<Key> = cloud.points().iter().map(|p| key_of(p, &origin, voxel_size)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}
