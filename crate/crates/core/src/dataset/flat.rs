//! Detection of near-planar (2D) point clouds.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

pub const DEFAULT_FLAT_TAU: f64 = 1e-4;

/// Covariance eigenvalues of the centered cloud, largest first.
pub fn covariance_eigenvalues(cloud: &PointCloud) -> Result<[f64; 3]> {
    let n = cloud.len();
    if n < 4 {
        return Err(Error::InputSize { needed: 4, got: n });
    }
    let c = cloud.centroid();
    let mut cov = Matrix3::<f64>::zeros();
    for p in cloud.points() {
        let d = nalgebra::Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let mut ev: [f64; 3] = SymmetricEigen::new(cov).eigenvalues.into();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev.map(|v| v.max(0.0)))
}

/// True when the smallest-to-largest eigenvalue ratio is below `tau`.
/// A cloud collapsed to a single point counts as flat.
pub fn detect_flat(cloud: &PointCloud, tau: f64) -> Result<bool> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Parameter(format!(
            "flatness threshold must be positive, got {tau}"
        )));
    }
    let [l1, _, l3] = covariance_eigenvalues(cloud)?;
    if l1 == 0.0 {
        return Ok(true);
    }
    Ok(l3 / l1 < tau)
}
