//! Local reference frame estimation at an interest point.
//!
//! The z-axis is the covariance normal of the spherical support (covariance
//! taken about the interest point, not the centroid), the x-axis a weighted
//! sum of in-plane projections favouring close points with large normal
//! offsets, and `y = x × z`. With that cross product the frame is
//! left-handed: `det [x y z] = -1`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, SpatialIndex};
use crate::par::{self, Exec};

/// Smallest support for which the covariance can have full rank.
pub const MIN_SUPPORT: usize = 4;
const EIGEN_TIE_TOL: f64 = 1e-8;
const MIN_X_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lrf {
    pub origin: Point,
    pub x: Vector3<f64>,
    pub y: Vector3<f64>,
    pub z: Vector3<f64>,
}

impl Lrf {
    /// Frame whose axes are the coordinate axes.
    pub fn identity_at(origin: Point) -> Self {
        Self {
            origin,
            x: Vector3::x(),
            y: Vector3::y(),
            z: Vector3::z(),
        }
    }

    /// Coordinates of `p` in this frame.
    #[inline]
    pub fn to_local(&self, p: &Point) -> Point {
        let d = p - self.origin;
        Point::new(self.x.dot(&d), self.y.dot(&d), self.z.dot(&d))
    }

    /// Rows are the axes: maps world offsets to frame coordinates.
    pub fn axes_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[self.x.transpose(), self.y.transpose(), self.z.transpose()])
    }
}

/// `(1/|S|) Σ (p_i - p)(p_i - p)^T`.
pub fn support_covariance(support: &[Point], p: &Point) -> Matrix3<f64> {
    let mut cov = Matrix3::zeros();
    for q in support {
        let d = q - p;
        cov += d * d.transpose();
    }
    cov / support.len().max(1) as f64
}

/// Sign-disambiguated covariance normal of a support around `p`.
///
/// The smallest-eigenvalue eigenvector is kept when `Σ <n, p - p_i> >= 0`
/// and flipped otherwise.
pub fn normal_axis(support: &[Point], p: &Point) -> Result<Vector3<f64>> {
    if support.len() < MIN_SUPPORT {
        return Err(Error::DegenerateSupport(format!(
            "{} support points, need at least {MIN_SUPPORT}",
            support.len()
        )));
    }
    let cov = support_covariance(support, p);
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1, l2) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(l2 > 0.0) {
        return Err(Error::DegenerateSupport("all support points coincide".into()));
    }
    if l1 - l0 < EIGEN_TIE_TOL * l2 {
        return Err(Error::DegenerateSupport(format!(
            "smallest eigenvalue not simple ({l0:e}, {l1:e})"
        )));
    }
    let n = eig.eigenvectors.column(order[0]).normalize();
    let s: f64 = support.iter().map(|q| n.dot(&(p - q))).sum();
    Ok(if s >= 0.0 { n } else { -n })
}

fn weighted_x_axis(support: &[Point], p: &Point, z: &Vector3<f64>, radius: f64, weight_scale: f64) -> Result<Vector3<f64>> {
    let mut acc = Vector3::zeros();
    for q in support {
        let d = q - p;
        let h = d.dot(z);
        let v = d - z * h;
        let alpha = (radius - d.norm()).powi(2);
        let beta = h * h;
        acc += v * (weight_scale * alpha * beta);
    }
    let norm = acc.norm();
    if !(norm >= MIN_X_NORM) {
        return Err(Error::DegenerateSupport(format!(
            "x-axis accumulator norm {norm:e} below {MIN_X_NORM:e}"
        )));
    }
    Ok(acc / norm)
}

/// Frame from an explicit support set (all points within `radius` of `p`).
pub fn lrf_from_support(support: &[Point], p: &Point, radius: f64) -> Result<Lrf> {
    let z = normal_axis(support, p)?;
    let x = weighted_x_axis(support, p, &z, radius, 1.0)?;
    // re-orthogonalize against rounding in the projection sum
    let x = (x - z * x.dot(&z)).normalize();
    let y = x.cross(&z);
    Ok(Lrf { origin: *p, x, y, z })
}

/// Estimates the frame at `p` from every cloud point within `radius`.
pub fn estimate_lrf(cloud: &PointCloud, index: &SpatialIndex, p: &Point, radius: f64) -> Result<Lrf> {
    let mut ids = index.radius_query(p, radius);
    ids.sort_unstable();
    let support: Vec<Point> = ids.iter().map(|&i| cloud.get(i)).collect();
    lrf_from_support(&support, p, radius)
}

/// Frames for many keypoints (cloud indices), in input order.
pub fn estimate_lrfs(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[usize],
    radius: f64,
    exec: Exec,
) -> Vec<Result<Lrf>> {
    par::map_slice(exec, keypoints, |&k| estimate_lrf(cloud, index, &cloud.get(k), radius))
}
