//! Feature-space correspondences, closed-form rigid alignment, RANSAC and
//! geometric overlap.

mod ransac;

pub use ransac::{ransac_register, RansacParams, RansacResult};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, RigidTransform, SpatialIndex};
use crate::io::Descriptors;
use crate::par::{self, Exec};

/// One feature-space match: index `p` into the P keypoints, `q` into Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p: usize,
    pub q: usize,
    pub distance: f64,
}

/// Mutual nearest-neighbour pairs, ordered by `p`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Correspondence> {
        self.pairs.iter()
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Exact nearest row of `to` for every row of `from`; ties go to the
/// smaller index.
fn nearest_rows(from: &Descriptors, to: &Descriptors, exec: Exec) -> Vec<(usize, f64)> {
    par::map_range(exec, from.len(), |i| {
        let a = from.row(i);
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, b) in to.rows().enumerate() {
            let d = sq_dist(a, b);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    })
}

/// Pairs `(i, j)` such that `j` is the nearest Q descriptor of `i` and `i`
/// the nearest P descriptor of `j`, under exact L2 search.
pub fn mutual_correspondences(desc_p: &Descriptors, desc_q: &Descriptors, exec: Exec) -> Result<CorrespondenceSet> {
    if desc_p.dim() != desc_q.dim() {
        return Err(Error::DimMismatch {
            expected: desc_p.dim(),
            found: desc_q.dim(),
        });
    }
    if desc_p.is_empty() || desc_q.is_empty() {
        return Ok(CorrespondenceSet::default());
    }
    let forward = nearest_rows(desc_p, desc_q, exec);
    let backward = nearest_rows(desc_q, desc_p, exec);
    let pairs = forward
        .iter()
        .enumerate()
        .filter(|&(i, &(j, _))| backward[j].0 == i)
        .map(|(i, &(j, d))| Correspondence {
            p: i,
            q: j,
            distance: d.sqrt(),
        })
        .collect();
    Ok(CorrespondenceSet { pairs })
}

fn centroid(pts: &[Point]) -> Point {
    pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / pts.len() as f64
}

/// Rank test on the centred scatter: at least two well-separated principal
/// directions.
fn is_degenerate(pts: &[Point], c: &Point) -> bool {
    let mut s = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        s += d * d.transpose();
    }
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    !(ev[0] > 1e-24) || ev[1] <= 1e-12 * ev[0]
}

/// Least-squares rigid motion taking `src` onto `dst` (SVD Procrustes with
/// the reflection case corrected).
pub fn estimate_rigid(src: &[Point], dst: &[Point]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimMismatch {
            expected: src.len(),
            found: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!("{} point pairs, need at least 3", src.len())));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    if is_degenerate(src, &cs) || is_degenerate(dst, &cd) {
        return Err(Error::DegenerateConfiguration("points are collinear or coincident".into()));
    }
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // nalgebra sorts singular values in decreasing order
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    let t = cd - r * cs;
    Ok(RigidTransform::from_parts_unchecked(r, t))
}

/// Fraction of `P` points whose nearest neighbour in `T(Q)` lies strictly
/// closer than `tau`.
pub fn overlap(cloud_p: &PointCloud, cloud_q: &PointCloud, t: &RigidTransform, tau: f64) -> Result<f64> {
    if cloud_p.is_empty() || cloud_q.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("overlap threshold must be positive, got {tau}")));
    }
    let moved = cloud_q.transformed(t);
    let index = SpatialIndex::new(&moved);
    let tau2 = tau * tau;
    let hits = cloud_p
        .points()
        .iter()
        .filter(|p| index.nearest(p).is_some_and(|(_, d2)| d2 < tau2))
        .count();
    Ok(hits as f64 / cloud_p.len() as f64)
}
