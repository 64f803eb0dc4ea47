//! Point clouds, rigid transforms, spatial indexing and voxel-grid filtering.

mod downsample;
mod kdtree;

pub use downsample::voxel_downsample;
pub use kdtree::SpatialIndex;

use nalgebra::{Matrix3, Matrix4, Vector3, SVD};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// An ordered set of 3D points in meters. Coordinates are always finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(index) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinitePoint { index });
        }
        Ok(Self { points })
    }

    pub fn from_arrays(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Points at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        apply_transform(self, t)
    }
}

const ORTHO_TOL: f64 = 1e-9;

/// A proper rigid motion `p -> R p + t` with `R` in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor: `R^T R = I` and `det R = +1` within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if gram_err > ORTHO_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation not orthonormal (max |R^T R - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidTransform(format!("det(R) = {det}, expected +1")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Projects a nearly-orthonormal matrix onto SO(3) before validating.
    ///
    /// Transform files written by other tools typically carry 6-8 significant
    /// digits; anything further than 1e-3 from a rotation is rejected.
    pub fn new_orthonormalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(gram_err <= 1e-3) || rotation.determinant() <= 0.0 {
            return Err(Error::InvalidTransform(format!(
                "matrix is not close to a rotation (max |R^T R - I| = {gram_err:e})"
            )));
        }
        Self::new(project_to_so3(&rotation), translation)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        invert(self)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle of `R_a^T R_b` in degrees.
    pub fn rotation_error_deg(&self, other: &RigidTransform) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    pub fn translation_error(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Nearest rotation in the Frobenius sense.
pub(crate) fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
    }
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        rotation: rt,
        translation: -(rt * t.translation),
    }
}
