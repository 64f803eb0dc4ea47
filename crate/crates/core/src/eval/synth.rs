use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, RigidTransform};
use crate::matching::overlap;

/// Shape family of a synthetic surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    /// Sum of random Gaussian bumps and dents.
    HeightField,
    /// Domes, ridges and mesas on a ground plane.
    Primitives,
}

impl FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heightfield" | "height-field" => Ok(Self::HeightField),
            "primitives" => Ok(Self::Primitives),
            other => Err(Error::InvalidSceneConfig(format!("unknown surface kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub surface: SurfaceKind,
    /// Side of each square fragment footprint (m).
    pub extent: f64,
    /// Points sampled per fragment before density reduction.
    pub points: usize,
    /// Standard deviation of the i.i.d. Gaussian coordinate noise (m).
    pub noise: f64,
    /// Target fraction of P's footprint shared with Q.
    pub overlap: f64,
    /// Fraction of Q's points kept (1 = no reduction).
    pub density: f64,
    /// Neighbour threshold used to measure the achieved overlap (m).
    pub tau_psi: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            surface: SurfaceKind::HeightField,
            extent: 2.0,
            points: 6000,
            noise: 0.0,
            overlap: 0.6,
            density: 1.0,
            tau_psi: 0.06,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSceneConfig(m.into()));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad("extent must be positive");
        }
        if self.points < 4 {
            return bad("need at least 4 points per fragment");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        if !(self.overlap > 0.0 && self.overlap <= 1.0) {
            return bad("overlap must lie in (0, 1]");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if !(self.tau_psi > 0.0) {
            return bad("tau_psi must be positive");
        }
        Ok(())
    }
}

/// Two partial samplings of one surface. `t_gt` maps Q into P's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub p: PointCloud,
    pub q: PointCloud,
    pub t_gt: RigidTransform,
    /// Measured overlap of P with `t_gt(Q)`.
    pub overlap: f64,
    /// Measured overlap in the other direction.
    pub overlap_reverse: f64,
}

enum Feature {
    Bump { c: Vector2<f64>, sigma: f64, amp: f64 },
    Dome { c: Vector2<f64>, radius: f64, depth: f64 },
    Ridge { a: Vector2<f64>, b: Vector2<f64>, radius: f64 },
    Mesa { c: Vector2<f64>, half: Vector2<f64>, height: f64, soft: f64 },
}

impl Feature {
    fn height(&self, x: &Vector2<f64>) -> f64 {
        match *self {
            Feature::Bump { c, sigma, amp } => amp * (-(x - c).norm_squared() / (2.0 * sigma * sigma)).exp(),
            Feature::Dome { c, radius, depth } => {
                // spherical cap of a sphere of `radius` sunk by `depth`
                let r2 = (x - c).norm_squared();
                (radius * radius - r2).max(0.0).sqrt() - depth
            }
            Feature::Ridge { a, b, radius } => {
                let ab = b - a;
                let s = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                let d2 = (x - (a + ab * s)).norm_squared();
                (radius * radius - d2).max(0.0).sqrt()
            }
            Feature::Mesa { c, half, height, soft } => {
                let step = |d: f64, h: f64| {
                    let u = ((h - d.abs()) / soft).clamp(-1.0, 1.0) * 0.5 + 0.5;
                    u * u * (3.0 - 2.0 * u)
                };
                height * step(x.x - c.x, half.x) * step(x.y - c.y, half.y)
            }
        }
    }
}

struct Surface {
    kind: SurfaceKind,
    features: Vec<Feature>,
}

impl Surface {
    fn random(kind: SurfaceKind, lo: Vector2<f64>, hi: Vector2<f64>, rng: &mut ChaCha8Rng) -> Self {
        let area = (hi.x - lo.x) * (hi.y - lo.y);
        let pick = |rng: &mut ChaCha8Rng| Vector2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        let features = match kind {
            SurfaceKind::HeightField => (0..(14.0 * area).ceil() as usize)
                .map(|_| {
                    let c = pick(rng);
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    Feature::Bump {
                        c,
                        sigma: rng.random_range(0.07..0.2),
                        amp: sign * rng.random_range(0.04..0.15),
                    }
                })
                .collect(),
            SurfaceKind::Primitives => (0..(9.0 * area).ceil() as usize)
                .map(|_| {
                    let c = pick(rng);
                    match rng.random_range(0..3) {
                        0 => {
                            let radius = rng.random_range(0.1..0.3);
                            Feature::Dome {
                                c,
                                radius,
                                depth: radius * rng.random_range(0.3..0.7),
                            }
                        }
                        1 => {
                            let angle = rng.random_range(0.0..std::f64::consts::PI);
                            let half_len = rng.random_range(0.15..0.4);
                            let d = Vector2::new(angle.cos(), angle.sin()) * half_len;
                            Feature::Ridge {
                                a: c - d,
                                b: c + d,
                                radius: rng.random_range(0.04..0.12),
                            }
                        }
                        _ => Feature::Mesa {
                            c,
                            half: Vector2::new(rng.random_range(0.08..0.25), rng.random_range(0.08..0.25)),
                            height: rng.random_range(0.05..0.2),
                            soft: 0.04,
                        },
                    }
                })
                .collect(),
        };
        Self { kind, features }
    }

    fn height(&self, x: &Vector2<f64>) -> f64 {
        match self.kind {
            SurfaceKind::HeightField => self.features.iter().map(|f| f.height(x)).sum(),
            SurfaceKind::Primitives => self.features.iter().map(|f| f.height(x)).fold(0.0, f64::max),
        }
    }

    fn sample(&self, n: usize, x0: f64, extent: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
        let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
        (0..n)
            .map(|_| {
                let xy = Vector2::new(x0 + rng.random_range(0.0..extent), rng.random_range(0.0..extent));
                let mut p = Vector3::new(xy.x, xy.y, self.height(&xy));
                if noise > 0.0 {
                    p += Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                }
                p
            })
            .collect()
    }
}

/// Uniformly distributed rotation and a translation in `[-1, 1]^3`.
pub fn random_transform(rng: &mut impl Rng) -> RigidTransform {
    let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    RigidTransform::new_orthonormalized(*q.to_rotation_matrix().matrix(), t).expect("unit quaternion is a rotation")
}

/// Generates a fragment pair of one random surface. P covers
/// `[0, L] x [0, L]` of the surface; Q the same footprint shifted along x so
/// the shared area is the requested fraction, then moved by `t_gt^-1`.
pub fn make_synthetic_scene(seed: u64, cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let stream = |k: u64| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k));
    let l = cfg.extent;
    let shift = (1.0 - cfg.overlap) * l;
    let margin = 0.5;
    let surface = Surface::random(
        cfg.surface,
        Vector2::new(-margin, -margin),
        Vector2::new(l + shift + margin, l + margin),
        &mut stream(1),
    );
    let p = surface.sample(cfg.points, 0.0, l, cfg.noise, &mut stream(2));
    let nq = ((cfg.points as f64 * cfg.density).round() as usize).max(4);
    let q_world = surface.sample(nq, shift, l, cfg.noise, &mut stream(3));
    let t_gt = random_transform(&mut stream(4));
    let inv = t_gt.inverse();
    let p = PointCloud::new(p)?;
    let q = PointCloud::new(q_world.iter().map(|x| inv.apply(x)).collect())?;
    let psi = overlap(&p, &q, &t_gt, cfg.tau_psi)?;
    let psi_rev = overlap(&q, &p, &inv, cfg.tau_psi)?;
    Ok(SyntheticScene {
        p,
        q,
        t_gt,
        overlap: psi,
        overlap_reverse: psi_rev,
    })
}
