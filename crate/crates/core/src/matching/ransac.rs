use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{estimate_rigid, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::eval::ransac_iterations;
use crate::geometry::{Point, PointCloud, RigidTransform};
use crate::io::RunConfig;
use crate::par::{self, Exec};

/// Hypotheses drawn and scored per parallel round.
const ROUND: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Residual threshold (m); a correspondence is an inlier when strictly
    /// closer.
    pub inlier_distance: f64,
    pub sample_size: usize,
    /// Desired probability of drawing one all-inlier sample.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 55_000,
            inlier_distance: 0.1,
            sample_size: 3,
            confidence: 0.999,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn from_config(cfg: &RunConfig, seed: u64) -> Self {
        Self {
            max_iterations: cfg.ransac_max_iterations,
            inlier_distance: cfg.ransac_inlier_distance,
            sample_size: cfg.ransac_sample_size,
            confidence: cfg.ransac_confidence,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_size < 3 || !(self.confidence > 0.0 && self.confidence < 1.0) || !(self.inlier_distance > 0.0) {
            return Err(Error::Domain(format!("invalid RANSAC parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    /// Maps Q keypoints into P's frame.
    pub transform: RigidTransform,
    /// Indices into the correspondence set.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
struct Score {
    count: usize,
    rmse: f64,
}

impl Score {
    fn beats(&self, other: &Score) -> bool {
        self.count > other.count || (self.count == other.count && self.rmse < other.rmse)
    }
}

fn score(t: &RigidTransform, src: &[Point], dst: &[Point], thr2: f64) -> Score {
    let mut count = 0;
    let mut sum = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let r2 = (d - t.apply(s)).norm_squared();
        if r2 < thr2 {
            count += 1;
            sum += r2;
        }
    }
    let rmse = if count > 0 { (sum / count as f64).sqrt() } else { f64::INFINITY };
    Score { count, rmse }
}

fn inlier_set(t: &RigidTransform, src: &[Point], dst: &[Point], thr2: f64) -> Vec<usize> {
    (0..src.len())
        .filter(|&i| (dst[i] - t.apply(&src[i])).norm_squared() < thr2)
        .collect()
}

fn budget(ratio: f64, params: &RansacParams) -> usize {
    if ratio >= 1.0 {
        return 1;
    }
    ransac_iterations(ratio, params.sample_size as u32, params.confidence)
        .map(|k| k.min(params.max_iterations as u64) as usize)
        .unwrap_or(params.max_iterations)
}

/// Seeded RANSAC over feature-space correspondences, estimating `T` with
/// `p ~ T(q)`.
///
/// Hypotheses are drawn from one seeded stream and scored in rounds; the
/// reduction walks each round in draw order and stops at the adaptive budget,
/// so the outcome is the same for every [`Exec`].
pub fn ransac_register(
    kp_p: &PointCloud,
    kp_q: &PointCloud,
    corrs: &CorrespondenceSet,
    params: &RansacParams,
    exec: Exec,
) -> Result<RansacResult> {
    params.validate()?;
    let n = corrs.len();
    if n < params.sample_size {
        return Err(Error::TooFewCorrespondences(n));
    }
    let mut src = Vec::with_capacity(n);
    let mut dst = Vec::with_capacity(n);
    for c in corrs.iter() {
        if c.p >= kp_p.len() || c.q >= kp_q.len() {
            return Err(Error::KeypointOutOfRange {
                index: c.p.max(c.q),
                len: kp_p.len().min(kp_q.len()),
            });
        }
        src.push(kp_q.get(c.q));
        dst.push(kp_p.get(c.p));
    }
    let thr2 = params.inlier_distance * params.inlier_distance;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut limit = params.max_iterations.max(1);
    let mut best: Option<(Score, RigidTransform)> = None;
    let mut it = 0;
    while it < limit {
        let samples: Vec<Vec<usize>> = (0..ROUND)
            .map(|_| index::sample(&mut rng, n, params.sample_size).into_vec())
            .collect();
        let scored = par::map_slice(exec, &samples, |s| {
            let a: Vec<Point> = s.iter().map(|&i| src[i]).collect();
            let b: Vec<Point> = s.iter().map(|&i| dst[i]).collect();
            estimate_rigid(&a, &b).ok().map(|t| (score(&t, &src, &dst, thr2), t))
        });
        for hyp in scored {
            if it >= limit {
                break;
            }
            it += 1;
            if let Some((s, t)) = hyp {
                if s.count >= params.sample_size && best.as_ref().is_none_or(|(b, _)| s.beats(b)) {
                    limit = limit.min(budget(s.count as f64 / n as f64, params)).max(it);
                    best = Some((s, t));
                }
            }
        }
    }
    let (_, best_t) = best.ok_or(Error::NoModelFound)?;
    let inliers = inlier_set(&best_t, &src, &dst, thr2);
    let a: Vec<Point> = inliers.iter().map(|&i| src[i]).collect();
    let b: Vec<Point> = inliers.iter().map(|&i| dst[i]).collect();
    let (transform, inliers) = match estimate_rigid(&a, &b) {
        Ok(refit) => {
            let refit_inliers = inlier_set(&refit, &src, &dst, thr2);
            (refit, refit_inliers)
        }
        Err(_) => (best_t, inliers),
    };
    Ok(RansacResult {
        transform,
        inliers,
        iterations: it,
    })
}
