use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::matching::CorrespondenceSet;

/// Outcome of matching one fragment pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub frag_a: String,
    pub frag_b: String,
    pub n_corr: usize,
    pub n_inlier: usize,
    /// `n_inlier / n_corr`, or 0 for an empty correspondence set.
    pub ratio: f64,
    pub pass: bool,
}

impl PairResult {
    /// Builds a row from raw counts; `pass` is `ratio > tau2`.
    pub fn from_counts(frag_a: impl Into<String>, frag_b: impl Into<String>, n_corr: usize, n_inlier: usize, tau2: f64) -> Self {
        let ratio = if n_corr == 0 { 0.0 } else { n_inlier as f64 / n_corr as f64 };
        Self {
            frag_a: frag_a.into(),
            frag_b: frag_b.into(),
            n_corr,
            n_inlier,
            ratio,
            pass: n_corr > 0 && ratio > tau2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene: String,
    pub tau1: f64,
    pub tau2: f64,
    pub recall: f64,
    pub mean_inlier_ratio: f64,
    pub pairs: Vec<PairResult>,
}

impl SceneReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Per-pair rows `scene,frag_a,frag_b,n_corr,n_inlier,ratio,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,frag_a,frag_b,n_corr,n_inlier,ratio,pass\n");
        for p in &self.pairs {
            out += &format!(
                "{},{},{},{},{},{:.6},{}\n",
                self.scene, p.frag_a, p.frag_b, p.n_corr, p.n_inlier, p.ratio, p.pass
            );
        }
        out
    }
}

/// Number of correspondences whose points align under `t_gt` strictly
/// within `tau1`.
pub fn count_inliers(corrs: &CorrespondenceSet, kp_p: &PointCloud, kp_q: &PointCloud, t_gt: &RigidTransform, tau1: f64) -> usize {
    let tau1_sq = tau1 * tau1;
    corrs
        .iter()
        .filter(|c| (kp_p.get(c.p) - t_gt.apply(&kp_q.get(c.q))).norm_squared() < tau1_sq)
        .count()
}

/// Fraction of correspondences that are inliers under the ground truth.
pub fn inlier_ratio(corrs: &CorrespondenceSet, kp_p: &PointCloud, kp_q: &PointCloud, t_gt: &RigidTransform, tau1: f64) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::EmptyCorrespondences);
    }
    Ok(count_inliers(corrs, kp_p, kp_q, t_gt, tau1) as f64 / corrs.len() as f64)
}

/// Average recall over pair results: the share with ratio strictly above
/// `tau2`. Pairs without correspondences always fail.
pub fn scene_recall(scene: &str, pairs: &[PairResult], tau1: f64, tau2: f64) -> Result<SceneReport> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let pairs: Vec<PairResult> = pairs
        .iter()
        .map(|p| PairResult {
            pass: p.n_corr > 0 && p.ratio > tau2,
            ..p.clone()
        })
        .collect();
    let n = pairs.len() as f64;
    Ok(SceneReport {
        scene: scene.to_string(),
        tau1,
        tau2,
        recall: pairs.iter().filter(|p| p.pass).count() as f64 / n,
        mean_inlier_ratio: pairs.iter().map(|p| p.ratio).sum::<f64>() / n,
        pairs,
    })
}

/// `(tau2, recall)` for each threshold, in the given order.
pub fn recall_sweep(pairs: &[PairResult], tau2s: &[f64]) -> Vec<(f64, f64)> {
    tau2s
        .iter()
        .map(|&t| {
            let passing = pairs.iter().filter(|p| p.n_corr > 0 && p.ratio > t).count();
            let recall = if pairs.is_empty() { 0.0 } else { passing as f64 / pairs.len() as f64 };
            (t, recall)
        })
        .collect()
}

pub fn sweep_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("tau2,recall\n");
    for (t, r) in curve {
        out += &format!("{t},{r:.6}\n");
    }
    out
}

/// RANSAC draws needed to hit one all-inlier `n`-sample with probability
/// `p` when a fraction `tau2` of correspondences are inliers:
/// `floor(log(1 - p) / log(1 - tau2^n))`, at least 1.
pub fn ransac_iterations(tau2: f64, n: u32, p: f64) -> Result<u64> {
    if !(tau2 > 0.0 && tau2 < 1.0) {
        return Err(Error::Domain(format!("inlier ratio must lie in (0, 1), got {tau2}")));
    }
    if n < 1 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("success probability must lie in (0, 1), got {p}")));
    }
    let k = (-p).ln_1p() / (-tau2.powi(n as i32)).ln_1p();
    Ok((k.floor() as u64).max(1))
}
