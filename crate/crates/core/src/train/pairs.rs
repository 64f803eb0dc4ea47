use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform, SpatialIndex};
use crate::io::RunConfig;
use crate::matching::overlap;
use crate::par::{self, Exec};
use crate::sdv::{extract_patch, PatchConfig, SdvGrid};

/// Anchor grid from fragment `frag_i`, positive grid from `frag_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub anchor: SdvGrid,
    pub positive: SdvGrid,
    pub frag_i: usize,
    pub frag_j: usize,
    pub anchor_index: usize,
    pub positive_index: usize,
}

/// Knobs of [`sample_training_pairs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSampling {
    pub patch: PatchConfig,
    pub n_anchors: usize,
    /// Positive gate (m).
    pub tau1: f64,
    /// Neighbour threshold of the overlap measure (m).
    pub tau_psi: f64,
    /// Both overlap directions must exceed this.
    pub min_overlap: f64,
}

impl PairSampling {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            patch: PatchConfig::from_run_config(cfg)?,
            n_anchors: cfg.anchors_per_pair,
            tau1: cfg.tau1,
            tau_psi: cfg.tau_psi,
            min_overlap: cfg.min_overlap,
        })
    }
}

/// Fragment plus its spatial index and a caller-chosen id.
#[derive(Clone, Copy)]
pub struct Fragment<'a> {
    pub id: usize,
    pub cloud: &'a PointCloud,
    pub index: &'a SpatialIndex,
}

/// Draws anchors uniformly from the points of `frag_i` whose nearest
/// neighbour in `t_gt(frag_j)` lies within `tau1`; that neighbour is the
/// positive. Anchors whose frame is degenerate in either fragment are
/// skipped, so fewer than `n_anchors` pairs may come back.
pub fn sample_training_pairs(
    frag_i: Fragment<'_>,
    frag_j: Fragment<'_>,
    t_gt: &RigidTransform,
    opts: &PairSampling,
    seed: u64,
    exec: Exec,
) -> Result<Vec<TrainingPair>> {
    let fwd = overlap(frag_i.cloud, frag_j.cloud, t_gt, opts.tau_psi)?;
    let rev = overlap(frag_j.cloud, frag_i.cloud, &t_gt.inverse(), opts.tau_psi)?;
    if fwd <= opts.min_overlap || rev <= opts.min_overlap {
        return Err(Error::InsufficientOverlap(format!(
            "fragments {} and {}: overlap {fwd:.3} / {rev:.3}, need > {}",
            frag_i.id, frag_j.id, opts.min_overlap
        )));
    }
    let moved = frag_j.cloud.transformed(t_gt);
    let moved_index = SpatialIndex::new(&moved);
    let gate = opts.tau1 * opts.tau1;
    let mut candidates: Vec<(usize, usize)> = frag_i
        .cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(a, p)| match moved_index.nearest(p) {
            Some((b, d2)) if d2 <= gate => Some((a, b)),
            _ => None,
        })
        .collect();
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut out = Vec::with_capacity(opts.n_anchors);
    // Work through the shuffled candidates in rounds sized to the remaining
    // demand; each round is data-parallel and consumed in order.
    let mut cursor = 0;
    while out.len() < opts.n_anchors && cursor < candidates.len() {
        let want = (opts.n_anchors - out.len()).max(8);
        let end = (cursor + want).min(candidates.len());
        let round = par::map_slice(exec, &candidates[cursor..end], |&(a, b)| {
            let anchor = extract_patch(frag_i.cloud, frag_i.index, a, &opts.patch);
            let positive = extract_patch(frag_j.cloud, frag_j.index, b, &opts.patch);
            match (anchor, positive) {
                (Ok(anchor), Ok(positive)) => Ok(Some(TrainingPair {
                    anchor,
                    positive,
                    frag_i: frag_i.id,
                    frag_j: frag_j.id,
                    anchor_index: a,
                    positive_index: b,
                })),
                (Err(Error::DegenerateSupport(_)), _) | (_, Err(Error::DegenerateSupport(_))) => Ok(None),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        });
        for pair in round {
            if let Some(pair) = pair? {
                if out.len() < opts.n_anchors {
                    out.push(pair);
                }
            }
        }
        cursor = end;
    }
    Ok(out)
}
