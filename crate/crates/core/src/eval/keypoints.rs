use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{PointCloud, SpatialIndex};

/// Random keypoints with more than `min_neighbors` other points within
/// `radius`. Candidates are visited in a seeded random order; the first
/// `count` that qualify are returned in ascending index order.
pub fn select_keypoints(
    cloud: &PointCloud,
    index: &SpatialIndex,
    count: usize,
    radius: f64,
    min_neighbors: usize,
    seed: u64,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked: Vec<usize> = order
        .into_iter()
        .filter(|&i| index.count_within(&cloud.get(i), radius).saturating_sub(1) > min_neighbors)
        .take(count)
        .collect();
    picked.sort_unstable();
    picked
}
