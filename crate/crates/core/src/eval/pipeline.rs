use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform, SpatialIndex};
use crate::io::Descriptors;
use crate::matching::{mutual_correspondences, CorrespondenceSet};
use crate::net::{describe, NetworkParams};
use crate::par::{self, Exec};
use crate::sdv::{extract_patch, PatchConfig, SdvGrid};

use super::metrics::{count_inliers, PairResult};

/// Grids per forward call; bounds activation memory.
const DESCRIBE_CHUNK: usize = 256;

/// Descriptors of one fragment's keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentFeatures {
    /// Cloud indices that produced a descriptor, in input order.
    pub kept: Vec<usize>,
    /// Cloud indices skipped for a degenerate local frame.
    pub skipped: Vec<usize>,
    /// Coordinates of the kept keypoints.
    pub keypoints: PointCloud,
    pub descriptors: Descriptors,
}

/// Patches for the given keypoints; degenerate frames come back as `None`.
pub fn keypoint_patches(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[usize],
    patch: &PatchConfig,
    exec: Exec,
) -> Result<Vec<Option<SdvGrid>>> {
    par::map_slice(exec, keypoints, |&k| match extract_patch(cloud, index, k, patch) {
        Ok(g) => Ok(Some(g)),
        Err(Error::DegenerateSupport(_)) => Ok(None),
        Err(e) => Err(e),
    })
    .into_iter()
    .collect()
}

fn split(cloud: &PointCloud, keypoints: &[usize], patches: &[Option<SdvGrid>]) -> (Vec<usize>, Vec<usize>, PointCloud) {
    let kept: Vec<usize> = keypoints.iter().zip(patches).filter(|(_, g)| g.is_some()).map(|(&k, _)| k).collect();
    let skipped = keypoints.iter().zip(patches).filter(|(_, g)| g.is_none()).map(|(&k, _)| k).collect();
    let kp = cloud.select(&kept);
    (kept, skipped, kp)
}

/// Full description of a fragment: frame, grid and network per keypoint.
pub fn describe_fragment(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[usize],
    patch: &PatchConfig,
    params: &NetworkParams,
    exec: Exec,
) -> Result<FragmentFeatures> {
    let patches = keypoint_patches(cloud, index, keypoints, patch, exec)?;
    let (kept, skipped, kp) = split(cloud, keypoints, &patches);
    let grids: Vec<SdvGrid> = patches.into_iter().flatten().collect();
    let dim = params.arch.output_dim();
    let mut data = Vec::with_capacity(grids.len() * dim);
    for chunk in grids.chunks(DESCRIBE_CHUNK) {
        for row in describe(params, chunk, exec)? {
            data.extend_from_slice(&row);
        }
    }
    Ok(FragmentFeatures {
        kept,
        skipped,
        keypoints: kp,
        descriptors: Descriptors::new(dim, data)?,
    })
}

/// Oracle features: the keypoint coordinates themselves, mapped by `to_common`
/// into a shared frame.
pub fn oracle_features(cloud: &PointCloud, keypoints: &[usize], to_common: &RigidTransform) -> Result<FragmentFeatures> {
    let kp = cloud.select(keypoints);
    let data = kp
        .points()
        .iter()
        .flat_map(|p| {
            let x = to_common.apply(p);
            [x.x as f32, x.y as f32, x.z as f32]
        })
        .collect();
    Ok(FragmentFeatures {
        kept: keypoints.to_vec(),
        skipped: Vec::new(),
        keypoints: kp,
        descriptors: Descriptors::new(3, data)?,
    })
}

/// Mutual matches between two fragments, scored against the ground truth
/// (`t_gt` maps B into A's frame).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pair(
    name_a: &str,
    name_b: &str,
    a: &FragmentFeatures,
    b: &FragmentFeatures,
    t_gt: &RigidTransform,
    tau1: f64,
    tau2: f64,
    exec: Exec,
) -> Result<(PairResult, CorrespondenceSet)> {
    let corrs = mutual_correspondences(&a.descriptors, &b.descriptors, exec)?;
    let n_inlier = count_inliers(&corrs, &a.keypoints, &b.keypoints, t_gt, tau1);
    Ok((PairResult::from_counts(name_a, name_b, corrs.len(), n_inlier, tau2), corrs))
}
