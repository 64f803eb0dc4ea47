//! Evaluation: inlier ratio and recall, RANSAC budgets, synthetic scenes,
//! keypoint sampling and the describe-and-match pipeline.

mod keypoints;
mod metrics;
mod pipeline;
mod synth;

pub use keypoints::select_keypoints;
pub use metrics::{
    count_inliers, inlier_ratio, ransac_iterations, recall_sweep, scene_recall, sweep_csv, PairResult, SceneReport,
};
pub use pipeline::{describe_fragment, evaluate_pair, keypoint_patches, oracle_features, FragmentFeatures};
pub use synth::{make_synthetic_scene, random_transform, SceneConfig, SurfaceKind, SyntheticScene};
