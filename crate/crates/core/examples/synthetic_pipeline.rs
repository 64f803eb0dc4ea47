//! End to end on synthetic data: train a small network, describe two
//! held-out fragments, match them and register with RANSAC.
//!
//! `cargo run --release --example synthetic_pipeline -- [iterations]`

use std::time::Instant;

use smoothnet::eval::{describe_fragment, evaluate_pair, make_synthetic_scene, select_keypoints, SceneConfig};
use smoothnet::io::{ArchKind, RunConfig};
use smoothnet::matching::{ransac_register, RansacParams};
use smoothnet::par::Exec;
use smoothnet::sdv::PatchConfig;
use smoothnet::train::{train_pairs, FragmentPair, TrainOptions};
use smoothnet::SpatialIndex;

fn main() -> smoothnet::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let exec = Exec::default();
    let cfg = RunConfig {
        descriptor_dim: 16,
        architecture: ArchKind::Compact,
        batch_size: 32,
        max_iterations: iterations,
        anchors_per_pair: 100,
        dropout: 0.0,
        ..RunConfig::default()
    };
    let scene_cfg = SceneConfig {
        points: 12_000,
        noise: 0.002,
        ..SceneConfig::default()
    };

    let t = Instant::now();
    let pairs = (0..10)
        .map(|seed| {
            let s = make_synthetic_scene(seed, &SceneConfig { overlap: 1.0, ..scene_cfg })?;
            Ok(FragmentPair {
                name_a: format!("{seed}a"),
                name_b: format!("{seed}b"),
                a: s.p,
                b: s.q,
                t_gt: s.t_gt,
            })
        })
        .collect::<smoothnet::Result<Vec<_>>>()?;
    let opts = TrainOptions { out_dir: None, exec };
    let trained = train_pairs(&cfg, &pairs, 1, &opts)?;
    let log = &trained.log;
    println!(
        "trained {} iterations in {:.1?}: loss {:.3} -> {:.3}",
        log.len(),
        t.elapsed(),
        log[0].loss,
        log[log.len() - 1].loss
    );

    let scene = make_synthetic_scene(500, &SceneConfig { overlap: 0.7, ..scene_cfg })?;
    let patch = PatchConfig::from_run_config(&cfg)?;
    let features = |cloud, seed| {
        let index = SpatialIndex::new(cloud);
        let kp = select_keypoints(cloud, &index, 1000, cfg.keypoint_radius, cfg.keypoint_min_neighbors, seed);
        describe_fragment(cloud, &index, &kp, &patch, &trained.params, exec)
    };
    let (fa, fb) = (features(&scene.p, 1)?, features(&scene.q, 2)?);
    let (row, corrs) = evaluate_pair("P", "Q", &fa, &fb, &scene.t_gt, cfg.tau1, cfg.tau2, exec)?;
    println!("{} mutual matches, inlier ratio {:.3}", row.n_corr, row.ratio);

    let ransac = ransac_register(&fa.keypoints, &fb.keypoints, &corrs, &RansacParams::from_config(&cfg, 3), exec)?;
    println!(
        "RANSAC: {} inliers after {} hypotheses; rotation error {:.2} deg, translation error {:.3} m",
        ransac.inliers.len(),
        ransac.iterations,
        ransac.transform.rotation_error_deg(&scene.t_gt),
        ransac.transform.translation_error(&scene.t_gt)
    );
    Ok(())
}
