use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};

use smoothnet::eval::{
    describe_fragment, evaluate_pair, make_synthetic_scene, oracle_features, recall_sweep, scene_recall, select_keypoints,
    sweep_csv, FragmentFeatures, PairResult, SceneConfig, SceneReport,
};
use smoothnet::geometry::voxel_downsample;
use smoothnet::io::{
    read_descriptors, read_keypoints, read_ply, write_atomic, write_descriptors, write_keypoints, write_ply,
    write_transform, PlyEncoding, RunConfig,
};
use smoothnet::matching::{mutual_correspondences, ransac_register, Correspondence, CorrespondenceSet, RansacParams};
use smoothnet::net::{load_params, Architecture};
use smoothnet::par::Exec;
use smoothnet::sdv::PatchConfig;
use smoothnet::train::{read_manifest, train, write_manifest, FragmentPair, ManifestEntry, TrainOptions};
use smoothnet::{Error, PointCloud, RigidTransform, SpatialIndex};

use crate::{Cli, Command, SynthArgs, CONFIG_ENV};

pub enum Failure {
    /// Bad flag combination or value; exit code 2.
    Usage(String),
    /// Invalid data or a failed computation; exit code 1.
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    let exec = configure_threads(cli.global.threads)?;
    let cfg = resolve_config(cli)?;
    info!("resolved config:\n{}", cfg.to_text().trim_end());
    match &cli.command {
        Command::Downsample { cloud, cell, out } => downsample(&cfg, cloud, *cell, out),
        Command::Keypoints { cloud, count, seed, out } => keypoints(&cfg, cloud, *count, *seed, out),
        Command::Describe {
            cloud,
            keypoints,
            weights,
            out,
        } => describe(&cfg, cloud, keypoints, weights, out, exec),
        Command::Match {
            keypoints_a,
            descriptors_a,
            keypoints_b,
            descriptors_b,
            out,
        } => match_cmd(keypoints_a, descriptors_a, keypoints_b, descriptors_b, out, exec),
        Command::Register {
            cloud_a,
            cloud_b,
            correspondences,
            seed,
            out,
        } => register(&cfg, cloud_a, cloud_b, correspondences, *seed, out, exec),
        Command::Evaluate {
            manifest,
            weights,
            oracle,
            keypoints,
            seed,
            scene,
            out,
            csv,
        } => {
            let opts = EvalOpts {
                weights: if *oracle { None } else { weights.clone() },
                keypoints: keypoints.unwrap_or(cfg.keypoint_count),
                seed: *seed,
                scene: scene.clone(),
            };
            evaluate(&cfg, manifest, &opts, out, csv.as_deref(), exec)
        }
        Command::Sweep { report, tau2, out } => sweep(report, tau2, out),
        Command::Train { manifest, seed, out_dir } => train_cmd(&cfg, manifest, *seed, out_dir, exec),
        Command::Synth(args) => synth(&cfg, args),
    }
}

fn configure_threads(threads: usize) -> std::result::Result<Exec, Failure> {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))?;
        }
        Ok(if threads == 1 { Exec::Sequential } else { Exec::Parallel })
    }
    #[cfg(not(feature = "parallel"))]
    {
        if threads > 1 {
            log::warn!("built without the `parallel` feature; --threads {threads} ignored");
        }
        Ok(Exec::Sequential)
    }
}

fn resolve_config(cli: &Cli) -> std::result::Result<RunConfig, Failure> {
    let path = cli
        .global
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match &path {
        Some(p) => {
            debug!("config file {}", p.display());
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    for o in &cli.global.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set_value(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_string(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn skipped_path(descriptors: &Path) -> PathBuf {
    let mut s = descriptors.as_os_str().to_owned();
    s.push(".skipped");
    PathBuf::from(s)
}

fn downsample(cfg: &RunConfig, cloud: &Path, cell: Option<f64>, out: &Path) -> Outcome {
    let cell = cell.unwrap_or(cfg.downsample_cell);
    if !(cell > 0.0) {
        return Err(Failure::Usage(format!("cell must be positive, got {cell}")));
    }
    let input = read_ply(cloud)?;
    let filtered = voxel_downsample(&input, cell);
    info!("{} -> {} points", input.len(), filtered.len());
    write_ply(out, &filtered, PlyEncoding::BinaryLittleEndian)?;
    Ok(())
}

fn keypoints(cfg: &RunConfig, cloud: &Path, count: Option<usize>, seed: u64, out: &Path) -> Outcome {
    let cloud = read_ply(cloud)?;
    let index = SpatialIndex::new(&cloud);
    let count = count.unwrap_or(cfg.keypoint_count);
    let picked = select_keypoints(&cloud, &index, count, cfg.keypoint_radius, cfg.keypoint_min_neighbors, seed);
    info!("{} of {count} requested keypoints qualify", picked.len());
    write_keypoints(out, &picked)?;
    Ok(())
}

fn describe(cfg: &RunConfig, cloud: &Path, keypoints: &Path, weights: &Path, out: &Path, exec: Exec) -> Outcome {
    let cloud = read_ply(cloud)?;
    let kp = read_keypoints(keypoints, Some(cloud.len()))?;
    let params = load_params(weights, None)?;
    let patch = PatchConfig::from_run_config(cfg)?;
    let index = SpatialIndex::new(&cloud);
    let features = describe_fragment(&cloud, &index, &kp, &patch, &params, exec)?;
    info!("{} descriptors, {} keypoints skipped", features.kept.len(), features.skipped.len());
    write_keypoints(skipped_path(out), &features.skipped)?;
    write_descriptors(out, &features.descriptors)?;
    Ok(())
}

/// Keypoint indices that actually received a descriptor row.
fn kept_keypoints(keypoints: &Path, descriptors: &Path) -> Result<Vec<usize>, Error> {
    let all = read_keypoints(keypoints, None)?;
    let sidecar = skipped_path(descriptors);
    if !sidecar.exists() {
        return Ok(all);
    }
    let skipped: HashSet<usize> = read_keypoints(&sidecar, None)?.into_iter().collect();
    Ok(all.into_iter().filter(|k| !skipped.contains(k)).collect())
}

fn match_cmd(kp_a: &Path, desc_a: &Path, kp_b: &Path, desc_b: &Path, out: &Path, exec: Exec) -> Outcome {
    let (da, db) = (read_descriptors(desc_a)?, read_descriptors(desc_b)?);
    let (ka, kb) = (kept_keypoints(kp_a, desc_a)?, kept_keypoints(kp_b, desc_b)?);
    for (k, d, path) in [(&ka, &da, desc_a), (&kb, &db, desc_b)] {
        if k.len() != d.len() {
            return Err(Failure::Data(Error::DimMismatch {
                expected: k.len(),
                found: d.len(),
            }))
            .inspect_err(|_| log::error!("{} rows do not line up with its keypoints", path.display()));
        }
    }
    let corrs = mutual_correspondences(&da, &db, exec)?;
    info!("{} mutual correspondences", corrs.len());
    let mut text = String::from("p,q,distance\n");
    for c in corrs.iter() {
        let _ = writeln!(text, "{},{},{}", ka[c.p], kb[c.q], c.distance);
    }
    write_atomic(out, text.as_bytes())?;
    Ok(())
}

fn parse_correspondences(text: &str) -> Result<CorrespondenceSet, Error> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (i == 0 && line.starts_with('p')) {
            continue;
        }
        let bad = |reason: &str| Error::MalformedValue {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 2 {
            return Err(bad("expected p,q[,distance]"));
        }
        let p = f[0].parse().map_err(|_| bad("p is not an index"))?;
        let q = f[1].parse().map_err(|_| bad("q is not an index"))?;
        let distance = match f.get(2) {
            Some(d) => d.parse().map_err(|_| bad("distance is not a number"))?,
            None => 0.0,
        };
        pairs.push(Correspondence { p, q, distance });
    }
    Ok(CorrespondenceSet { pairs })
}

fn register(
    cfg: &RunConfig,
    cloud_a: &Path,
    cloud_b: &Path,
    correspondences: &Path,
    seed: u64,
    out: &Path,
    exec: Exec,
) -> Outcome {
    let (a, b) = (read_ply(cloud_a)?, read_ply(cloud_b)?);
    let corrs = parse_correspondences(&read_string(correspondences)?)?;
    let params = RansacParams::from_config(cfg, seed);
    let result = ransac_register(&a, &b, &corrs, &params, exec)?;
    info!(
        "{} inliers of {} after {} hypotheses",
        result.inliers.len(),
        corrs.len(),
        result.iterations
    );
    write_transform(out, &result.transform)?;
    Ok(())
}

struct EvalOpts {
    /// `None` selects oracle descriptors.
    weights: Option<PathBuf>,
    keypoints: usize,
    seed: u64,
    scene: Option<String>,
}

fn evaluate(cfg: &RunConfig, manifest: &Path, opts: &EvalOpts, out: &Path, csv: Option<&Path>, exec: Exec) -> Outcome {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyManifest.into());
    }
    let params = opts.weights.as_ref().map(|w| load_params(w, None)).transpose()?;
    if let Some(p) = &params {
        let expected = Architecture::for_config(cfg)?;
        if p.arch.input_edge != expected.input_edge {
            return Err(Error::ShapeMismatch(format!(
                "weights expect {}^3 grids, config gives {}^3",
                p.arch.input_edge,
                expected.input_edge
            ))
            .into());
        }
    }
    let patch = PatchConfig::from_run_config(cfg)?;
    let mut results: Vec<PairResult> = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let pair = FragmentPair::load(entry)?;
        let seed_a = opts.seed.wrapping_add(2 * i as u64);
        let features = |cloud: &PointCloud, seed: u64, to_common: &RigidTransform| -> Result<FragmentFeatures, Error> {
            let index = SpatialIndex::new(cloud);
            let kp = select_keypoints(cloud, &index, opts.keypoints, cfg.keypoint_radius, cfg.keypoint_min_neighbors, seed);
            match &params {
                Some(p) => describe_fragment(cloud, &index, &kp, &patch, p, exec),
                None => oracle_features(cloud, &kp, to_common),
            }
        };
        let fa = features(&pair.a, seed_a, &RigidTransform::identity())?;
        let fb = features(&pair.b, seed_a + 1, &pair.t_gt)?;
        let (row, _) = evaluate_pair(&pair.name_a, &pair.name_b, &fa, &fb, &pair.t_gt, cfg.tau1, cfg.tau2, exec)?;
        info!("{} / {}: {} of {} correspondences are inliers", row.frag_a, row.frag_b, row.n_inlier, row.n_corr);
        results.push(row);
    }
    let scene = opts.scene.clone().unwrap_or_else(|| {
        manifest
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into())
    });
    let report = scene_recall(&scene, &results, cfg.tau1, cfg.tau2)?;
    write_report(&report, out, csv)?;
    println!("{}: recall {:.4}, mean inlier ratio {:.4}", report.scene, report.recall, report.mean_inlier_ratio);
    Ok(())
}

fn write_report(report: &SceneReport, json: &Path, csv: Option<&Path>) -> Result<(), Error> {
    let csv = csv.map(Path::to_path_buf).unwrap_or_else(|| json.with_extension("csv"));
    write_atomic(&csv, report.to_csv().as_bytes())?;
    write_atomic(json, report.to_json().as_bytes())
}

fn sweep(report: &Path, tau2: &[f64], out: &Path) -> Outcome {
    let thresholds: Vec<f64> = if tau2.is_empty() {
        (0..=20).map(|i| i as f64 / 100.0).collect()
    } else {
        tau2.to_vec()
    };
    if let Some(bad) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Failure::Usage(format!("tau2 {bad} is outside [0, 1]")));
    }
    let text = read_string(report)?;
    let parsed: SceneReport = serde_json::from_str(&text).map_err(|e| Error::MalformedValue {
        line: e.line(),
        reason: e.to_string(),
    })?;
    let curve = recall_sweep(&parsed.pairs, &thresholds);
    write_atomic(out, sweep_csv(&curve).as_bytes())?;
    Ok(())
}

fn train_cmd(cfg: &RunConfig, manifest: &Path, seed: u64, out_dir: &Path, exec: Exec) -> Outcome {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    cfg.save(out_dir.join("config.txt"))?;
    let opts = TrainOptions {
        out_dir: Some(out_dir.to_path_buf()),
        exec,
    };
    let outcome = train(cfg, manifest, seed, &opts)?;
    if let Some(last) = outcome.log.last() {
        println!("{} iterations over {} samples, final loss {:.6}", last.iteration, outcome.samples, last.loss);
    }
    Ok(())
}

fn synth(cfg: &RunConfig, args: &SynthArgs) -> Outcome {
    let scene_cfg = SceneConfig {
        surface: args.surface,
        extent: args.extent,
        points: args.points,
        noise: args.noise,
        overlap: args.overlap,
        density: args.density,
        tau_psi: cfg.tau_psi,
    };
    scene_cfg.validate()?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    let mut entries = Vec::with_capacity(args.pairs);
    for i in 0..args.pairs {
        let seed = args.seed.wrapping_add(i as u64);
        let scene = make_synthetic_scene(seed, &scene_cfg)?;
        let entry = ManifestEntry {
            frag_a: args.out_dir.join(format!("pair{i:03}_a.ply")),
            frag_b: args.out_dir.join(format!("pair{i:03}_b.ply")),
            transform: args.out_dir.join(format!("pair{i:03}_gt.txt")),
        };
        write_ply(&entry.frag_a, &scene.p, PlyEncoding::BinaryLittleEndian)?;
        write_ply(&entry.frag_b, &scene.q, PlyEncoding::BinaryLittleEndian)?;
        write_transform(&entry.transform, &scene.t_gt)?;
        info!("pair {i}: overlap {:.3} / {:.3}", scene.overlap, scene.overlap_reverse);
        entries.push(entry);
    }
    write_manifest(args.out_dir.join("manifest.txt"), &entries)?;
    Ok(())
}
