//! Command-line front end: one subcommand per pipeline stage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smoothnet::eval::SurfaceKind;

/// Environment variable naming a config file, used when `--config` is absent.
pub const CONFIG_ENV: &str = "SMOOTHNET_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "smoothnet", version, about = "Learned rotation-invariant descriptors for point cloud registration")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Run configuration file (`key = value` lines). Falls back to $SMOOTHNET_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set tau2=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0, global = true)]
    pub threads: usize,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Voxel-grid filter a cloud, keeping one centroid per occupied cell.
    Downsample {
        #[arg(long)]
        cloud: PathBuf,
        /// Cell edge in meters; defaults to the config's `downsample_cell`.
        #[arg(long)]
        cell: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample keypoints with enough neighbours for a stable local frame.
    Keypoints {
        #[arg(long)]
        cloud: PathBuf,
        /// Defaults to the config's `keypoint_count`.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute descriptors; skipped keypoints go to `<out>.skipped`.
    Describe {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mutual nearest-neighbour matching; writes `p,q,distance` in cloud indices.
    Match {
        #[arg(long)]
        keypoints_a: PathBuf,
        #[arg(long)]
        descriptors_a: PathBuf,
        #[arg(long)]
        keypoints_b: PathBuf,
        #[arg(long)]
        descriptors_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// RANSAC rigid registration of cloud B onto cloud A from correspondences.
    Register {
        #[arg(long)]
        cloud_a: PathBuf,
        #[arg(long)]
        cloud_b: PathBuf,
        #[arg(long)]
        correspondences: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output transform mapping B into A's frame.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score descriptor matching on every pair of a manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, required_unless_present = "oracle")]
        weights: Option<PathBuf>,
        /// Use ground-truth-aligned coordinates as descriptors.
        #[arg(long, conflicts_with = "weights")]
        oracle: bool,
        /// Keypoints per fragment; defaults to the config's `keypoint_count`.
        #[arg(long)]
        keypoints: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene label in the report; defaults to the manifest's file stem.
        #[arg(long)]
        scene: Option<String>,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
        /// Per-pair CSV path; defaults to the JSON path with a `.csv` extension.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recall as a function of the inlier-ratio threshold, from a JSON report.
    Sweep {
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated thresholds; defaults to 0.00, 0.01, ..., 0.20.
        #[arg(long, value_delimiter = ',')]
        tau2: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a descriptor network on a manifest of aligned fragment pairs.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives `weights.bin`, `loss.csv`, checkpoints and `config.txt`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate synthetic fragment pairs with ground truth and a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "height-field")]
    pub surface: SurfaceKind,
    #[arg(long, default_value_t = 2.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 6000)]
    pub points: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.6)]
    pub overlap: f64,
    /// Fraction of points kept after random thinning.
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 2 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
