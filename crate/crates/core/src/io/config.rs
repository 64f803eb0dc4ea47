use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{read_text, write_atomic};

/// Network layout preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    /// Six 3x3x3 conv blocks (32-32-64-64-128-128 filters, two stride-2).
    Standard,
    /// Three narrow conv blocks; trains in minutes on one CPU core.
    Compact,
}

impl FromStr for ArchKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(ArchKind::Standard),
            "compact" => Ok(ArchKind::Compact),
            other => Err(format!("unknown architecture '{other}' (standard|compact)")),
        }
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArchKind::Standard => "standard",
            ArchKind::Compact => "compact",
        })
    }
}

macro_rules! run_config {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every tunable of a run, serialized as `key = value` lines.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( $(#[$doc])* pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($field) ),*];

            fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
                match key {
                    $( stringify!($field) => {
                        self.$field = value.parse::<$ty>().map_err(|_| Error::MalformedValue {
                            line,
                            reason: format!("'{value}' is not a valid {} for {key}", stringify!($ty)),
                        })?;
                    } )*
                    _ => return Err(Error::UnknownKey { line, key: key.to_string() }),
                }
                Ok(())
            }

            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $( let _ = writeln!(s, "{} = {}", stringify!($field), self.$field); )*
                s
            }
        }
    };
}

run_config! {
    /// Edge length W of the voxel grid, meters.
    grid_size: f64 = 0.3,
    /// Voxels per grid axis c.
    voxels_per_axis: usize = 16,
    /// Gaussian kernel width h, meters.
    kernel_width: f64 = 1.75 * (0.3 / 16.0) / 2.0,
    /// Support radius for LRF estimation, meters.
    lrf_radius: f64 = 3f64.sqrt() * 0.3,
    descriptor_dim: usize = 32,
    /// Replace smoothed densities by binary occupancy (ablation).
    occupancy: bool = false,
    architecture: ArchKind = ArchKind::Standard,
    /// Voxel filter cell applied before keypoint sampling; 0 disables it.
    downsample_cell: f64 = 0.0,
    keypoint_count: usize = 5000,
    keypoint_radius: f64 = 0.5,
    /// A keypoint needs strictly more than this many neighbours.
    keypoint_min_neighbors: usize = 10,
    learning_rate: f64 = 1e-3,
    lr_decay: f64 = 0.95,
    lr_decay_steps: usize = 5000,
    batch_size: usize = 256,
    epochs: usize = 20,
    /// Iteration cap across all epochs; 0 means no cap.
    max_iterations: usize = 0,
    anchors_per_pair: usize = 300,
    dropout: f64 = 0.3,
    ransac_max_iterations: usize = 55_000,
    ransac_inlier_distance: f64 = 0.1,
    ransac_confidence: f64 = 0.999,
    ransac_sample_size: usize = 3,
    /// Correspondence distance threshold tau_1, meters.
    tau1: f64 = 0.1,
    /// Inlier-ratio threshold tau_2.
    tau2: f64 = 0.05,
    /// Overlap neighbour distance tau_psi, meters.
    tau_psi: f64 = 0.06,
    min_overlap: f64 = 0.3,
    seed: u64 = 0,
}

impl RunConfig {
    /// Outdoor-scan profile: 1 m grids on clouds voxel-filtered at 2 cm.
    pub fn eth_profile() -> Self {
        let grid_size = 1.0;
        Self {
            grid_size,
            kernel_width: 1.75 * (grid_size / 16.0) / 2.0,
            lrf_radius: 3f64.sqrt() * grid_size,
            downsample_cell: 0.02,
            ..Self::default()
        }
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_overrides(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of `self`, then validates.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedValue {
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim(), i + 1)?;
        }
        self.validate()
    }

    pub fn set_value(&mut self, key: &str, value: &str) -> Result<()> {
        self.set(key, value, 0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::InvariantViolation(what.to_string()));
        let finite = [
            self.grid_size,
            self.kernel_width,
            self.lrf_radius,
            self.downsample_cell,
            self.keypoint_radius,
            self.learning_rate,
            self.lr_decay,
            self.dropout,
            self.ransac_inlier_distance,
            self.ransac_confidence,
            self.tau1,
            self.tau2,
            self.tau_psi,
            self.min_overlap,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("all real-valued parameters must be finite");
        }
        if self.grid_size <= 0.0 {
            return fail("grid_size > 0");
        }
        if self.voxels_per_axis < 2 {
            return fail("voxels_per_axis >= 2");
        }
        if self.kernel_width <= 0.0 {
            return fail("kernel_width > 0");
        }
        if 3.0 * self.kernel_width > self.grid_size {
            return fail("3 * kernel_width <= grid_size");
        }
        if self.lrf_radius < 3f64.sqrt() / 2.0 * self.grid_size {
            return fail("lrf_radius >= (sqrt(3)/2) * grid_size");
        }
        if self.descriptor_dim < 1 {
            return fail("descriptor_dim >= 1");
        }
        if !(self.tau2 > 0.0 && self.tau2 <= 1.0) {
            return fail("0 < tau2 <= 1");
        }
        if self.tau1 <= 0.0 || self.tau_psi <= 0.0 {
            return fail("tau1 > 0 and tau_psi > 0");
        }
        if self.downsample_cell < 0.0 || self.keypoint_radius <= 0.0 {
            return fail("downsample_cell >= 0 and keypoint_radius > 0");
        }
        if self.learning_rate <= 0.0 || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_decay_steps == 0 {
            return fail("learning_rate > 0, 0 < lr_decay <= 1, lr_decay_steps >= 1");
        }
        if self.batch_size < 2 {
            return fail("batch_size >= 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("0 <= dropout < 1");
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return fail("0 < ransac_confidence < 1");
        }
        if self.ransac_sample_size < 3 || self.ransac_max_iterations == 0 || self.ransac_inlier_distance <= 0.0 {
            return fail("ransac_sample_size >= 3, ransac_max_iterations >= 1, ransac_inlier_distance > 0");
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return fail("0 <= min_overlap <= 1");
        }
        Ok(())
    }

    /// Voxel edge w = W / c.
    pub fn voxel_size(&self) -> f64 {
        self.grid_size / self.voxels_per_axis as f64
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}
