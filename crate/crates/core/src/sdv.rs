//! Smoothed-density-value voxelization of canonicalized neighbourhoods.
//!
//! Each voxel stores the mean truncated-Gaussian response of the points
//! within `3h` of its centroid; the whole grid is then scaled to unit sum.

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, SpatialIndex};
use crate::io::RunConfig;
use crate::lrf::{estimate_lrf, Lrf};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Grid edge W in meters.
    pub edge: f64,
    /// Voxels per axis c.
    pub voxels: usize,
    /// Kernel width h in meters.
    pub kernel_width: f64,
    /// Binary occupancy instead of smoothed density.
    pub occupancy: bool,
}

impl GridConfig {
    pub fn new(edge: f64, voxels: usize, kernel_width: f64) -> Result<Self> {
        let cfg = Self {
            edge,
            voxels,
            kernel_width,
            occupancy: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.edge > 0.0 && self.edge.is_finite()) {
            return Err(Error::InvariantViolation("grid edge W > 0".into()));
        }
        if self.voxels < 2 {
            return Err(Error::InvariantViolation("voxels per axis >= 2".into()));
        }
        if !(self.kernel_width > 0.0) || 3.0 * self.kernel_width > self.edge {
            return Err(Error::InvariantViolation("0 < 3h <= W".into()));
        }
        Ok(())
    }

    pub fn voxel_size(&self) -> f64 {
        self.edge / self.voxels as f64
    }

    /// Circumradius of the grid cube, `(√3/2) W`.
    pub fn support_radius(&self) -> f64 {
        3f64.sqrt() / 2.0 * self.edge
    }

    /// Centroid coordinate of voxel `i` along one axis.
    #[inline]
    pub fn centroid(&self, i: usize) -> f64 {
        -self.edge / 2.0 + (i as f64 + 0.5) * self.voxel_size()
    }

    pub fn len(&self) -> usize {
        self.voxels * self.voxels * self.voxels
    }

    pub fn is_empty(&self) -> bool {
        self.voxels == 0
    }
}

/// Grid geometry plus the LRF radius: everything needed to cut a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    pub grid: GridConfig,
    pub lrf_radius: f64,
}

impl PatchConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Result<Self> {
        let grid = GridConfig {
            edge: cfg.grid_size,
            voxels: cfg.voxels_per_axis,
            kernel_width: cfg.kernel_width,
            occupancy: cfg.occupancy,
        };
        grid.validate()?;
        if cfg.lrf_radius < grid.support_radius() {
            return Err(Error::InvariantViolation("lrf_radius >= (sqrt(3)/2) * W".into()));
        }
        Ok(Self {
            grid,
            lrf_radius: cfg.lrf_radius,
        })
    }
}

/// `c x c x c` grid, x index fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct SdvGrid {
    voxels: usize,
    values: Vec<f64>,
}

impl SdvGrid {
    pub fn zeros(voxels: usize) -> Self {
        Self {
            voxels,
            values: vec![0.0; voxels * voxels * voxels],
        }
    }

    pub fn from_values(voxels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != voxels * voxels * voxels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {voxels}^3 grid",
                values.len()
            )));
        }
        Ok(Self { voxels, values })
    }

    pub fn voxels(&self) -> usize {
        self.voxels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize, l: usize) -> usize {
        j + self.voxels * (k + self.voxels * l)
    }

    pub fn get(&self, j: usize, k: usize, l: usize) -> f64 {
        self.values[self.index(j, k, l)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.values.iter().filter(|&&v| v == 0.0).count() as f64 / self.values.len() as f64
    }

    /// Debug dump: all values, whitespace separated, in storage order.
    pub fn to_text(&self) -> String {
        let parts: Vec<String> = self.values.iter().map(|v| format!("{v:e}")).collect();
        parts.join(" ") + "\n"
    }

    pub fn from_text(voxels: usize, text: &str) -> Result<Self> {
        let values = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::MalformedValue {
                    line: 0,
                    reason: format!("'{t}' is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(voxels, values)
    }

    fn normalize(&mut self) {
        let total: f64 = self.values.iter().sum();
        if total > 0.0 {
            for v in &mut self.values {
                *v /= total;
            }
        }
    }
}

/// Expresses points in the frame's coordinates (origin at the interest point).
pub fn canonicalize(points: &[Point], lrf: &Lrf) -> Vec<Point> {
    points.iter().map(|p| lrf.to_local(p)).collect()
}

/// Voxelizes canonical points; an empty input gives the all-zero grid.
pub fn compute_sdv(points: &[Point], cfg: &GridConfig) -> SdvGrid {
    let mut grid = if cfg.occupancy {
        occupancy_grid(points, cfg)
    } else {
        density_grid(points, cfg)
    };
    grid.normalize();
    grid
}

fn density_grid(points: &[Point], cfg: &GridConfig) -> SdvGrid {
    let c = cfg.voxels;
    let w = cfg.voxel_size();
    let h = cfg.kernel_width;
    let cutoff = 3.0 * h;
    let cutoff_sq = cutoff * cutoff;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h);
    let inv_two_h2 = 1.0 / (2.0 * h * h);
    let half = cfg.edge / 2.0;

    let mut sums = vec![0.0f64; c * c * c];
    let mut counts = vec![0u32; c * c * c];
    let range = |x: f64| -> Option<(usize, usize)> {
        // centroid i lies within the cutoff iff |x - centroid(i)| < 3h
        let lo = ((x - cutoff + half) / w - 0.5).floor().max(0.0);
        let hi = ((x + cutoff + half) / w - 0.5).ceil().min((c - 1) as f64);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let centroids: Vec<f64> = (0..c).map(|i| cfg.centroid(i)).collect();
    for p in points {
        let (Some((j0, j1)), Some((k0, k1)), Some((l0, l1))) = (range(p.x), range(p.y), range(p.z)) else {
            continue;
        };
        for l in l0..=l1 {
            let dz = centroids[l] - p.z;
            for k in k0..=k1 {
                let dy = centroids[k] - p.y;
                let dyz = dy * dy + dz * dz;
                if dyz >= cutoff_sq {
                    continue;
                }
                for j in j0..=j1 {
                    let dx = centroids[j] - p.x;
                    let d2 = dx * dx + dyz;
                    if d2 < cutoff_sq {
                        let v = j + c * (k + c * l);
                        sums[v] += norm * (-d2 * inv_two_h2).exp();
                        counts[v] += 1;
                    }
                }
            }
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    SdvGrid { voxels: c, values }
}

fn occupancy_grid(points: &[Point], cfg: &GridConfig) -> SdvGrid {
    let c = cfg.voxels;
    let w = cfg.voxel_size();
    let half = cfg.edge / 2.0;
    let mut grid = SdvGrid::zeros(c);
    let cell = |x: f64| -> Option<usize> {
        let i = ((x + half) / w).floor();
        (i >= 0.0 && i < c as f64).then_some(i as usize)
    };
    for p in points {
        if let (Some(j), Some(k), Some(l)) = (cell(p.x), cell(p.y), cell(p.z)) {
            let v = grid.index(j, k, l);
            grid.values[v] = 1.0;
        }
    }
    grid
}

/// Grid for one keypoint: LRF at `lrf_radius`, crop to the grid's
/// circumsphere, canonicalize, voxelize.
pub fn extract_patch(cloud: &PointCloud, index: &SpatialIndex, keypoint: usize, cfg: &PatchConfig) -> Result<SdvGrid> {
    let p = cloud.get(keypoint);
    let lrf = estimate_lrf(cloud, index, &p, cfg.lrf_radius)?;
    Ok(patch_in_frame(cloud, index, &lrf, &cfg.grid))
}

/// Voxelizes the circumsphere support of `lrf.origin` in the given frame.
pub fn patch_in_frame(cloud: &PointCloud, index: &SpatialIndex, lrf: &Lrf, grid: &GridConfig) -> SdvGrid {
    let mut ids = index.radius_query(&lrf.origin, grid.support_radius());
    ids.sort_unstable();
    let local: Vec<Point> = ids.iter().map(|&i| lrf.to_local(&cloud.get(i))).collect();
    compute_sdv(&local, grid)
}

/// [`extract_patch`] for many keypoints, in input order.
pub fn extract_patches(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[usize],
    cfg: &PatchConfig,
    exec: Exec,
) -> Vec<Result<SdvGrid>> {
    par::map_slice(exec, keypoints, |&k| extract_patch(cloud, index, k, cfg))
}
