//! Fully-convolutional 3D descriptor network.
//!
//! Stride-2 convolutions downsample (no pooling); every conv but the last is
//! followed by batch normalization with fixed affine parameters (scale 1,
//! shift 0) and a ReLU; dropout precedes the last conv, whose output is
//! batch-normalized and l2-normalized into a unit descriptor.

mod conv;
mod model;
mod params;

pub use model::{backward, backward_with, describe, forward, forward_raw, forward_with, Cache, ForwardOutput, Mode};
pub use params::{init_params, load_params, read_params, save_params, write_params, LayerParams, NetworkParams, ParamGrads};

use crate::error::{Error, Result};
use crate::io::{ArchKind, RunConfig};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
pub const L2_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv3d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    L2Norm,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv3d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }
}

/// Shape of one sample's activation: channels x edge^3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub edge: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.channels * self.edge * self.edge * self.edge
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial(&self) -> usize {
        self.edge * self.edge * self.edge
    }
}

/// Conv output edge for a cubic input.
pub fn conv_out_edge(edge: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = edge + 2 * padding;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_edge: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(input_edge: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let arch = Self { input_edge, layers };
        arch.shapes()?;
        Ok(arch)
    }

    /// Six conv blocks (32, 32, 64, 64, 128, 128 filters; the 3rd and 5th
    /// with stride 2), dropout, a conv spanning the remaining extent, BN, l2.
    pub fn standard(input_edge: usize, dim: usize, dropout: f64) -> Result<Self> {
        Self::from_blocks(input_edge, dim, dropout, &[(32, 1), (32, 1), (64, 2), (64, 1), (128, 2), (128, 1)])
    }

    /// Three narrow blocks (8, 16 with stride 2; 32 with stride 1).
    pub fn compact(input_edge: usize, dim: usize, dropout: f64) -> Result<Self> {
        Self::from_blocks(input_edge, dim, dropout, &[(8, 2), (16, 2), (32, 1)])
    }

    pub fn for_config(cfg: &RunConfig) -> Result<Self> {
        match cfg.architecture {
            ArchKind::Standard => Self::standard(cfg.voxels_per_axis, cfg.descriptor_dim, cfg.dropout),
            ArchKind::Compact => Self::compact(cfg.voxels_per_axis, cfg.descriptor_dim, cfg.dropout),
        }
    }

    /// `blocks` are `(filters, stride)` pairs of 3x3x3 convs with padding 1.
    pub fn from_blocks(input_edge: usize, dim: usize, dropout: f64, blocks: &[(usize, usize)]) -> Result<Self> {
        let mut layers = Vec::new();
        let mut channels = 1;
        let mut edge = input_edge;
        for &(filters, stride) in blocks {
            layers.push(LayerSpec::conv(channels, filters, 3, stride, 1));
            layers.push(LayerSpec::BatchNorm { channels: filters });
            layers.push(LayerSpec::Relu);
            channels = filters;
            edge = conv_out_edge(edge, 3, stride, 1)
                .ok_or_else(|| Error::BadArchitecture("input too small for conv stack".into()))?;
        }
        if dropout > 0.0 {
            layers.push(LayerSpec::Dropout { rate: dropout });
        }
        layers.push(LayerSpec::conv(channels, dim, edge, 1, 0));
        layers.push(LayerSpec::BatchNorm { channels: dim });
        layers.push(LayerSpec::L2Norm);
        Self::new(input_edge, layers)
    }

    /// Per-layer input shapes plus the final output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let bad = |i: usize, why: String| Err(Error::BadArchitecture(format!("layer {i}: {why}")));
        if self.input_edge == 0 {
            return bad(0, "empty input".into());
        }
        let mut shape = Shape {
            channels: 1,
            edge: self.input_edge,
        };
        let mut out = vec![shape];
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv3d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if in_channels != shape.channels {
                        return bad(i, format!("expects {in_channels} channels, gets {}", shape.channels));
                    }
                    if kernel < 1 || !(1..=2).contains(&stride) || out_channels == 0 {
                        return bad(i, "kernel >= 1, stride in {1, 2}, out_channels >= 1".into());
                    }
                    let edge = match conv_out_edge(shape.edge, kernel, stride, padding) {
                        Some(e) => e,
                        None => return bad(i, "kernel larger than padded input".into()),
                    };
                    shape = Shape {
                        channels: out_channels,
                        edge,
                    };
                }
                LayerSpec::BatchNorm { channels } => {
                    if channels != shape.channels {
                        return bad(i, format!("batchnorm over {channels} channels, gets {}", shape.channels));
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return bad(i, "dropout rate must lie in [0, 1)".into());
                    }
                }
                LayerSpec::Relu => {}
                LayerSpec::L2Norm => {
                    if shape.edge != 1 {
                        return bad(i, "l2norm needs 1x1x1 spatial input".into());
                    }
                }
            }
            out.push(shape);
        }
        if shape.edge != 1 {
            return bad(self.layers.len(), format!("output spatial extent {} (need 1)", shape.edge));
        }
        Ok(out)
    }

    pub fn output_dim(&self) -> usize {
        self.shapes().map(|s| s.last().map_or(0, |x| x.channels)).unwrap_or(0)
    }
}
