use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Architecture, LayerSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const INIT_GAIN: f64 = 0.6;
pub const INIT_BIAS: f64 = 0.01;

const WEIGHT_MAGIC: [u8; 4] = *b"SDVW";
const WEIGHT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv { weight: Vec<f64>, bias: Vec<f64> },
    BatchNorm { running_mean: Vec<f64>, running_var: Vec<f64> },
    None,
}

/// Weights and batch-norm running statistics for an [`Architecture`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub layers: Vec<LayerParams>,
    /// Bumped on every mutation; forward caches remember it.
    pub(crate) version: u64,
}

/// Gradients of the trainable tensors (conv weights and biases), one entry
/// per layer; non-conv layers hold empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let mut weights = Vec::with_capacity(params.layers.len());
        let mut biases = Vec::with_capacity(params.layers.len());
        for l in &params.layers {
            match l {
                LayerParams::Conv { weight, bias } => {
                    weights.push(vec![0.0; weight.len()]);
                    biases.push(vec![0.0; bias.len()]);
                }
                _ => {
                    weights.push(Vec::new());
                    biases.push(Vec::new());
                }
            }
        }
        Self { weights, biases }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Trainable gradient tensors in a fixed order (weights then bias per conv).
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .filter(|(w, _)| !w.is_empty())
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl NetworkParams {
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Trainable tensors in the same order as [`ParamGrads::tensors`].
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                LayerParams::Conv { weight, bias } => Some([weight.as_mut_slice(), bias.as_mut_slice()]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerParams::Conv { weight, bias } => Some([weight.as_slice(), bias.as_slice()]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }

    /// Rounds every value to the nearest `f32`, as stored on disk.
    pub fn quantize_f32(&mut self) {
        self.version += 1;
        for l in &mut self.layers {
            let tensors: Vec<&mut Vec<f64>> = match l {
                LayerParams::Conv { weight, bias } => vec![weight, bias],
                LayerParams::BatchNorm {
                    running_mean,
                    running_var,
                } => vec![running_mean, running_var],
                LayerParams::None => vec![],
            };
            for t in tensors {
                t.iter_mut().for_each(|v| *v = *v as f32 as f64);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| match l {
            LayerParams::Conv { weight, bias } => weight.iter().chain(bias).all(|v| v.is_finite()),
            LayerParams::BatchNorm {
                running_mean,
                running_var,
            } => running_mean.iter().chain(running_var).all(|v| v.is_finite()),
            LayerParams::None => true,
        })
    }
}

/// Orthogonal weights with gain 0.6, biases 0.01, running stats (0, 1).
pub fn init_params(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    arch.shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layers
        .iter()
        .map(|layer| match *layer {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel * kernel * kernel;
                LayerParams::Conv {
                    weight: orthogonal(out_channels, fan_in, INIT_GAIN, &mut rng),
                    bias: vec![INIT_BIAS; out_channels],
                }
            }
            LayerSpec::BatchNorm { channels } => LayerParams::BatchNorm {
                running_mean: vec![0.0; channels],
                running_var: vec![1.0; channels],
            },
            _ => LayerParams::None,
        })
        .collect();
    Ok(NetworkParams {
        arch: arch.clone(),
        layers,
        version: 0,
    })
}

/// Row-major `rows x cols` matrix with orthonormal rows (or columns when
/// `rows > cols`), scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign convention that makes the distribution uniform (Haar)
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // q: big x small with orthonormal columns
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows <= cols { q[(j, i)] } else { q[(i, j)] };
            out[i * cols + j] = gain * v;
        }
    }
    out
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn push_f32s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

/// Serializes to the `SDVW` weight format.
pub fn write_params(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHT_MAGIC);
    push_u32(&mut out, WEIGHT_VERSION as usize);
    push_u32(&mut out, params.arch.input_edge);
    push_u32(&mut out, params.arch.layers.len());
    for (spec, layer) in params.arch.layers.iter().zip(&params.layers) {
        match (*spec, layer) {
            (
                LayerSpec::Conv3d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                LayerParams::Conv { weight, bias },
            ) => {
                push_u32(&mut out, 0);
                for v in [in_channels, out_channels, kernel, stride, padding] {
                    push_u32(&mut out, v);
                }
                push_f32s(&mut out, weight);
                push_f32s(&mut out, bias);
            }
            (
                LayerSpec::BatchNorm { channels },
                LayerParams::BatchNorm {
                    running_mean,
                    running_var,
                },
            ) => {
                push_u32(&mut out, 1);
                push_u32(&mut out, channels);
                push_f32s(&mut out, running_mean);
                push_f32s(&mut out, running_var);
            }
            (LayerSpec::Relu, _) => push_u32(&mut out, 2),
            (LayerSpec::Dropout { rate }, _) => {
                push_u32(&mut out, 3);
                out.extend_from_slice(&rate.to_le_bytes());
            }
            (LayerSpec::L2Norm, _) => push_u32(&mut out, 4),
            _ => unreachable!("params constructed from their architecture"),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.off < n {
            return Err(Error::TruncatedPayload {
                offset: self.off,
                reason: format!("weight file needs {n} more bytes"),
            });
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::ShapeMismatch("tensor size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

/// Parses an `SDVW` weight file. With `expected`, the stored architecture
/// must match it exactly.
pub fn read_params(bytes: &[u8], expected: Option<&Architecture>) -> Result<NetworkParams> {
    let mut r = Reader { bytes, off: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != WEIGHT_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: WEIGHT_MAGIC,
        });
    }
    let version = r.u32()? as u32;
    if version != WEIGHT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: WEIGHT_VERSION,
        });
    }
    let input_edge = r.u32()?;
    let count = r.u32()?;
    if count > bytes.len() {
        return Err(Error::ShapeMismatch(format!("{count} layers cannot fit in {} bytes", bytes.len())));
    }
    let mut specs = Vec::with_capacity(count);
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        match r.u32()? {
            0 => {
                let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?];
                let [cin, cout, k, stride, pad] = dims;
                let n = cout
                    .checked_mul(cin)
                    .and_then(|v| v.checked_mul(k.checked_pow(3)?))
                    .ok_or_else(|| Error::ShapeMismatch("conv tensor size overflow".into()))?;
                let weight = r.f32s(n)?;
                let bias = r.f32s(cout)?;
                specs.push(LayerSpec::conv(cin, cout, k, stride, pad));
                layers.push(LayerParams::Conv { weight, bias });
            }
            1 => {
                let c = r.u32()?;
                let running_mean = r.f32s(c)?;
                let running_var = r.f32s(c)?;
                specs.push(LayerSpec::BatchNorm { channels: c });
                layers.push(LayerParams::BatchNorm {
                    running_mean,
                    running_var,
                });
            }
            2 => {
                specs.push(LayerSpec::Relu);
                layers.push(LayerParams::None);
            }
            3 => {
                let rate = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                specs.push(LayerSpec::Dropout { rate });
                layers.push(LayerParams::None);
            }
            4 => {
                specs.push(LayerSpec::L2Norm);
                layers.push(LayerParams::None);
            }
            other => return Err(Error::ShapeMismatch(format!("unknown layer kind {other}"))),
        }
    }
    if r.off != bytes.len() {
        return Err(Error::ShapeMismatch(format!("{} trailing bytes after last layer", bytes.len() - r.off)));
    }
    let arch = Architecture::new(input_edge, specs).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    if let Some(exp) = expected {
        if *exp != arch {
            return Err(Error::ShapeMismatch("stored architecture differs from the requested one".into()));
        }
    }
    Ok(NetworkParams {
        arch,
        layers,
        version: 0,
    })
}

pub fn save_params(path: impl AsRef<Path>, params: &NetworkParams) -> Result<()> {
    write_atomic(path.as_ref(), &write_params(params))
}

pub fn load_params(path: impl AsRef<Path>, expected: Option<&Architecture>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_params(&bytes, expected)
}
