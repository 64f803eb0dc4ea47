use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{self, ConvGeom};
use super::params::{LayerParams, NetworkParams, ParamGrads};
use super::{LayerSpec, Shape, BN_EPSILON, BN_MOMENTUM, L2_EPSILON};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::sdv::SdvGrid;

/// Samples per work item in the parallel backward pass. Fixed so gradient
/// sums happen in the same order whatever the thread count.
const BACKWARD_GROUP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout active, activations cached.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

#[derive(Debug, Clone)]
enum LayerCache {
    None,
    BatchNorm { inv_std: Vec<f64>, mean: Vec<f64>, var: Vec<f64> },
    Dropout { mask: Vec<f64> },
    L2Norm { norms: Vec<f64> },
}

/// Activations recorded by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    batch: usize,
    acts: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Row-major `batch x dim` descriptors.
    pub descriptors: Vec<f64>,
    pub dim: usize,
    pub cache: Option<Cache>,
}

impl ForwardOutput {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.descriptors.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

fn conv_geom(spec: &LayerSpec, input: Shape) -> ConvGeom {
    match *spec {
        LayerSpec::Conv3d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => ConvGeom {
            cin: in_channels,
            cout: out_channels,
            k: kernel,
            stride,
            pad: padding,
            n_in: input.edge,
            n_out: super::conv_out_edge(input.edge, kernel, stride, padding).expect("validated architecture"),
        },
        _ => unreachable!("conv_geom on a non-conv layer"),
    }
}

/// Runs the network on a batch of grids.
pub fn forward(params: &NetworkParams, grids: &[SdvGrid], mode: Mode, dropout_seed: u64) -> Result<ForwardOutput> {
    forward_with(params, grids, mode, dropout_seed, Exec::default())
}

pub fn forward_with(
    params: &NetworkParams,
    grids: &[SdvGrid],
    mode: Mode,
    dropout_seed: u64,
    exec: Exec,
) -> Result<ForwardOutput> {
    let edge = params.arch.input_edge;
    let mut input = Vec::with_capacity(grids.len() * edge * edge * edge);
    for g in grids {
        if g.voxels() != edge {
            return Err(Error::ShapeMismatch(format!(
                "network expects {edge}^3 grids, got {}^3",
                g.voxels()
            )));
        }
        input.extend_from_slice(g.values());
    }
    forward_raw(params, input, grids.len(), mode, dropout_seed, exec)
}

/// Forward pass over a flat `batch x c^3` input buffer.
pub fn forward_raw(
    params: &NetworkParams,
    input: Vec<f64>,
    batch: usize,
    mode: Mode,
    dropout_seed: u64,
    exec: Exec,
) -> Result<ForwardOutput> {
    let shapes = params.arch.shapes()?;
    if input.len() != batch * shapes[0].len() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, expected {} x {}",
            input.len(),
            batch,
            shapes[0].len()
        )));
    }
    let train = mode == Mode::Train;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len() + 1);
    let mut caches = Vec::with_capacity(params.layers.len());
    let mut x = input;
    for (li, (spec, lp)) in params.arch.layers.iter().zip(&params.layers).enumerate() {
        let (sin, sout) = (shapes[li], shapes[li + 1]);
        let mut cache = LayerCache::None;
        let y = match (spec, lp) {
            (LayerSpec::Conv3d { .. }, LayerParams::Conv { weight, bias }) => {
                let g = conv_geom(spec, sin);
                let mut y = vec![0.0; batch * sout.len()];
                let (in_len, out_len) = (sin.len(), sout.len());
                let xin = &x;
                par::for_each_chunk_mut(exec, &mut y, out_len.max(1), |b, out| {
                    conv::forward(&g, weight, bias, &xin[b * in_len..(b + 1) * in_len], out);
                });
                y
            }
            (LayerSpec::BatchNorm { channels }, LayerParams::BatchNorm { running_mean, running_var }) => {
                let sp = sin.spatial();
                let mut y = x.clone();
                let (mean, var) = if train {
                    batch_stats(&x, batch, *channels, sp)
                } else {
                    (running_mean.clone(), running_var.clone())
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                for b in 0..batch {
                    for c in 0..*channels {
                        let off = (b * channels + c) * sp;
                        for v in &mut y[off..off + sp] {
                            *v = (*v - mean[c]) * inv_std[c];
                        }
                    }
                }
                if train {
                    cache = LayerCache::BatchNorm { inv_std, mean, var };
                }
                y
            }
            (LayerSpec::Relu, _) => x.iter().map(|v| v.max(0.0)).collect(),
            (LayerSpec::Dropout { rate }, _) => {
                if train && *rate > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed ^ (li as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.random::<f64>() >= *rate { keep } else { 0.0 })
                        .collect();
                    let y = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
                    cache = LayerCache::Dropout { mask };
                    y
                } else {
                    x.clone()
                }
            }
            (LayerSpec::L2Norm, _) => {
                let d = sin.len();
                let mut y = x.clone();
                let mut norms = Vec::with_capacity(batch);
                for row in y.chunks_mut(d.max(1)) {
                    let s = (row.iter().map(|v| v * v).sum::<f64>() + L2_EPSILON).sqrt();
                    row.iter_mut().for_each(|v| *v /= s);
                    norms.push(s);
                }
                cache = LayerCache::L2Norm { norms };
                y
            }
            _ => return Err(Error::ShapeMismatch(format!("layer {li}: parameters do not match spec"))),
        };
        if train {
            acts.push(std::mem::replace(&mut x, y));
        } else {
            x = y;
        }
        caches.push(cache);
    }
    let dim = shapes.last().map_or(0, |s| s.len());
    let cache = train.then(|| {
        acts.push(x.clone());
        Cache {
            version: params.version,
            batch,
            acts,
            layers: caches,
        }
    });
    Ok(ForwardOutput {
        descriptors: x,
        dim,
        cache,
    })
}

fn batch_stats(x: &[f64], batch: usize, channels: usize, sp: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (batch * sp) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * sp;
            mean[c] += x[off..off + sp].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * sp;
            var[c] += x[off..off + sp].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    (mean, var)
}

/// Gradients of a scalar loss w.r.t. every conv weight and bias, given the
/// loss gradient w.r.t. the network output (`batch x dim`).
pub fn backward(params: &NetworkParams, cache: &Cache, upstream: &[f64]) -> Result<ParamGrads> {
    backward_with(params, cache, upstream, Exec::default())
}

pub fn backward_with(params: &NetworkParams, cache: &Cache, upstream: &[f64], exec: Exec) -> Result<ParamGrads> {
    if cache.version != params.version {
        return Err(Error::StaleCache(format!(
            "cache from parameter version {}, parameters are at {}",
            cache.version, params.version
        )));
    }
    if cache.acts.len() != params.layers.len() + 1 {
        return Err(Error::StaleCache("cache does not belong to this network".into()));
    }
    let shapes = params.arch.shapes()?;
    let batch = cache.batch;
    if upstream.len() != batch * shapes.last().map_or(0, |s| s.len()) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient has {} values for a batch of {batch}",
            upstream.len()
        )));
    }
    let mut grads = ParamGrads::zeros_like(params);
    let mut g = upstream.to_vec();
    for li in (0..params.layers.len()).rev() {
        let spec = &params.arch.layers[li];
        let (sin, sout) = (shapes[li], shapes[li + 1]);
        let x = &cache.acts[li];
        let y = &cache.acts[li + 1];
        match (spec, &params.layers[li], &cache.layers[li]) {
            (LayerSpec::L2Norm, _, LayerCache::L2Norm { norms }) => {
                let d = sin.len();
                for (b, s) in norms.iter().enumerate() {
                    let xr = &x[b * d..(b + 1) * d];
                    let gr = &mut g[b * d..(b + 1) * d];
                    let dot: f64 = xr.iter().zip(gr.iter()).map(|(a, c)| a * c).sum();
                    let s3 = s * s * s;
                    for (gv, xv) in gr.iter_mut().zip(xr) {
                        *gv = *gv / s - xv * dot / s3;
                    }
                }
            }
            (LayerSpec::BatchNorm { channels }, _, LayerCache::BatchNorm { inv_std, .. }) => {
                let sp = sin.spatial();
                let m = (batch * sp) as f64;
                for c in 0..*channels {
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for b in 0..batch {
                        let off = (b * channels + c) * sp;
                        for i in off..off + sp {
                            sum_g += g[i];
                            sum_gx += g[i] * y[i];
                        }
                    }
                    for b in 0..batch {
                        let off = (b * channels + c) * sp;
                        for i in off..off + sp {
                            g[i] = inv_std[c] / m * (m * g[i] - sum_g - y[i] * sum_gx);
                        }
                    }
                }
            }
            (LayerSpec::Relu, _, _) => {
                for (gv, yv) in g.iter_mut().zip(y) {
                    if *yv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            (LayerSpec::Dropout { .. }, _, LayerCache::Dropout { mask }) => {
                for (gv, m) in g.iter_mut().zip(mask) {
                    *gv *= m;
                }
            }
            (LayerSpec::Dropout { .. }, _, LayerCache::None) => {}
            (LayerSpec::Conv3d { .. }, LayerParams::Conv { weight, bias }, _) => {
                let geom = conv_geom(spec, sin);
                let (in_len, out_len) = (sin.len(), sout.len());
                let need_input_grad = li > 0;
                let mut din = vec![0.0; if need_input_grad { batch * in_len } else { 0 }];
                let gref = &g;
                let work = |group: usize, din_chunk: Option<&mut [f64]>| {
                    let mut dw = vec![0.0; weight.len()];
                    let mut db = vec![0.0; bias.len()];
                    let start = group * BACKWARD_GROUP;
                    let end = (start + BACKWARD_GROUP).min(batch);
                    let mut din_chunk = din_chunk;
                    for b in start..end {
                        let local = b - start;
                        let din_b = din_chunk
                            .as_deref_mut()
                            .map(|d| &mut d[local * in_len..(local + 1) * in_len]);
                        conv::backward(
                            &geom,
                            weight,
                            &x[b * in_len..(b + 1) * in_len],
                            &gref[b * out_len..(b + 1) * out_len],
                            &mut dw,
                            &mut db,
                            din_b,
                        );
                    }
                    (dw, db)
                };
                let partials: Vec<(Vec<f64>, Vec<f64>)> = if need_input_grad {
                    par::map_chunks_mut(exec, &mut din, (BACKWARD_GROUP * in_len).max(1), |gi, chunk| work(gi, Some(chunk)))
                } else {
                    par::map_range(exec, batch.div_ceil(BACKWARD_GROUP), |gi| work(gi, None))
                };
                for (dw, db) in partials {
                    for (a, b) in grads.weights[li].iter_mut().zip(&dw) {
                        *a += b;
                    }
                    for (a, b) in grads.biases[li].iter_mut().zip(&db) {
                        *a += b;
                    }
                }
                g = din;
            }
            _ => return Err(Error::StaleCache(format!("layer {li}: cache was not recorded in train mode"))),
        }
    }
    Ok(grads)
}

impl NetworkParams {
    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates (momentum 0.99, unbiased variance).
    pub fn update_running_stats(&mut self, cache: &Cache) -> Result<()> {
        if cache.version != self.version {
            return Err(Error::StaleCache("running-stat update from an old cache".into()));
        }
        let shapes = self.arch.shapes()?;
        for (li, (lp, lc)) in self.layers.iter_mut().zip(&cache.layers).enumerate() {
            if let (LayerParams::BatchNorm { running_mean, running_var }, LayerCache::BatchNorm { mean, var, .. }) = (lp, lc) {
                let m = (cache.batch * shapes[li].spatial()) as f64;
                let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                for c in 0..running_mean.len() {
                    running_mean[c] = BN_MOMENTUM * running_mean[c] + (1.0 - BN_MOMENTUM) * mean[c];
                    running_var[c] = BN_MOMENTUM * running_var[c] + (1.0 - BN_MOMENTUM) * var[c] * unbias;
                }
            }
        }
        self.touch();
        Ok(())
    }
}

/// Infer-mode descriptors as 32-bit rows.
pub fn describe(params: &NetworkParams, grids: &[SdvGrid], exec: Exec) -> Result<Vec<Vec<f32>>> {
    let out = forward_with(params, grids, Mode::Infer, 0, exec)?;
    Ok((0..out.len())
        .map(|i| out.row(i).iter().map(|&v| v as f32).collect())
        .collect())
}
