use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::loss::batch_hard_loss;
use super::manifest::{read_manifest, FragmentPair};
use super::pairs::{sample_training_pairs, Fragment, PairSampling, TrainingPair};
use crate::error::{Error, Result};
use crate::geometry::SpatialIndex;
use crate::io::{write_atomic, RunConfig};
use crate::net::{backward_with, forward_raw, init_params, save_params, Architecture, Mode, NetworkParams};
use crate::par::Exec;

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based.
    pub iteration: usize,
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut out = String::from("iteration,epoch,loss,lr\n");
    for r in log {
        out += &format!("{},{},{},{}\n", r.iteration, r.epoch, r.loss, r.lr);
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Receives `loss.csv`, per-epoch checkpoints and `weights.bin`.
    pub out_dir: Option<PathBuf>,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: Vec<LossRecord>,
    /// Anchor/positive pairs available for training.
    pub samples: usize,
}

/// splitmix64 of `seed` mixed with a stream tag and counter.
pub(crate) fn derive_seed(seed: u64, stream: u64, k: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples anchors for every pair. Pairs below the overlap bar are skipped
/// with a warning.
pub fn collect_training_pairs(
    pairs: &[FragmentPair],
    sampling: &PairSampling,
    seed: u64,
    exec: Exec,
) -> Result<Vec<Vec<TrainingPair>>> {
    let mut groups = Vec::with_capacity(pairs.len());
    for (k, fp) in pairs.iter().enumerate() {
        let (ia, ib) = (SpatialIndex::new(&fp.a), SpatialIndex::new(&fp.b));
        let fa = Fragment { id: 2 * k, cloud: &fp.a, index: &ia };
        let fb = Fragment { id: 2 * k + 1, cloud: &fp.b, index: &ib };
        match sample_training_pairs(fa, fb, &fp.t_gt, sampling, derive_seed(seed, 1, k as u64), exec) {
            Ok(g) => groups.push(g),
            Err(Error::InsufficientOverlap(msg)) => warn!("skipping pair {}: {msg}", k),
            Err(e) => return Err(e),
        }
    }
    Ok(groups)
}

/// Round-robin interleaving of per-group shuffles, cut into batches.
fn epoch_batches(groups: &[Vec<TrainingPair>], batch: usize, seed: u64) -> Vec<Vec<(usize, usize)>> {
    let mut orders: Vec<Vec<usize>> = groups.iter().map(|g| (0..g.len()).collect()).collect();
    for (k, o) in orders.iter_mut().enumerate() {
        o.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 3, k as u64)));
    }
    let longest = orders.iter().map(Vec::len).max().unwrap_or(0);
    let mut seq = Vec::new();
    for i in 0..longest {
        for (k, o) in orders.iter().enumerate() {
            if let Some(&j) = o.get(i) {
                seq.push((k, j));
            }
        }
    }
    if seq.len() < batch {
        return if seq.len() >= 2 { vec![seq] } else { Vec::new() };
    }
    seq.chunks_exact(batch).map(<[_]>::to_vec).collect()
}

fn dump_diagnostics(dir: &Path, iteration: usize, loss: f64, lr: f64, params: &NetworkParams, descriptors: &[f64], dim: usize) {
    let norms: Vec<String> = descriptors.chunks(dim).map(|r| format!("{}", r.iter().map(|v| v * v).sum::<f64>().sqrt())).collect();
    let text = format!(
        "iteration={iteration}\nloss={loss}\nlr={lr}\nparams_finite={}\ndescriptor_norms={}\n",
        params.is_finite(),
        norms.join(",")
    );
    if let Err(e) = write_atomic(&dir.join(format!("nonfinite_iter{iteration}.txt")), text.as_bytes()) {
        warn!("could not write diagnostics: {e}");
    }
    let _ = save_params(dir.join(format!("nonfinite_iter{iteration}.bin")), params);
}

/// Trains from already-sampled anchor/positive groups (one per fragment
/// pair).
pub fn train_on_samples(cfg: &RunConfig, groups: &[Vec<TrainingPair>], seed: u64, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples: usize = groups.iter().map(Vec::len).sum();
    if samples < 2 {
        return Err(Error::BatchTooSmall(samples));
    }
    let arch = Architecture::for_config(cfg)?;
    let mut params = init_params(&arch, seed)?;
    let mut adam = AdamState::for_params(&params, cfg.learning_rate, cfg.lr_decay, cfg.lr_decay_steps as u64);
    let dim = arch.output_dim();
    let grid_len = arch.input_edge.pow(3);
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let per_epoch = epoch_batches(groups, cfg.batch_size, derive_seed(seed, 2, 0)).len();
    let total = if cfg.max_iterations > 0 { cfg.max_iterations } else { cfg.epochs * per_epoch };
    info!("training on {samples} pairs, {per_epoch} batches per epoch, {total} iterations");

    let mut log = Vec::with_capacity(total);
    let mut iteration = 0;
    let mut epoch = 0;
    while iteration < total {
        epoch += 1;
        for batch in epoch_batches(groups, cfg.batch_size, derive_seed(seed, 2, epoch as u64 - 1)) {
            if iteration >= total {
                break;
            }
            iteration += 1;
            let n = batch.len();
            let mut input = Vec::with_capacity(2 * n * grid_len);
            for &(k, j) in &batch {
                input.extend_from_slice(groups[k][j].anchor.values());
            }
            for &(k, j) in &batch {
                input.extend_from_slice(groups[k][j].positive.values());
            }
            let out = forward_raw(&params, input, 2 * n, Mode::Train, derive_seed(seed, 4, iteration as u64), opts.exec)?;
            let (anchors, positives) = out.descriptors.split_at(n * dim);
            let lr = adam.learning_rate();
            let loss = batch_hard_loss(anchors, positives, dim)?;
            if !loss.loss.is_finite() {
                if let Some(dir) = &opts.out_dir {
                    dump_diagnostics(dir, iteration, loss.loss, lr, &params, &out.descriptors, dim);
                }
                return Err(Error::NonFiniteLoss { iteration });
            }
            let mut upstream = loss.grad_anchors;
            upstream.extend_from_slice(&loss.grad_positives);
            let cache = out.cache.as_ref().expect("train mode keeps a cache");
            let grads = backward_with(&params, cache, &upstream, opts.exec)?;
            params.update_running_stats(cache)?;
            adam_step(&mut params, &grads, &mut adam)?;
            log.push(LossRecord {
                iteration,
                epoch,
                loss: loss.loss,
                lr,
            });
            if iteration % 100 == 0 {
                info!("iteration {iteration} epoch {epoch} loss {:.5} lr {lr:e}", loss.loss);
            }
        }
        if let Some(dir) = &opts.out_dir {
            save_params(dir.join(format!("checkpoint_epoch{epoch:03}.bin")), &params)?;
            write_atomic(&dir.join("loss.csv"), loss_log_csv(&log).as_bytes())?;
        }
    }
    if let Some(dir) = &opts.out_dir {
        save_params(dir.join("weights.bin"), &params)?;
        write_atomic(&dir.join("loss.csv"), loss_log_csv(&log).as_bytes())?;
    }
    Ok(TrainOutcome { params, log, samples })
}

/// Samples anchors from every pair and trains.
pub fn train_pairs(cfg: &RunConfig, pairs: &[FragmentPair], seed: u64, opts: &TrainOptions) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::EmptyManifest);
    }
    cfg.validate()?;
    let sampling = PairSampling::from_config(cfg)?;
    let groups = collect_training_pairs(pairs, &sampling, seed, opts.exec)?;
    train_on_samples(cfg, &groups, seed, opts)
}

/// Loads the fragment pairs listed in `manifest` and trains on them.
pub fn train(cfg: &RunConfig, manifest: impl AsRef<Path>, seed: u64, opts: &TrainOptions) -> Result<TrainOutcome> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let pairs = entries.iter().map(FragmentPair::load).collect::<Result<Vec<_>>>()?;
    train_pairs(cfg, &pairs, seed, opts)
}
