use crate::error::{Error, Result};

/// Value and gradients of the soft-margin batch-hard loss.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchHardLoss {
    pub loss: f64,
    /// Per-anchor terms `ln(1 + exp(d_pos - d_neg))`.
    pub terms: Vec<f64>,
    /// Hardest negative (positive-set index) chosen for each anchor.
    pub hardest: Vec<usize>,
    pub grad_anchors: Vec<f64>,
    pub grad_positives: Vec<f64>,
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Soft-margin batch-hard loss over row-major `n x dim` anchor and positive
/// descriptors: the mean over anchors `i` of
/// `ln(1 + exp(|a_i - p_i| - min_{j != i} |a_i - p_j|))`.
///
/// The hardest negative is the smallest-index minimizer; gradients follow
/// that choice (a subgradient at ties).
pub fn batch_hard_loss(anchors: &[f64], positives: &[f64], dim: usize) -> Result<BatchHardLoss> {
    if dim == 0 || !anchors.len().is_multiple_of(dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: anchors.len(),
        });
    }
    if anchors.len() != positives.len() {
        return Err(Error::DimMismatch {
            expected: anchors.len(),
            found: positives.len(),
        });
    }
    let n = anchors.len() / dim;
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let a = |i: usize| &anchors[i * dim..(i + 1) * dim];
    let p = |i: usize| &positives[i * dim..(i + 1) * dim];

    let mut terms = Vec::with_capacity(n);
    let mut hardest = Vec::with_capacity(n);
    let mut ga = vec![0.0; anchors.len()];
    let mut gp = vec![0.0; positives.len()];
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let d_pos = dist(a(i), p(i));
        let mut best = (usize::MAX, f64::INFINITY);
        for j in (0..n).filter(|&j| j != i) {
            let d = dist(a(i), p(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        let (j, d_neg) = best;
        let t = d_pos - d_neg;
        terms.push(softplus(t));
        hardest.push(j);

        let w = sigmoid(t) * inv_n;
        if d_pos > 0.0 {
            for k in 0..dim {
                let u = (a(i)[k] - p(i)[k]) / d_pos * w;
                ga[i * dim + k] += u;
                gp[i * dim + k] -= u;
            }
        }
        if d_neg > 0.0 {
            for k in 0..dim {
                let u = (a(i)[k] - p(j)[k]) / d_neg * w;
                ga[i * dim + k] -= u;
                gp[j * dim + k] += u;
            }
        }
    }
    let loss = terms.iter().sum::<f64>() * inv_n;
    Ok(BatchHardLoss {
        loss,
        terms,
        hardest,
        grad_anchors: ga,
        grad_positives: gp,
    })
}
