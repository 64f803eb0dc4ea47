use crate::error::{Error, Result};
use crate::net::{NetworkParams, ParamGrads};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// ADAM moments plus a step-wise exponential learning-rate schedule
/// `lr0 * decay^floor(step / decay_steps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Completed steps.
    pub step: u64,
    pub base_lr: f64,
    pub decay: f64,
    pub decay_steps: u64,
}

impl AdamState {
    pub fn new(shapes: &[usize], base_lr: f64, decay: f64, decay_steps: u64) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            base_lr,
            decay,
            decay_steps: decay_steps.max(1),
        }
    }

    pub fn for_params(params: &NetworkParams, base_lr: f64, decay: f64, decay_steps: u64) -> Self {
        let shapes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
        Self::new(&shapes, base_lr, decay, decay_steps)
    }

    /// Learning rate applied by the next step.
    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.decay.powi((self.step / self.decay_steps) as i32)
    }

    /// One update of every tensor in place.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter / {} gradient tensors for an optimizer over {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::ShapeMismatch(format!("tensor {i} has the wrong length")));
            }
        }
        let lr = self.learning_rate();
        let t = (self.step + 1) as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Applies one ADAM step to the network's conv weights and biases.
pub fn adam_step(params: &mut NetworkParams, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.trainable_mut();
    state.update(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut s = AdamState::new(&[3], 1e-3, 0.95, 5000);
        let mut w = vec![1.0, -2.0, 0.5];
        let before = w.clone();
        s.update(&mut [&mut w], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(w, before);
        // moments decay towards zero under zero gradients
        s.m[0] = vec![1.0; 3];
        s.update(&mut [&mut w], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert!(s.m[0].iter().all(|&m| (m - 0.9).abs() < 1e-15));
    }

    #[test]
    fn hand_worked_three_steps() {
        let lr = 1e-3;
        let mut s = AdamState::new(&[1], lr, 0.95, 5000);
        let mut w = vec![0.0];
        let (mut m, mut v, mut expect) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            m = 0.9 * m + 0.1;
            v = 0.999 * v + 0.001;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            expect -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            s.update(&mut [&mut w], &[&[1.0]]).unwrap();
            assert!((w[0] - expect).abs() < 1e-15);
        }
        // with a constant gradient every bias-corrected step is ~ -lr
        assert!((w[0] + 3.0 * lr).abs() < 1e-9);
    }

    #[test]
    fn schedule_boundary() {
        let mut s = AdamState::new(&[1], 1e-3, 0.95, 5000);
        s.step = 4999;
        assert_eq!(s.learning_rate(), 1e-3);
        s.step = 5000;
        assert!((s.learning_rate() - 0.95e-3).abs() < 1e-18);
        s.step = 10_000;
        assert!((s.learning_rate() - 1e-3 * 0.95 * 0.95).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(&[2], 1e-3, 0.95, 5000);
        let mut w = vec![0.0; 3];
        assert!(matches!(s.update(&mut [&mut w], &[&[0.0; 3]]), Err(Error::ShapeMismatch(_))));
    }
}
