use crate::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_STABILIZER: f64 = 1e-8;

/// `base_lr / (1 + 2(j−1)/J)` for the 1-based step `j` of a `J`-step run.
pub fn lr_schedule(step: usize, base_lr: f64, horizon: usize) -> f64 {
    let j = step.max(1) as f64;
    base_lr / (1.0 + 2.0 * (j - 1.0) / horizon.max(1) as f64)
}

/// RMSprop with the decaying learning-rate schedule of [`lr_schedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    mean_square: Vec<f64>,
    decay: f64,
    stabilizer: f64,
    steps_taken: usize,
    base_lr: f64,
    horizon: usize,
}

impl RmsPropState {
    pub fn new(len: usize, base_lr: f64, horizon: usize) -> Self {
        Self::with_constants(len, base_lr, horizon, DEFAULT_DECAY, DEFAULT_STABILIZER)
    }

    pub fn with_constants(len: usize, base_lr: f64, horizon: usize, decay: f64, stabilizer: f64) -> Self {
        RmsPropState {
            mean_square: vec![0.0; len],
            decay,
            stabilizer,
            steps_taken: 0,
            base_lr,
            horizon,
        }
    }

    pub fn mean_square(&self) -> &[f64] {
        &self.mean_square
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        lr_schedule(self.steps_taken + 1, self.base_lr, self.horizon)
    }

    /// `v ← βv + (1−β)g²;  θ ← θ − lr(j)·g / (√v + stabilizer)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        Error::check_dim(self.mean_square.len(), params.len())?;
        Error::check_dim(self.mean_square.len(), grad.len())?;
        let lr = self.current_lr();
        for ((p, v), g) in params.iter_mut().zip(&mut self.mean_square).zip(grad) {
            *v = self.decay * *v + (1.0 - self.decay) * g * g;
            *p -= lr * g / (v.sqrt() + self.stabilizer);
        }
        self.steps_taken += 1;
        Ok(())
    }
}

/// Functional form of [`RmsPropState::step`].
pub fn rmsprop_step(state: &RmsPropState, params: &[f64], grad: &[f64]) -> Result<(Vec<f64>, RmsPropState)> {
    let mut next = state.clone();
    let mut out = params.to_vec();
    next.step(&mut out, grad)?;
    Ok((out, next))
}
