use serde::{Deserialize, Serialize};

use super::params::{Gradients, NetworkParams};
use crate::error::{Error, Result};

/// Step decay: the rate halves after every completed epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub steps_per_epoch: u64,
    pub decay: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, steps_per_epoch: u64) -> Self {
        Self {
            base_lr,
            steps_per_epoch: steps_per_epoch.max(1),
            decay: 0.5,
        }
    }

    pub fn rate(&self, step: u64) -> f64 {
        let epoch = step / self.steps_per_epoch.max(1);
        self.base_lr * self.decay.powi(epoch.min(i32::MAX as u64) as i32)
    }
}

/// `base_lr * 0.5^(completed epochs)`.
pub fn lr_schedule(step: u64, base_lr: f64, steps_per_epoch: u64) -> f64 {
    LrSchedule::new(base_lr, steps_per_epoch).rate(step)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, schedule: LrSchedule) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .trainable()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            schedule,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at the scheduled rate for the current step.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    let grad_tensors = grads.trainable();
    let lr = state.schedule.rate(state.step);
    let mut tensors = params.trainable_mut();
    if tensors.len() != grad_tensors.len() || tensors.len() != state.first_moment.len() {
        return Err(Error::dims(
            "parameter tensors",
            state.first_moment.len(),
            tensors.len(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (k, (w, g)) in tensors.iter_mut().zip(&grad_tensors).enumerate() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        if w.len() != g.len() || m.len() != w.len() {
            return Err(Error::dims("tensor length", w.len(), g.len()));
        }
        for i in 0..w.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 1e-3, 10), 1e-3);
        assert_eq!(lr_schedule(9, 1e-3, 10), 1e-3);
        assert_eq!(lr_schedule(20, 1e-3, 10), 1e-3 / 4.0);
        let mut prev = f64::INFINITY;
        for step in 0..500 {
            let r = lr_schedule(step, 0.01, 7);
            assert!(r <= prev);
            prev = r;
        }
    }
}
