use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Adam hyperparameters (canonical defaults).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators and the learning rate in force.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub step_count: u64,
    pub lr_current: f64,
}

impl OptimizerState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            m1: vec![0.0; dim],
            m2: vec![0.0; dim],
            step_count: 0,
            lr_current: lr,
        }
    }
}

/// `lr0 * decay^epoch`.
pub fn lr_schedule(lr0: f64, epoch: usize, decay: f64) -> f64 {
    lr0 * libm::pow(decay, epoch as f64)
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(state: &mut OptimizerState, theta: &mut [f64], gradient: &[f64], hyper: &AdamHyper) {
    debug_assert_eq!(theta.len(), gradient.len());
    state.step_count += 1;
    let t = state.step_count as f64;
    let c1 = 1.0 - libm::pow(hyper.beta1, t);
    let c2 = 1.0 - libm::pow(hyper.beta2, t);
    for i in 0..theta.len() {
        let g = gradient[i];
        state.m1[i] = hyper.beta1 * state.m1[i] + (1.0 - hyper.beta1) * g;
        state.m2[i] = hyper.beta2 * state.m2[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m1[i] / c1;
        let v_hat = state.m2[i] / c2;
        theta[i] -= state.lr_current * m_hat / (libm::sqrt(v_hat) + hyper.epsilon);
    }
}
