//! AdamW with bias correction, global-norm gradient clipping, and the linear
//! warmup schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 5e-6,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Number of completed updates.
    pub fn step(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One decoupled AdamW update with learning rate `lr` (schedule already
/// applied). `grads` are gradients of the loss being minimized.
///
/// A non-finite gradient aborts the step before anything is modified.
pub fn adamw_update(
    state: &mut OptimizerState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::config(
            "params",
            format!(
                "shape mismatch: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numerical(
            "adamw_update",
            format!("non-finite gradient at index {i}"),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for ((theta, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *theta = *theta - lr * m_hat / (v_hat.sqrt() + cfg.eps) - lr * cfg.weight_decay * *theta;
    }
    Ok(())
}

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Linear warmup from `start_factor` to 1 over `warmup_steps`, then constant.
pub fn warmup_factor(step: u64, warmup_steps: u64, start_factor: f64) -> f64 {
    if warmup_steps == 0 {
        return 1.0;
    }
    let progress = step.min(warmup_steps) as f64 / warmup_steps as f64;
    start_factor + (1.0 - start_factor) * progress
}
