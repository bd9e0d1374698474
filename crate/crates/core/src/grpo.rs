//! Group relative policy optimization.
//!
//! One step samples `G` rollouts per prompt, scores them with the exact
//! verifier, perturbs the scores with the noisy verifier, normalizes rewards
//! within each group, and ascends
//!
//! ```text
//! J = mean_i [ min(ρ_i A_i, clip(ρ_i, 1-ε, 1+ε) A_i) - β · mean_t k3(i, t) ]
//! ```
//!
//! where `ρ_i` is the sequence importance ratio against the sampling policy
//! and `k3 = ρ_ref - 1 - log ρ_ref` is taken per token against the frozen
//! reference. The ascent direction is clipped to a global norm and applied
//! with AdamW under the warmup schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Prompt, Task};
use crate::error::{Error, Result};
use crate::noise::{perturb, NoiseSpec, NoisyReward};
use crate::optim::{adamw_update, clip_grad_norm, warmup_factor, AdamWConfig, OptimizerState};
use crate::policy::{Gradient, PolicyParams, ReferenceParams, Rollout};
use crate::rng::{substream, Purpose};

/// Groups whose population standard deviation falls below this get zero
/// advantages.
pub const ZERO_VARIANCE_STD: f64 = 1e-8;

/// GRPO and optimizer hyperparameters. Defaults are the full-scale LLM values;
/// see [`GrpoConfig::desk`] for the tabular-policy preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coeff: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    pub warmup_steps: u64,
    pub warmup_start_factor: f64,
    pub batch_prompts: usize,
    pub temperature: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 16,
            clip_eps: 0.2,
            kl_coeff: 0.01,
            learning_rate: 5e-6,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 1.0,
            warmup_steps: 50,
            warmup_start_factor: 0.1,
            batch_prompts: 32,
            temperature: 1.0,
        }
    }
}

/// Learning rate used by the desk-scale presets. Tabular and linear-softmax
/// policies need a far larger step than a pretrained LM.
pub const DESK_LEARNING_RATE: f64 = 2e-2;

impl GrpoConfig {
    /// Full-scale LLM hyperparameters.
    pub fn paper() -> Self {
        Self::default()
    }

    /// Full-scale hyperparameters with the desk-scale learning rate.
    pub fn desk() -> Self {
        GrpoConfig {
            learning_rate: DESK_LEARNING_RATE,
            ..Self::default()
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grpo.clip_eps", self.clip_eps),
            ("grpo.learning_rate", self.learning_rate),
            ("grpo.adam_eps", self.adam_eps),
            ("grpo.grad_clip_norm", self.grad_clip_norm),
            ("grpo.warmup_start_factor", self.warmup_start_factor),
            ("grpo.temperature", self.temperature),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [
            ("grpo.kl_coeff", self.kl_coeff),
            ("grpo.weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        for (field, v) in [("grpo.beta1", self.beta1), ("grpo.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(field, format!("must lie in [0, 1), got {v}")));
            }
        }
        if self.clip_eps >= 1.0 {
            return Err(Error::config("grpo.clip_eps", "must be below 1"));
        }
        if self.warmup_start_factor > 1.0 {
            return Err(Error::config(
                "grpo.warmup_start_factor",
                "must not exceed 1",
            ));
        }
        if self.group_size < 2 {
            return Err(Error::config("grpo.group_size", "must be at least 2"));
        }
        if self.batch_prompts < 1 {
            return Err(Error::config("grpo.batch_prompts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-step training diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lr_factor: f64,
    pub mean_noisy_reward: f64,
    pub mean_true_reward: f64,
    pub kl_mean: f64,
    /// Negated objective, `-J`.
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// `(r_i - mean) / std` with the population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ZERO_VARIANCE_STD {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// k3 estimator `ρ - 1 - log ρ` with `ρ = exp(logp_ref - logp_policy)`.
pub fn k3_divergence(logp_policy: f64, logp_ref: f64) -> f64 {
    let log_ratio = logp_ref - logp_policy;
    // exp_m1 keeps small log-ratios accurate.
    log_ratio.exp_m1() - log_ratio
}

/// PPO clipped objective for one sample, to be maximized.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the current
/// log-probability (the ratio is `exp(logp - logp_old)`). Zero when the
/// clipped branch is the active minimum.
pub fn surrogate_logprob_weight(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        0.0
    }
}

/// Warmup multiplier for the update at `step` (0-based).
pub fn lr_factor(step: u64, cfg: &GrpoConfig) -> f64 {
    warmup_factor(step, cfg.warmup_steps, cfg.warmup_start_factor)
}

/// Everything about a step that is not the mutable training state.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub task: &'a Task,
    pub reference: &'a ReferenceParams,
    pub noise: NoiseSpec,
    pub cfg: &'a GrpoConfig,
    pub run_seed: u64,
    pub step: u64,
}

/// A rollout with its noisy reward.
#[derive(Debug, Clone)]
pub struct ScoredRollout {
    pub rollout: Rollout,
    pub reward: NoisyReward,
}

/// Samples and scores `group_size` rollouts for each prompt of `batch`.
///
/// Rollout `(j, i)` draws from substreams keyed by
/// `(run_seed, step, j, i)`, so the result does not depend on thread count.
pub fn sample_groups(
    params: &PolicyParams,
    batch: &[Prompt],
    inputs: &StepInputs<'_>,
) -> Result<Vec<Vec<ScoredRollout>>> {
    let g = inputs.cfg.group_size;
    let flat: Vec<ScoredRollout> = (0..batch.len() * g)
        .into_par_iter()
        .map(|k| {
            let (j, i) = (k / g, k % g);
            let key = [inputs.run_seed, inputs.step, j as u64, i as u64];
            let prompt = &batch[j];
            let rollout = params.sample_response(
                inputs.task,
                prompt,
                inputs.cfg.temperature,
                &mut substream(Purpose::Sample, &key),
            )?;
            let label = inputs.task.verify_exact(prompt, &rollout.response);
            let reward = perturb(label, inputs.noise, &mut substream(Purpose::Flip, &key));
            Ok(ScoredRollout { rollout, reward })
        })
        .collect::<Result<_>>()?;
    let mut groups = Vec::with_capacity(batch.len());
    let mut it = flat.into_iter();
    for _ in 0..batch.len() {
        groups.push(it.by_ref().take(g).collect());
    }
    Ok(groups)
}

/// Gradient of the objective `J` (ascent direction) over scored groups,
/// averaged over every rollout in the batch. Returned metrics carry
/// `grad_norm` of this unclipped gradient; `step` and `lr_factor` are left 0.
pub fn objective_gradient(
    params: &PolicyParams,
    batch: &[Prompt],
    groups: &[Vec<ScoredRollout>],
    inputs: &StepInputs<'_>,
) -> (Gradient, StepMetrics) {
    let cfg = inputs.cfg;
    let reference = inputs.reference.params();
    let total: usize = groups.iter().map(Vec::len).sum();
    let scale = 1.0 / total as f64;
    let mut grad = Gradient::zeros_like(params);
    let (mut noisy_sum, mut true_sum, mut kl_sum, mut objective_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut token_weights = Vec::new();

    for (prompt, group) in batch.iter().zip(groups) {
        let rewards: Vec<f64> = group.iter().map(|s| s.reward.as_f64()).collect();
        let advantages = group_advantages(&rewards);
        for (scored, &adv) in group.iter().zip(&advantages) {
            let response = &scored.rollout.response;
            let current = params.token_logprobs(inputs.task, prompt, response);
            let refs = reference.token_logprobs(inputs.task, prompt, response);
            let len = current.len() as f64;
            let ratio = (current.iter().sum::<f64>() - scored.rollout.total_logprob).exp();
            let surrogate = clipped_surrogate(ratio, adv, cfg.clip_eps);
            let surrogate_weight = surrogate_logprob_weight(ratio, adv, cfg.clip_eps);

            token_weights.clear();
            let mut kl = 0.0;
            for (&lp, &lr) in current.iter().zip(&refs) {
                kl += k3_divergence(lp, lr);
                // d k3 / d logp = 1 - exp(lr - lp)
                let dk3 = -(lr - lp).exp_m1();
                token_weights.push(scale * (surrogate_weight - cfg.kl_coeff * dk3 / len));
            }
            kl /= len;
            params.accumulate_token_grads(
                inputs.task,
                prompt,
                response,
                &token_weights,
                &mut grad.values,
            );

            noisy_sum += scored.reward.as_f64();
            true_sum += scored.reward.true_label().value() as f64;
            kl_sum += kl;
            objective_sum += surrogate - cfg.kl_coeff * kl;
        }
    }
    let metrics = StepMetrics {
        step: 0,
        lr_factor: 0.0,
        mean_noisy_reward: noisy_sum * scale,
        mean_true_reward: true_sum * scale,
        kl_mean: kl_sum * scale,
        loss: -objective_sum * scale,
        grad_norm: grad.norm(),
    };
    (grad, metrics)
}

/// One full GRPO update on `batch`.
pub fn grpo_step(
    params: &mut PolicyParams,
    opt: &mut OptimizerState,
    batch: &[Prompt],
    inputs: &StepInputs<'_>,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(Error::config("batch", "empty prompt batch"));
    }
    let groups = sample_groups(params, batch, inputs)?;
    let (mut grad, mut metrics) = objective_gradient(params, batch, &groups, inputs);
    if !metrics.grad_norm.is_finite() {
        return Err(Error::numerical(
            format!("step {}", inputs.step),
            "non-finite policy gradient",
        ));
    }
    clip_grad_norm(&mut grad.values, inputs.cfg.grad_clip_norm);
    // AdamW minimizes, so hand it the loss gradient -∇J.
    grad.values.iter_mut().for_each(|g| *g = -*g);
    let factor = lr_factor(inputs.step, inputs.cfg);
    adamw_update(
        opt,
        params.weights_mut(),
        &grad.values,
        inputs.cfg.learning_rate * factor,
        &inputs.cfg.adamw(),
    )?;
    if !params.all_finite() {
        return Err(Error::numerical(
            format!("step {}", inputs.step),
            "parameters became non-finite",
        ));
    }
    metrics.step = inputs.step;
    metrics.lr_factor = factor;
    Ok(metrics)
}
