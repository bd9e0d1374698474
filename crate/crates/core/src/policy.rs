//! Linear-softmax policies over one-hot features.
//!
//! Both tasks share one parameterization: a weight matrix of shape
//! `[features × actions]`, and the logits of a decision are the sum of the
//! rows selected by that decision's active features. For ArmBandit the only
//! active feature is the context, so the matrix is a `[contexts × arms]` logit
//! table. For DigitSum three features are active per digit (target, position,
//! running sum so far) and the matrix maps to the 10 digit logits.
//!
//! # Parameter file format
//!
//! [`PolicyParams::write_text`] emits a plain text tensor:
//!
//! ```text
//! noisy-rlvr-params v1
//! kind arm_bandit
//! shape <rows> <cols>
//! <cols space-separated values>      (one line per row, `rows` lines)
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so reading a file
//! back reproduces the parameters bit for bit.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::envs::{Prompt, Response, Task, TaskKind};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

const PARAMS_MAGIC: &str = "noisy-rlvr-params v1";

/// Trainable policy weights, row-major `[features × actions]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    kind: TaskKind,
    features: usize,
    actions: usize,
    weights: Vec<f64>,
}

/// Frozen copy of the initial parameters used as the KL anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceParams(PolicyParams);

impl ReferenceParams {
    pub fn snapshot(params: &PolicyParams) -> Self {
        ReferenceParams(params.clone())
    }

    pub fn params(&self) -> &PolicyParams {
        &self.0
    }
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        Gradient {
            values: vec![0.0; params.weights.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// A sampled response together with its per-token log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub response: Response,
    pub token_logprobs: Vec<f64>,
    pub total_logprob: f64,
}

impl PolicyParams {
    /// All-zero weights, i.e. the uniform policy.
    pub fn zeros(task: &Task) -> Self {
        let features = task.feature_count();
        let actions = task.vocab_size();
        PolicyParams {
            kind: task.kind(),
            features,
            actions,
            weights: vec![0.0; features * actions],
        }
    }

    pub fn from_weights(task: &Task, weights: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(task);
        if weights.len() != p.weights.len() {
            return Err(Error::config(
                "params",
                format!(
                    "expected {} weights, got {}",
                    p.weights.len(),
                    weights.len()
                ),
            ));
        }
        p.weights = weights;
        Ok(p)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    /// `(rows, cols)` = `(features, actions)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.features, self.actions)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.weights[feature * self.actions..(feature + 1) * self.actions]
    }

    pub fn row_mut(&mut self, feature: usize) -> &mut [f64] {
        &mut self.weights[feature * self.actions..(feature + 1) * self.actions]
    }

    fn logits_into(&self, active: &[usize], out: &mut [f64]) {
        out.fill(0.0);
        for &f in active {
            for (o, w) in out.iter_mut().zip(self.row(f)) {
                *o += w;
            }
        }
    }

    /// Walks the decisions of `response`, calling `visit(position, active
    /// features, log-softmax at temperature 1, chosen token)`.
    fn for_each_decision(
        &self,
        task: &Task,
        prompt: &Prompt,
        response: &Response,
        mut visit: impl FnMut(usize, &[usize], &[f64], usize),
    ) {
        let mut logits = vec![0.0; self.actions];
        let mut running = 0;
        for (pos, &tok) in response.tokens.iter().enumerate() {
            let feats = task.decision_features(prompt, pos, running);
            self.logits_into(feats.as_slice(), &mut logits);
            log_softmax_in_place(&mut logits, 1.0);
            visit(pos, feats.as_slice(), &logits, tok);
            running += tok;
        }
    }

    /// Draws a response token by token from `softmax(logits / temperature)`.
    pub fn sample_response(
        &self,
        task: &Task,
        prompt: &Prompt,
        temperature: f64,
        rng: &mut RandomStream,
    ) -> Result<Rollout> {
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::config("grpo.temperature", "must be positive"));
        }
        let len = task.response_len();
        let mut tokens = Vec::with_capacity(len);
        let mut token_logprobs = Vec::with_capacity(len);
        let mut logits = vec![0.0; self.actions];
        let mut running = 0;
        for pos in 0..len {
            let feats = task.decision_features(prompt, pos, running);
            self.logits_into(feats.as_slice(), &mut logits);
            if logits.iter().any(|z| !z.is_finite()) {
                return Err(Error::numerical(
                    format!("context {}", prompt.context_id),
                    "non-finite logits during sampling",
                ));
            }
            log_softmax_in_place(&mut logits, temperature);
            let tok = sample_index(&logits, rng.random::<f64>());
            tokens.push(tok);
            token_logprobs.push(logits[tok]);
            running += tok;
        }
        let total_logprob = token_logprobs.iter().sum();
        Ok(Rollout {
            response: Response::new(tokens),
            token_logprobs,
            total_logprob,
        })
    }

    /// Per-token log-probabilities of `response` at temperature 1.
    pub fn token_logprobs(&self, task: &Task, prompt: &Prompt, response: &Response) -> Vec<f64> {
        let mut out = Vec::with_capacity(response.tokens.len());
        self.for_each_decision(task, prompt, response, |_, _, lsm, tok| out.push(lsm[tok]));
        out
    }

    /// Log-probability of the whole response at temperature 1.
    pub fn logprob(&self, task: &Task, prompt: &Prompt, response: &Response) -> f64 {
        self.token_logprobs(task, prompt, response).iter().sum()
    }

    /// Gradient of [`Self::logprob`] with respect to every weight.
    pub fn grad_logprob(&self, task: &Task, prompt: &Prompt, response: &Response) -> Gradient {
        let mut grad = Gradient::zeros_like(self);
        let ones = vec![1.0; response.tokens.len()];
        self.accumulate_token_grads(task, prompt, response, &ones, &mut grad.values);
        grad
    }

    /// Adds `Σ_t token_weights[t] · ∇ log π(token_t)` into `out`.
    ///
    /// Each token's score is `onehot(chosen) − softmax(logits)`, routed to
    /// every active feature row of that decision.
    pub fn accumulate_token_grads(
        &self,
        task: &Task,
        prompt: &Prompt,
        response: &Response,
        token_weights: &[f64],
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.weights.len());
        let actions = self.actions;
        self.for_each_decision(task, prompt, response, |pos, feats, lsm, tok| {
            let w = token_weights[pos];
            if w == 0.0 {
                return;
            }
            for &f in feats {
                let row = &mut out[f * actions..(f + 1) * actions];
                for (a, (g, l)) in row.iter_mut().zip(lsm).enumerate() {
                    let indicator = if a == tok { 1.0 } else { 0.0 };
                    *g += w * (indicator - l.exp());
                }
            }
        });
    }

    /// Argmax decoding; ties go to the lowest token index.
    pub fn greedy_response(&self, task: &Task, prompt: &Prompt) -> Response {
        let mut logits = vec![0.0; self.actions];
        let mut tokens = Vec::with_capacity(task.response_len());
        let mut running = 0;
        for pos in 0..task.response_len() {
            let feats = task.decision_features(prompt, pos, running);
            self.logits_into(feats.as_slice(), &mut logits);
            let mut best = 0;
            for (a, &z) in logits.iter().enumerate().skip(1) {
                if z > logits[best] {
                    best = a;
                }
            }
            tokens.push(best);
            running += best;
        }
        Response::new(tokens)
    }

    /// Exact probability that a temperature-1 sample passes the verifier.
    ///
    /// DigitSum propagates the distribution over running sums one position
    /// at a time, so the cost is `O(L · 9L · 10)` rather than `10^L`.
    pub fn success_probability(&self, task: &Task, prompt: &Prompt) -> f64 {
        let mut logits = vec![0.0; self.actions];
        match task.kind() {
            TaskKind::ArmBandit => {
                let feats = task.decision_features(prompt, 0, 0);
                self.logits_into(feats.as_slice(), &mut logits);
                log_softmax_in_place(&mut logits, 1.0);
                logits[task.correct_arm(prompt.context_id)].exp()
            }
            TaskKind::DigitSum => {
                let sums = task.max_digit_sum() + 1;
                let mut mass = vec![0.0; sums];
                mass[0] = 1.0;
                for pos in 0..task.response_len() {
                    let mut next = vec![0.0; sums];
                    for (running, &m) in mass.iter().enumerate().filter(|(_, m)| **m > 0.0) {
                        let feats = task.decision_features(prompt, pos, running);
                        self.logits_into(feats.as_slice(), &mut logits);
                        log_softmax_in_place(&mut logits, 1.0);
                        for (digit, lp) in logits.iter().enumerate() {
                            next[running + digit] += m * lp.exp();
                        }
                    }
                    mass = next;
                }
                mass[prompt.target]
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{PARAMS_MAGIC}")?;
        writeln!(w, "kind {}", self.kind)?;
        writeln!(w, "shape {} {}", self.features, self.actions)?;
        for f in 0..self.features {
            let line: Vec<String> = self.row(f).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads a parameter file written by [`Self::write_text`] and checks it
    /// against the shape `task` requires.
    pub fn read_text<R: BufRead>(task: &Task, reader: R) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            path: "params".into(),
            message,
        };
        let mut lines = reader.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != PARAMS_MAGIC {
            return Err(bad("missing header line".into()));
        }
        let kind = next()?;
        if kind.trim() != format!("kind {}", task.kind()) {
            return Err(bad(format!("task kind mismatch: `{}`", kind.trim())));
        }
        let shape = next()?;
        let dims: Vec<usize> = shape
            .trim()
            .strip_prefix("shape ")
            .ok_or_else(|| bad("missing shape line".into()))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad(format!("bad dimension `{s}`"))))
            .collect::<Result<_>>()?;
        let expected = (task.feature_count(), task.vocab_size());
        if dims != [expected.0, expected.1] {
            return Err(bad(format!(
                "shape {dims:?} does not match task {expected:?}"
            )));
        }
        let mut weights = Vec::with_capacity(expected.0 * expected.1);
        for _ in 0..expected.0 {
            let line = next()?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(format!("bad value `{s}`"))))
                .collect::<Result<_>>()?;
            if row.len() != expected.1 {
                return Err(bad(format!(
                    "row has {} values, expected {}",
                    row.len(),
                    expected.1
                )));
            }
            weights.extend(row);
        }
        Self::from_weights(task, weights)
    }
}

/// Replaces `z` by `log softmax(z / temperature)` using max subtraction.
pub fn log_softmax_in_place(z: &mut [f64], temperature: f64) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max) / temperature;
        sum += v.exp();
    }
    let log_sum = sum.ln();
    for v in z.iter_mut() {
        *v -= log_sum;
    }
}

/// Inverse-CDF draw from log-probabilities with a uniform `u ∈ [0, 1)`.
fn sample_index(logprobs: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, lp) in logprobs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_positive = i;
        }
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TaskSpec;
    use crate::rng::{substream, Purpose};

    fn bandit(k: usize) -> Task {
        Task::new(TaskSpec::arm_bandit(4, k, 0)).unwrap()
    }

    #[test]
    fn success_probability_matches_enumeration() {
        use rand::Rng;
        let task = Task::new(TaskSpec::digit_sum(6, 2, 5)).unwrap();
        let mut params = PolicyParams::zeros(&task);
        let mut rng = substream(Purpose::Run, &[3]);
        for w in params.weights_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        for prompt in task.prompts() {
            let mut brute = 0.0;
            for a in 0..10 {
                for b in 0..10 {
                    let r = Response::new(vec![a, b]);
                    if task.verify_exact(prompt, &r).is_correct() {
                        brute += params.logprob(&task, prompt, &r).exp();
                    }
                }
            }
            assert!((params.success_probability(&task, prompt) - brute).abs() < 1e-14);
        }
        let task = bandit(8);
        let params = PolicyParams::zeros(&task);
        assert!((params.success_probability(&task, &task.prompt(0)) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_pick_the_hot_arm() {
        let task = bandit(8);
        let mut params = PolicyParams::zeros(&task);
        params.row_mut(2)[3] = 1000.0;
        let mut rng = substream(Purpose::Sample, &[1]);
        for _ in 0..100 {
            let r = params
                .sample_response(&task, &task.prompt(2), 1.0, &mut rng)
                .unwrap();
            assert_eq!(r.response.tokens, vec![3]);
            assert!(r.total_logprob.abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_logits_are_reported_with_context() {
        let task = bandit(8);
        let mut params = PolicyParams::zeros(&task);
        params.row_mut(1)[0] = f64::NAN;
        let mut rng = substream(Purpose::Sample, &[1]);
        let err = params
            .sample_response(&task, &task.prompt(1), 1.0, &mut rng)
            .unwrap_err();
        assert!(err.is_numerical());
        assert!(err.to_string().contains("context 1"));
    }

    #[test]
    fn uniform_logprobs() {
        let task = bandit(8);
        let params = PolicyParams::zeros(&task);
        let lp = params.logprob(&task, &task.prompt(0), &Response::new(vec![5]));
        assert!((lp - (1.0f64 / 8.0).ln()).abs() < 1e-15);

        let ds = Task::new(TaskSpec::digit_sum(4, 2, 0)).unwrap();
        let params = PolicyParams::zeros(&ds);
        let lp = params.logprob(&ds, &ds.prompt(0), &Response::new(vec![9, 1]));
        assert!((lp - 2.0 * 0.1f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn uniform_k2_gradient() {
        let task = bandit(2);
        let params = PolicyParams::zeros(&task);
        let g = params.grad_logprob(&task, &task.prompt(1), &Response::new(vec![0]));
        assert_eq!(&g.values[2..4], &[0.5, -0.5]);
        assert!(g.values[..2]
            .iter()
            .chain(&g.values[4..])
            .all(|&v| v == 0.0));
    }

    #[test]
    fn greedy_ties_and_argmax() {
        let task = bandit(8);
        let mut params = PolicyParams::zeros(&task);
        assert_eq!(
            params.greedy_response(&task, &task.prompt(0)).tokens,
            vec![0]
        );
        params.row_mut(0)[5] = 0.3;
        assert_eq!(
            params.greedy_response(&task, &task.prompt(0)).tokens,
            vec![5]
        );
    }

    #[test]
    fn temperature_must_be_positive() {
        let task = bandit(2);
        let params = PolicyParams::zeros(&task);
        let mut rng = substream(Purpose::Sample, &[0]);
        assert!(params
            .sample_response(&task, &task.prompt(0), 0.0, &mut rng)
            .is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let task = Task::new(TaskSpec::digit_sum(6, 2, 1)).unwrap();
        let mut params = PolicyParams::zeros(&task);
        for (i, w) in params.weights_mut().iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin() / 3.0;
        }
        let mut buf = Vec::new();
        params.write_text(&mut buf).unwrap();
        let back = PolicyParams::read_text(&task, buf.as_slice()).unwrap();
        assert_eq!(back, params);

        let other = bandit(8);
        assert!(PolicyParams::read_text(&other, buf.as_slice()).is_err());
    }
}
