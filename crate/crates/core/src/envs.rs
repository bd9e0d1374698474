//! Synthetic verifiable tasks with exact binary verifiers.
//!
//! Two tasks are provided:
//!
//! * **ArmBandit**: each context has exactly one correct arm out of `K`,
//!   `k*(c) = (17·c + 3 + task_seed) mod K`. A response is a single token.
//! * **DigitSum**: each context carries a target sum `t(c)`; a response is
//!   `L` decimal digits and is correct iff the digits add up to the target.
//!   The target is `splitmix64(task_seed ^ splitmix64(c)) mod (9·L + 1)`,
//!   using the SplitMix64 finalizer from [`crate::rng::splitmix64`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Digits are base 10.
pub const DIGIT_BASE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ArmBandit,
    DigitSum,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ArmBandit => "arm_bandit",
            TaskKind::DigitSum => "digit_sum",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Task description as it appears in experiment configs.
///
/// `arm_count` is read only for ArmBandit and `seq_len` only for DigitSum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub context_count: usize,
    #[serde(default = "default_arm_count")]
    pub arm_count: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default)]
    pub task_seed: u64,
}

fn default_arm_count() -> usize {
    8
}

fn default_seq_len() -> usize {
    3
}

impl TaskSpec {
    pub fn arm_bandit(context_count: usize, arm_count: usize, task_seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::ArmBandit,
            context_count,
            arm_count,
            seq_len: default_seq_len(),
            task_seed,
        }
    }

    pub fn digit_sum(context_count: usize, seq_len: usize, task_seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::DigitSum,
            context_count,
            arm_count: default_arm_count(),
            seq_len,
            task_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_count < 2 {
            return Err(Error::config("task.context_count", "must be at least 2"));
        }
        match self.kind {
            TaskKind::ArmBandit if self.arm_count < 2 => {
                Err(Error::config("task.arm_count", "must be at least 2"))
            }
            TaskKind::DigitSum if self.seq_len < 1 => {
                Err(Error::config("task.seq_len", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

/// One prompt of a task. `target` is the digit-sum target (0 for ArmBandit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prompt {
    pub context_id: usize,
    pub target: usize,
}

/// A sampled or decoded answer: one arm index, or `L` digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Response {
    pub tokens: Vec<usize>,
}

impl Response {
    pub fn new(tokens: Vec<usize>) -> Self {
        Response { tokens }
    }
}

/// Output of the exact verifier. Never perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrueLabel(bool);

impl TrueLabel {
    pub fn new(correct: bool) -> Self {
        TrueLabel(correct)
    }

    pub fn is_correct(self) -> bool {
        self.0
    }

    pub fn value(self) -> u8 {
        self.0 as u8
    }
}

/// Disjoint train and validation prompt sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Prompt>,
    pub validation: Vec<Prompt>,
}

/// An immutable task: prompt set, answer key, and exact verifier.
#[derive(Debug, Clone)]
pub struct Task {
    spec: TaskSpec,
    prompts: Vec<Prompt>,
}

impl Task {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.validate()?;
        let prompts = (0..spec.context_count)
            .map(|context_id| Prompt {
                context_id,
                target: match spec.kind {
                    TaskKind::ArmBandit => 0,
                    TaskKind::DigitSum => {
                        digit_sum_target(spec.task_seed, context_id, spec.seq_len)
                    }
                },
            })
            .collect();
        Ok(Task { spec, prompts })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn kind(&self) -> TaskKind {
        self.spec.kind
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn prompt(&self, context_id: usize) -> Prompt {
        self.prompts[context_id]
    }

    /// Number of tokens in a response.
    pub fn response_len(&self) -> usize {
        match self.spec.kind {
            TaskKind::ArmBandit => 1,
            TaskKind::DigitSum => self.spec.seq_len,
        }
    }

    /// Vocabulary size of each response token.
    pub fn vocab_size(&self) -> usize {
        match self.spec.kind {
            TaskKind::ArmBandit => self.spec.arm_count,
            TaskKind::DigitSum => DIGIT_BASE,
        }
    }

    /// Largest reachable digit sum, `9·L`.
    pub fn max_digit_sum(&self) -> usize {
        (DIGIT_BASE - 1) * self.spec.seq_len
    }

    /// Width of the one-hot feature vector feeding the policy.
    ///
    /// ArmBandit: one slot per context. DigitSum: target ⊕ position ⊕
    /// running sum, i.e. `(9L+1) + L + (9L+1)`.
    pub fn feature_count(&self) -> usize {
        match self.spec.kind {
            TaskKind::ArmBandit => self.spec.context_count,
            TaskKind::DigitSum => 2 * (self.max_digit_sum() + 1) + self.spec.seq_len,
        }
    }

    /// Active one-hot features for the decision at `position`, given the sum
    /// of the digits already emitted.
    pub(crate) fn decision_features(
        &self,
        prompt: &Prompt,
        position: usize,
        running_sum: usize,
    ) -> DecisionFeatures {
        match self.spec.kind {
            TaskKind::ArmBandit => DecisionFeatures::one(prompt.context_id),
            TaskKind::DigitSum => {
                let sums = self.max_digit_sum() + 1;
                let l = self.spec.seq_len;
                DecisionFeatures::three([
                    prompt.target,
                    sums + position,
                    sums + l + running_sum.min(sums - 1),
                ])
            }
        }
    }

    /// The correct arm for `context_id` (ArmBandit only).
    pub fn correct_arm(&self, context_id: usize) -> usize {
        let k = self.spec.arm_count as u64;
        let c = context_id as u64 % k;
        ((17 % k) * c % k + 3 % k + self.spec.task_seed % k) as usize % self.spec.arm_count
    }

    pub fn response_in_range(&self, response: &Response) -> bool {
        response.tokens.len() == self.response_len()
            && response.tokens.iter().all(|&t| t < self.vocab_size())
    }

    /// Exact verifier. Responses must be in range.
    pub fn verify_exact(&self, prompt: &Prompt, response: &Response) -> TrueLabel {
        debug_assert!(self.response_in_range(response));
        let correct = match self.spec.kind {
            TaskKind::ArmBandit => response.tokens[0] == self.correct_arm(prompt.context_id),
            TaskKind::DigitSum => response.tokens.iter().sum::<usize>() == prompt.target,
        };
        TrueLabel(correct)
    }

    /// Deterministic disjoint split of the prompt set.
    pub fn split_dataset(&self, n_train: usize, n_val: usize, seed: u64) -> Result<Split> {
        if n_train + n_val > self.spec.context_count {
            return Err(Error::config(
                "train.n_train",
                format!(
                    "n_train + n_val = {} exceeds context_count = {}",
                    n_train + n_val,
                    self.spec.context_count
                ),
            ));
        }
        let mut order: Vec<usize> = (0..self.spec.context_count).collect();
        order.shuffle(&mut rng::substream(
            Purpose::Split,
            &[seed, self.spec.task_seed],
        ));
        let train = order[..n_train].iter().map(|&c| self.prompts[c]).collect();
        let validation = order[n_train..n_train + n_val]
            .iter()
            .map(|&c| self.prompts[c])
            .collect();
        Ok(Split { train, validation })
    }
}

fn digit_sum_target(task_seed: u64, context_id: usize, seq_len: usize) -> usize {
    let h = rng::splitmix64(task_seed ^ rng::splitmix64(context_id as u64));
    (h % ((DIGIT_BASE as u64 - 1) * seq_len as u64 + 1)) as usize
}

/// Up to three active one-hot feature indices for one decision.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DecisionFeatures {
    idx: [usize; 3],
    len: usize,
}

impl DecisionFeatures {
    fn one(i: usize) -> Self {
        DecisionFeatures {
            idx: [i, 0, 0],
            len: 1,
        }
    }

    fn three(idx: [usize; 3]) -> Self {
        DecisionFeatures { idx, len: 3 }
    }

    pub(crate) fn as_slice(&self) -> &[usize] {
        &self.idx[..self.len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn bandit(k: usize, seed: u64) -> Task {
        Task::new(TaskSpec::arm_bandit(64, k, seed)).unwrap()
    }

    #[test]
    fn correct_arm_formula() {
        let t = bandit(8, 0);
        assert_eq!(t.correct_arm(0), 3);
        assert_eq!(t.correct_arm(1), 4);
        for c in 0..64 {
            assert_eq!(t.correct_arm(c), (17 * c + 3) % 8);
        }
        let t = bandit(7, u64::MAX);
        for c in 0..64 {
            let expected = ((17u128 * c as u128 + 3 + u64::MAX as u128) % 7) as usize;
            assert_eq!(t.correct_arm(c), expected);
        }
    }

    #[test]
    fn verifier_examples() {
        let t = bandit(8, 0);
        assert!(t
            .verify_exact(&t.prompt(0), &Response::new(vec![3]))
            .is_correct());
        assert!(!t
            .verify_exact(&t.prompt(0), &Response::new(vec![2]))
            .is_correct());

        let ds = Task::new(TaskSpec::digit_sum(16, 2, 0)).unwrap();
        let p = Prompt {
            context_id: 0,
            target: 7,
        };
        assert_eq!(ds.verify_exact(&p, &Response::new(vec![3, 4])).value(), 1);
        assert_eq!(ds.verify_exact(&p, &Response::new(vec![3, 3])).value(), 0);
    }

    #[test]
    fn digit_sum_targets_in_range() {
        let t = Task::new(TaskSpec::digit_sum(500, 3, 11)).unwrap();
        assert!(t.prompts().iter().all(|p| p.target <= 27));
        // The hash should reach both ends of a small range.
        let t = Task::new(TaskSpec::digit_sum(500, 1, 11)).unwrap();
        let seen: std::collections::HashSet<_> = t.prompts().iter().map(|p| p.target).collect();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn exactly_one_correct_arm_per_context() {
        let t = bandit(5, 9);
        for p in t.prompts() {
            let n = (0..5)
                .filter(|&a| t.verify_exact(p, &Response::new(vec![a])).is_correct())
                .count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn digit_sum_matches_enumeration() {
        for l in 1..=4u32 {
            let t = Task::new(TaskSpec::digit_sum(8, l as usize, 3)).unwrap();
            for target in 0..=9 * l as usize {
                let p = Prompt {
                    context_id: 0,
                    target,
                };
                let mut by_verifier = 0usize;
                let mut by_enumeration = 0usize;
                for code in 0..10usize.pow(l) {
                    let digits: Vec<usize> = (0..l).map(|i| code / 10usize.pow(i) % 10).collect();
                    if digits.iter().sum::<usize>() == target {
                        by_enumeration += 1;
                    }
                    if t.verify_exact(&p, &Response::new(digits)).is_correct() {
                        by_verifier += 1;
                    }
                }
                assert_eq!(by_verifier, by_enumeration, "L={l} target={target}");
            }
        }
    }

    #[test]
    fn verifier_is_deterministic() {
        let t = Task::new(TaskSpec::digit_sum(32, 3, 5)).unwrap();
        let mut r = rng::substream(Purpose::Run, &[42]);
        for _ in 0..1000 {
            let p = t.prompt(r.random_range(0..32));
            let resp = Response::new((0..3).map(|_| r.random_range(0..10)).collect());
            assert_eq!(t.verify_exact(&p, &resp), t.verify_exact(&p, &resp));
        }
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let t = bandit(8, 0);
        let a = t.split_dataset(48, 16, 7).unwrap();
        assert_eq!(a.train.len(), 48);
        assert_eq!(a.validation.len(), 16);
        let ids: std::collections::HashSet<_> = a
            .train
            .iter()
            .chain(&a.validation)
            .map(|p| p.context_id)
            .collect();
        assert_eq!(ids.len(), 64);
        assert_eq!(a, t.split_dataset(48, 16, 7).unwrap());
        assert!(matches!(
            t.split_dataset(60, 16, 7),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let err = Task::new(TaskSpec::arm_bandit(1, 8, 0)).unwrap_err();
        assert!(err.to_string().contains("context_count"));
        let err = Task::new(TaskSpec::arm_bandit(4, 1, 0)).unwrap_err();
        assert!(err.to_string().contains("arm_count"));
        let err = Task::new(TaskSpec::digit_sum(4, 0, 0)).unwrap_err();
        assert!(err.to_string().contains("seq_len"));
    }
}
