//! A desk-scale laboratory for reinforcement learning with verifiable
//! rewards under a noisy verifier.
//!
//! The pipeline:
//!
//! * [`envs`]: synthetic tasks (ArmBandit, DigitSum) with exact verifiers.
//! * [`policy`]: linear-softmax policies with analytic gradients.
//! * [`noise`]: the false-negative / false-positive reward flip.
//! * [`grpo`] and [`optim`]: group-relative advantages, clipped surrogate,
//!   k3 KL penalty, AdamW with warmup and gradient clipping.
//! * [`sweep`]: training runs, evaluation, and the `(p, x, G, seed)` grid.
//! * [`fit`]: the quadratic-in-noise, log-linear-in-rollouts scaling
//!   surface and its maximum over the noise square.
//! * [`cli`]: the `noisy-rlvr` command-line tool.

pub mod cli;
pub mod envs;
pub mod error;
pub mod fit;
pub mod grpo;
pub mod noise;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod sweep;

pub use envs::{Prompt, Response, Task, TaskKind, TaskSpec, TrueLabel};
pub use error::{Error, Result};
pub use fit::{FitCoefficients, FitReport, FitTarget, SurfaceOptimum};
pub use grpo::{GrpoConfig, StepMetrics};
pub use noise::{NoiseSpec, NoisyReward};
pub use policy::{Gradient, PolicyParams, ReferenceParams, Rollout};
pub use sweep::{EvalRecord, EvalTrace, RunKey, SweepConfig, TrainConfig};
