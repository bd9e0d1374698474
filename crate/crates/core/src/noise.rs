//! Stochastic verifier perturbation.
//!
//! A correct response (`y* = 1`) is rewarded 0 with probability `p` (false
//! negative); an incorrect one (`y* = 0`) is rewarded 1 with probability `x`
//! (false positive). Every flip consumes exactly one uniform draw.

use rand::Rng;
use serde::Serialize;

use crate::envs::TrueLabel;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Noise levels swept for both rates by default.
pub const DEFAULT_LEVELS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

/// False-negative rate `p` and false-positive rate `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    p: f64,
    x: f64,
}

impl NoiseSpec {
    pub const PERFECT: NoiseSpec = NoiseSpec { p: 0.0, x: 0.0 };

    pub fn new(p: f64, x: f64) -> Result<Self> {
        check_rate("p", p)?;
        check_rate("x", x)?;
        Ok(NoiseSpec { p, x })
    }

    pub fn symmetric(rate: f64) -> Result<Self> {
        Self::new(rate, rate)
    }

    /// False-negative rate.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// False-positive rate.
    pub fn x(&self) -> f64 {
        self.x
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(name, format!("rate {v} is outside [0, 1]")))
    }
}

/// Reward seen by the optimizer. The true label rides along for logging and
/// is only reachable through [`NoisyReward::true_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoisyReward {
    value: u8,
    true_label: TrueLabel,
}

impl NoisyReward {
    pub fn value(&self) -> u8 {
        self.value
    }

    pub fn as_f64(&self) -> f64 {
        self.value as f64
    }

    pub fn true_label(&self) -> TrueLabel {
        self.true_label
    }

    pub fn flipped(&self) -> bool {
        self.value != self.true_label.value()
    }
}

pub fn perturb(y_star: TrueLabel, noise: NoiseSpec, rng: &mut RandomStream) -> NoisyReward {
    let u: f64 = rng.random();
    let value = if y_star.is_correct() {
        if u < noise.p {
            0
        } else {
            1
        }
    } else if u < noise.x {
        1
    } else {
        0
    };
    NoisyReward {
        value,
        true_label: y_star,
    }
}

/// Cartesian product of `levels`, `p` outer and `x` inner.
pub fn noise_grid(levels: &[f64]) -> Result<Vec<NoiseSpec>> {
    if levels.is_empty() {
        return Err(Error::config("noise_levels", "must not be empty"));
    }
    for &l in levels {
        check_rate("noise_levels", l)?;
    }
    Ok(levels
        .iter()
        .flat_map(|&p| levels.iter().map(move |&x| NoiseSpec { p, x }))
        .collect())
}
