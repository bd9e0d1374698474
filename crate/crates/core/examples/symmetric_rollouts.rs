//! Rollout scaling under symmetric noise: for each `p = x`, more rollouts
//! per prompt give higher final accuracy, faster learning, and a steadier
//! tail of the accuracy curve.
//!
//! ```text
//! cargo run --release --example symmetric_rollouts
//! ```

use noisy_rlvr::cli::config::{ExperimentConfig, Preset};
use noisy_rlvr::sweep::run_config;
use noisy_rlvr::{RunKey, Task};

fn main() -> noisy_rlvr::Result<()> {
    let cfg = ExperimentConfig::preset(Preset::Symmetric);
    let task = Task::new(cfg.task.clone())?;
    let seeds = 3;
    println!(
        "{:>4} {:>3} {:>13} {:>15} {:>10}",
        "rate", "G", "mean final", "steps to 0.5", "stability"
    );
    for rate in [0.1, 0.3] {
        for &g in &cfg.sweep.group_sizes {
            let (mut fin, mut stab, mut reach) = (0.0, 0.0, Vec::new());
            for seed in 0..seeds {
                let key = RunKey {
                    p: rate,
                    x: rate,
                    group_size: g,
                    seed,
                };
                let r = run_config(&task, key, &cfg.train, cfg.global_seed)?.record;
                fin += r.final_accuracy.unwrap_or(f64::NAN) / seeds as f64;
                stab += r.stability.unwrap_or(f64::NAN) / seeds as f64;
                reach.push(
                    r.steps_to_threshold
                        .map_or("-".to_string(), |s| s.to_string()),
                );
            }
            println!(
                "{rate:>4} {g:>3} {fin:>13.3} {:>15} {stab:>10.4}",
                reach.join("/")
            );
        }
    }
    Ok(())
}
