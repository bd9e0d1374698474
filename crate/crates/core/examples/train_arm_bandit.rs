//! One desk-preset GRPO run on the 64-context, 8-arm bandit, with and
//! without verifier noise, printing the validation curves side by side.
//!
//! ```text
//! cargo run --release --example train_arm_bandit
//! ```

use noisy_rlvr::cli::config::{ExperimentConfig, Preset};
use noisy_rlvr::sweep::run_config;
use noisy_rlvr::{RunKey, Task};

fn main() -> noisy_rlvr::Result<()> {
    let cfg = ExperimentConfig::preset(Preset::Desk);
    let task = Task::new(cfg.task.clone())?;
    println!(
        "ArmBandit C={} K={}, lr {}, {} steps",
        cfg.task.context_count,
        cfg.task.arm_count,
        cfg.train.grpo.learning_rate,
        cfg.train.total_steps()
    );

    let settings = [(0.0, 0.0), (0.2, 0.1), (0.5, 0.5)];
    let runs = settings
        .iter()
        .map(|&(p, x)| {
            let key = RunKey {
                p,
                x,
                group_size: 16,
                seed: 0,
            };
            run_config(&task, key, &cfg.train, cfg.global_seed)
        })
        .collect::<noisy_rlvr::Result<Vec<_>>>()?;

    print!("{:>6}", "step");
    for (p, x) in settings {
        print!("  p={p},x={x}");
    }
    println!();
    for (i, &(step, _)) in runs[0].trace.points.iter().enumerate().step_by(3) {
        print!("{step:>6}");
        for run in &runs {
            print!("  {:>11.3}", run.trace.points[i].1);
        }
        println!();
    }
    for ((p, x), run) in settings.iter().zip(&runs) {
        let last = run.metrics.last().expect("at least one step");
        println!(
            "p={p} x={x}: final {:.3}, best {:.3}, last-step true reward {:.3}, noisy reward {:.3}, KL {:.4}",
            run.record.final_accuracy.unwrap_or(f64::NAN),
            run.record.best_accuracy.unwrap_or(f64::NAN),
            last.mean_true_reward,
            last.mean_noisy_reward,
            last.kl_mean
        );
    }
    Ok(())
}
