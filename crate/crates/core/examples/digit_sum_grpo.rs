//! GRPO on DigitSum: emit `L` digits whose sum hits the prompt's target.
//! The policy shares weights across prompts, so accuracy is measured on
//! held-out validation prompts.
//!
//! ```text
//! cargo run --release --example digit_sum_grpo
//! ```

use noisy_rlvr::envs::TaskSpec;
use noisy_rlvr::sweep::{eval_accuracy_with, run_config, Decoding, EvalSplit, TrainConfig};
use noisy_rlvr::{GrpoConfig, RunKey, Task};

fn main() -> noisy_rlvr::Result<()> {
    let task = Task::new(TaskSpec::digit_sum(96, 2, 0))?;
    let train = TrainConfig {
        grpo: GrpoConfig {
            learning_rate: 0.05,
            ..GrpoConfig::desk()
        },
        passes: 60,
        n_train: 64,
        n_val: 32,
        eval_split: EvalSplit::Validation,
        eval_decoding: Decoding::Expected,
        ..TrainConfig::default()
    };
    train.validate(task.spec())?;
    let split = task.split_dataset(train.n_train, train.n_val, train.split_seed)?;

    for (p, x) in [(0.0, 0.0), (0.2, 0.2)] {
        let key = RunKey {
            p,
            x,
            group_size: 16,
            seed: 0,
        };
        let out = run_config(&task, key, &train, 0)?;
        let greedy = eval_accuracy_with(&out.params, &task, &split.validation, Decoding::Greedy, 0);
        println!(
            "p={p} x={x}: expected validation accuracy {:.3} -> {:.3} over {} steps, greedy {:.3}",
            out.trace.points[0].1,
            out.record.final_accuracy.unwrap_or(f64::NAN),
            out.record.wall_steps,
            greedy
        );
        let prompt = split.validation[0];
        let response = out.params.greedy_response(&task, &prompt);
        println!(
            "  target {} -> digits {:?} (sum {})",
            prompt.target,
            response.tokens,
            response.tokens.iter().sum::<usize>()
        );
    }
    Ok(())
}
