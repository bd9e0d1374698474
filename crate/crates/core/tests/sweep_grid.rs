//! Evaluation, grid orchestration, resume, and records I/O.

use std::fs;

use noisy_rlvr::cli::config::{ExperimentConfig, Preset};
use noisy_rlvr::rng::{substream, Purpose};
use noisy_rlvr::sweep::{
    eval_accuracy, read_records, run_config, run_grid, write_records, Decoding, GridOutput,
    RunStatus,
};
use noisy_rlvr::{PolicyParams, RunKey, SweepConfig, Task, TaskSpec};
use rand::Rng;

fn small_sweep() -> SweepConfig {
    let mut c = ExperimentConfig::preset(Preset::Desk);
    c.task = TaskSpec::arm_bandit(16, 4, 2);
    c.train.n_train = 16;
    c.train.grpo.batch_prompts = 8;
    c.train.passes = 3;
    c.train.eval_every = 2;
    c.sweep.noise_levels = vec![0.0, 0.25];
    c.sweep.group_sizes = vec![2, 4];
    c.sweep.seeds = 2;
    c.sweep_config()
}

#[test]
fn uniform_policy_accuracy_is_the_share_of_arm_zero_answers() {
    for (contexts, arms, seed) in [(64, 8, 0), (50, 3, 7), (10, 5, 2)] {
        let task = Task::new(TaskSpec::arm_bandit(contexts, arms, seed)).unwrap();
        let params = PolicyParams::zeros(&task);
        let zero_share = task
            .prompts()
            .iter()
            .filter(|p| task.correct_arm(p.context_id) == 0)
            .count() as f64
            / contexts as f64;
        assert_eq!(eval_accuracy(&params, &task, task.prompts()), zero_share);
    }
}

#[test]
fn evaluation_ignores_the_training_noise() {
    // Both runs share parameters at step 0, so their first evaluation must
    // agree whatever the verifier noise, for greedy and expected decoding.
    let mut sweep = small_sweep();
    let task = Task::new(sweep.task.clone()).unwrap();
    for decoding in [Decoding::Greedy, Decoding::Expected] {
        sweep.train.eval_decoding = decoding;
        let first = |p: f64, x: f64| {
            let key = RunKey {
                p,
                x,
                group_size: 4,
                seed: 0,
            };
            run_config(&task, key, &sweep.train, 0)
                .unwrap()
                .trace
                .points[0]
        };
        let clean = first(0.0, 0.0);
        assert_eq!(clean, first(0.5, 0.5));
        assert_eq!(clean, first(0.1, 0.4));
    }
}

#[test]
fn expected_decoding_is_the_mean_success_probability() {
    let task = Task::new(TaskSpec::digit_sum(12, 2, 4)).unwrap();
    let mut params = PolicyParams::zeros(&task);
    let mut rng = substream(Purpose::Run, &[9]);
    for w in params.weights_mut() {
        *w = rng.random_range(-1.0..1.0);
    }
    let exact = noisy_rlvr::sweep::eval_accuracy_with(
        &params,
        &task,
        task.prompts(),
        Decoding::Expected,
        0,
    );
    let sampled: f64 = (0..2000)
        .map(|s| {
            noisy_rlvr::sweep::eval_accuracy_with(
                &params,
                &task,
                task.prompts(),
                Decoding::Sampled,
                s,
            )
        })
        .sum::<f64>()
        / 2000.0;
    assert!((exact - sampled).abs() < 0.01, "{exact} vs {sampled}");
}

#[test]
fn worker_count_does_not_change_records() {
    let sweep = small_sweep();
    let one = run_grid(&sweep, 1, None, &|_| {}).unwrap();
    let four = run_grid(&sweep, 4, None, &|_| {}).unwrap();
    assert_eq!(one.len(), 2 * 2 * 2 * 2);
    assert_eq!(one, four);
}

#[test]
fn resume_skips_finished_runs_and_matches_a_fresh_sweep() {
    let sweep = small_sweep();
    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh = GridOutput {
        dir: fresh_dir.path().to_path_buf(),
    };
    run_grid(&sweep, 2, Some(&fresh), &|_| {}).unwrap();
    let expected = fs::read(fresh.records_path()).unwrap();

    // Interrupted sweep: keep only the first five records.
    let dir = tempfile::tempdir().unwrap();
    let out = GridOutput {
        dir: dir.path().to_path_buf(),
    };
    let all = read_records(&fresh.records_path()).unwrap();
    write_records(&all[..5], &out.records_path()).unwrap();

    let counter = std::sync::atomic::AtomicUsize::new(0);
    run_grid(&sweep, 3, Some(&out), &|_| {
        counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
    })
    .unwrap();
    assert_eq!(counter.into_inner(), all.len() - 5);
    assert_eq!(fs::read(out.records_path()).unwrap(), expected);

    let key = all[7].key();
    let run_dir = out.run_dir("arm_bandit", &key);
    assert!(run_dir.join("trace.csv").exists());
    assert!(run_dir.join("metrics.csv").exists());
}

#[test]
fn records_round_trip_through_csv() {
    let sweep = small_sweep();
    let records = run_grid(&sweep, 1, None, &|_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    write_records(&records, &path).unwrap();
    assert_eq!(read_records(&path).unwrap(), records);
    let header = fs::read_to_string(&path).unwrap();
    assert!(header.starts_with(
        "task,p,x,G,seed,status,final_accuracy,best_accuracy,steps_to_threshold,stability,wall_steps\n"
    ));
}

#[test]
fn numerical_blowup_yields_a_failed_record() {
    let mut sweep = small_sweep();
    sweep.train.grpo.learning_rate = 1e308;
    sweep.train.grpo.warmup_steps = 0;
    let task = Task::new(sweep.task.clone()).unwrap();
    let key = RunKey {
        p: 0.0,
        x: 0.0,
        group_size: 4,
        seed: 0,
    };
    let out = run_config(&task, key, &sweep.train, 0).unwrap();
    assert_eq!(out.record.status, RunStatus::Failed);
    assert!(out.record.final_accuracy.is_none());
    assert!(out.failure.is_some());
}
