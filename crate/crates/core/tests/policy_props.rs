//! Policy sampling and gradient properties checked against enumeration,
//! finite differences and Monte Carlo.

use noisy_rlvr::rng::{substream, Purpose};
use noisy_rlvr::{PolicyParams, Prompt, Response, Task, TaskSpec};
use rand::Rng;

fn random_params(task: &Task, seed: u64, scale: f64) -> PolicyParams {
    let mut params = PolicyParams::zeros(task);
    let mut rng = substream(Purpose::Run, &[seed]);
    for w in params.weights_mut() {
        *w = rng.random_range(-scale..scale);
    }
    params
}

fn all_responses(task: &Task) -> Vec<Response> {
    let (len, vocab) = (task.response_len(), task.vocab_size());
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..vocab).map(move |t| {
                    let mut v = prefix.clone();
                    v.push(t);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(Response::new).collect()
}

fn random_response(task: &Task, rng: &mut impl Rng) -> Response {
    Response::new(
        (0..task.response_len())
            .map(|_| rng.random_range(0..task.vocab_size()))
            .collect(),
    )
}

/// Max relative error of `grad_logprob` against central differences with
/// `h = 1e-5`, over the weights that can affect the response.
fn fd_max_rel_error(task: &Task, trials: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut params = random_params(task, 1000 + trial, 1.0);
        let mut rng = substream(Purpose::Run, &[2000 + trial]);
        let prompt = task.prompt(rng.random_range(0..task.prompts().len()));
        let response = random_response(task, &mut rng);
        let analytic = params.grad_logprob(task, &prompt, &response);
        let h = 1e-5;
        for i in 0..params.weights().len() {
            if analytic.values[i] == 0.0 {
                // A weight no decision reads must have zero effect.
                let orig = params.weights()[i];
                params.weights_mut()[i] = orig + 1.0;
                let moved = params.logprob(task, &prompt, &response);
                params.weights_mut()[i] = orig;
                assert_eq!(moved, params.logprob(task, &prompt, &response));
                continue;
            }
            let orig = params.weights()[i];
            params.weights_mut()[i] = orig + h;
            let up = params.logprob(task, &prompt, &response);
            params.weights_mut()[i] = orig - h;
            let down = params.logprob(task, &prompt, &response);
            params.weights_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic.values[i] - numeric).abs() / analytic.values[i].abs().max(1e-3);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_on_both_tasks() {
    let bandit = Task::new(TaskSpec::arm_bandit(16, 8, 3)).unwrap();
    let digits = Task::new(TaskSpec::digit_sum(12, 3, 3)).unwrap();
    let eb = fd_max_rel_error(&bandit, 100);
    let ed = fd_max_rel_error(&digits, 100);
    assert!(eb <= 1e-5, "arm_bandit max rel error {eb}");
    assert!(ed <= 1e-5, "digit_sum max rel error {ed}");
}

#[test]
fn response_probabilities_sum_to_one() {
    for task in [
        Task::new(TaskSpec::arm_bandit(4, 8, 0)).unwrap(),
        Task::new(TaskSpec::digit_sum(4, 1, 0)).unwrap(),
        Task::new(TaskSpec::digit_sum(4, 2, 0)).unwrap(),
        Task::new(TaskSpec::digit_sum(3, 3, 0)).unwrap(),
    ] {
        let params = random_params(&task, 7, 2.0);
        let responses = all_responses(&task);
        for prompt in task.prompts() {
            let total: f64 = responses
                .iter()
                .map(|r| params.logprob(&task, prompt, r).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "{:?}: {total}", task.kind());
        }
    }
}

#[test]
fn expected_score_is_zero() {
    for task in [
        Task::new(TaskSpec::arm_bandit(4, 8, 0)).unwrap(),
        Task::new(TaskSpec::digit_sum(4, 2, 0)).unwrap(),
    ] {
        let params = random_params(&task, 11, 1.5);
        let prompt = task.prompt(1);
        let mut mean = vec![0.0; params.weights().len()];
        for r in all_responses(&task) {
            let w = params.logprob(&task, &prompt, &r).exp();
            for (m, g) in mean
                .iter_mut()
                .zip(params.grad_logprob(&task, &prompt, &r).values)
            {
                *m += w * g;
            }
        }
        let worst = mean.iter().fold(0.0f64, |a, m| a.max(m.abs()));
        assert!(worst < 1e-12, "{:?}: {worst}", task.kind());
    }
}

#[test]
fn sampled_logprob_matches_rescoring() {
    let task = Task::new(TaskSpec::digit_sum(8, 3, 1)).unwrap();
    let params = random_params(&task, 5, 1.0);
    let mut rng = substream(Purpose::Sample, &[5]);
    for prompt in task.prompts() {
        for _ in 0..20 {
            let r = params
                .sample_response(&task, prompt, 1.0, &mut rng)
                .unwrap();
            let rescored = params.logprob(&task, prompt, &r.response);
            assert!((rescored - r.total_logprob).abs() <= 1e-12);
        }
    }
}

#[test]
fn uniform_policy_samples_uniformly() {
    let task = Task::new(TaskSpec::arm_bandit(2, 8, 0)).unwrap();
    let params = PolicyParams::zeros(&task);
    let prompt: Prompt = task.prompt(0);
    let mut rng = substream(Purpose::Sample, &[42]);
    let n = 1_000_000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        let r = params
            .sample_response(&task, &prompt, 1.0, &mut rng)
            .unwrap();
        counts[r.response.tokens[0]] += 1;
    }
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((f - 0.125).abs() <= 0.005, "{f}");
    }
}

#[test]
fn temperature_sharpens_sampling() {
    let task = Task::new(TaskSpec::arm_bandit(2, 4, 0)).unwrap();
    let mut params = PolicyParams::zeros(&task);
    params.row_mut(0)[2] = 1.0;
    let prompt = task.prompt(0);
    let freq = |t: f64| {
        let mut rng = substream(Purpose::Sample, &[9]);
        let hits = (0..20_000)
            .filter(|_| {
                params
                    .sample_response(&task, &prompt, t, &mut rng)
                    .unwrap()
                    .response
                    .tokens[0]
                    == 2
            })
            .count();
        hits as f64 / 20_000.0
    };
    assert!(freq(0.25) > freq(1.0));
    assert!(freq(1.0) > freq(4.0));
}

#[test]
fn params_text_round_trip_is_exact() {
    let task = Task::new(TaskSpec::digit_sum(5, 2, 9)).unwrap();
    let params = random_params(&task, 3, 10.0);
    let mut buf = Vec::new();
    params.write_text(&mut buf).unwrap();
    let back = PolicyParams::read_text(&task, buf.as_slice()).unwrap();
    assert_eq!(back, params);
}
