//! Training runs, evaluation, and the `(p, x, G, seed)` grid.
//!
//! # Output layout
//!
//! ```text
//! <out>/records.csv                 one row per (task, p, x, G, seed)
//! <out>/runs/<run key>/trace.csv    step,val_accuracy
//! <out>/runs/<run key>/metrics.csv  step,lr_factor,mean_noisy_reward,mean_true_reward,kl_mean,grad_norm
//! ```
//!
//! Records are appended as runs finish and the file is rewritten in canonical
//! order (task, p, x, G, seed) once the grid completes, so its bytes do not
//! depend on the number of workers. Rerunning over an existing table skips
//! every key already present.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::envs::{Prompt, Task, TaskSpec};
use crate::error::{Error, Result};
use crate::grpo::{grpo_step, GrpoConfig, StepInputs, StepMetrics};
use crate::noise::{NoiseSpec, DEFAULT_LEVELS};
use crate::optim::OptimizerState;
use crate::policy::{PolicyParams, ReferenceParams};
use crate::rng::{self, substream, Purpose};

/// Prompts evaluated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    /// Held-out validation prompts.
    Validation,
    /// The training prompts themselves. Used for ArmBandit, whose tabular
    /// policy has no parameters shared across contexts.
    Train,
}

/// Decoding used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    Greedy,
    /// One temperature-1 sample per prompt.
    Sampled,
    /// Exact success probability under temperature-1 sampling, averaged
    /// over prompts. The noise-free expectation of `Sampled`.
    Expected,
}

/// Per-run training and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub grpo: GrpoConfig,
    /// Passes over the training prompts. One pass is one epoch.
    pub passes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub split_seed: u64,
    pub eval_split: EvalSplit,
    pub eval_decoding: Decoding,
    pub eval_every: u64,
    pub threshold: f64,
    pub stability_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            grpo: GrpoConfig::default(),
            passes: 1,
            n_train: 48,
            n_val: 16,
            split_seed: 0,
            eval_split: EvalSplit::Validation,
            eval_decoding: Decoding::Greedy,
            eval_every: 10,
            threshold: 0.5,
            stability_window: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, task: &TaskSpec) -> Result<()> {
        self.grpo.validate()?;
        if self.passes < 1 {
            return Err(Error::config("train.passes", "must be at least 1"));
        }
        if self.eval_every < 1 {
            return Err(Error::config("train.eval_every", "must be at least 1"));
        }
        if self.stability_window < 1 {
            return Err(Error::config(
                "train.stability_window",
                "must be at least 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("train.threshold", "must lie in [0, 1]"));
        }
        if self.n_train < 1 {
            return Err(Error::config("train.n_train", "must be at least 1"));
        }
        if self.n_train + self.n_val > task.context_count {
            return Err(Error::config(
                "train.n_train",
                format!(
                    "n_train + n_val = {} exceeds task.context_count = {}",
                    self.n_train + self.n_val,
                    task.context_count
                ),
            ));
        }
        if self.eval_split == EvalSplit::Validation && self.n_val < 1 {
            return Err(Error::config(
                "train.n_val",
                "validation evaluation needs n_val >= 1",
            ));
        }
        Ok(())
    }

    /// Optimizer steps in one run.
    pub fn total_steps(&self) -> u64 {
        (self.passes * self.n_train.div_ceil(self.grpo.batch_prompts)) as u64
    }
}

/// The grid and everything needed to run one cell of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub noise_levels: Vec<f64>,
    /// Only run cells with `p == x`.
    pub symmetric: bool,
    pub group_sizes: Vec<usize>,
    pub seeds: u64,
    pub global_seed: u64,
    pub task: TaskSpec,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            noise_levels: DEFAULT_LEVELS.to_vec(),
            symmetric: false,
            group_sizes: vec![8, 16, 32],
            seeds: 1,
            global_seed: 0,
            task: TaskSpec::arm_bandit(64, 8, 0),
            train: TrainConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.train.validate(&self.task)?;
        crate::noise::noise_grid(&self.noise_levels)?;
        if self.group_sizes.is_empty() {
            return Err(Error::config("sweep.group_sizes", "must not be empty"));
        }
        if let Some(g) = self.group_sizes.iter().find(|&&g| g < 2) {
            return Err(Error::config(
                "sweep.group_sizes",
                format!("group size {g} is below 2"),
            ));
        }
        if self.seeds < 1 {
            return Err(Error::config("sweep.seeds", "must be at least 1"));
        }
        Ok(())
    }

    /// Every grid cell in canonical order: p, then x, then G, then seed.
    pub fn keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for &p in &self.noise_levels {
            for &x in &self.noise_levels {
                if self.symmetric && p != x {
                    continue;
                }
                for &group_size in &self.group_sizes {
                    for seed in 0..self.seeds {
                        keys.push(RunKey {
                            p,
                            x,
                            group_size,
                            seed,
                        });
                    }
                }
            }
        }
        keys
    }
}

/// Identifies one run in the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub p: f64,
    pub x: f64,
    pub group_size: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.p, self.x)
    }

    /// Seed for all of this run's random streams.
    pub fn run_seed(&self, global_seed: u64) -> u64 {
        rng::mix(&[
            global_seed,
            self.p.to_bits(),
            self.x.to_bits(),
            self.group_size as u64,
            self.seed,
        ])
    }

    /// Directory name for this run's artifacts.
    pub fn dir_name(&self, task: &str) -> String {
        format!(
            "{task}_p{}_x{}_G{}_seed{}",
            self.p, self.x, self.group_size, self.seed
        )
    }
}

/// Validation accuracy over the course of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalTrace {
    pub points: Vec<(u64, f64)>,
}

impl EvalTrace {
    pub fn push(&mut self, step: u64, accuracy: f64) {
        debug_assert!(self.points.last().is_none_or(|&(s, _)| s < step));
        self.points.push((step, accuracy));
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.points.last().map(|&(_, a)| a)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.points.iter().map(|&(_, a)| a).reduce(f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "val_accuracy"])?;
        for (s, a) in &self.points {
            w.write_record([s.to_string(), a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One row of the records table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Task kind, or any free-text tag for externally produced tables.
    pub task: String,
    pub p: f64,
    pub x: f64,
    #[serde(rename = "G")]
    pub group_size: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub final_accuracy: Option<f64>,
    pub best_accuracy: Option<f64>,
    pub steps_to_threshold: Option<u64>,
    pub stability: Option<f64>,
    pub wall_steps: u64,
}

impl EvalRecord {
    pub fn key(&self) -> RunKey {
        RunKey {
            p: self.p,
            x: self.x,
            group_size: self.group_size,
            seed: self.seed,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    fn sort_key(&self) -> impl Ord + '_ {
        (
            &self.task,
            ordered(self.p),
            ordered(self.x),
            self.group_size,
            self.seed,
        )
    }
}

fn ordered(v: f64) -> i64 {
    // Total order on finite floats, matching f64::total_cmp.
    let bits = v.to_bits() as i64;
    bits ^ (((bits >> 63) as u64) >> 1) as i64
}

/// Sorts records canonically by (task, p, x, G, seed).
pub fn sort_records(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Fraction of `prompts` whose decoded response passes the exact verifier.
pub fn eval_accuracy(params: &PolicyParams, task: &Task, prompts: &[Prompt]) -> f64 {
    eval_accuracy_with(params, task, prompts, Decoding::Greedy, 0)
}

/// As [`eval_accuracy`], with a choice of decoding. `stream_seed` keys the
/// sampling streams and is ignored for greedy decoding.
pub fn eval_accuracy_with(
    params: &PolicyParams,
    task: &Task,
    prompts: &[Prompt],
    decoding: Decoding,
    stream_seed: u64,
) -> f64 {
    assert!(!prompts.is_empty(), "evaluation needs at least one prompt");
    if decoding == Decoding::Expected {
        let total: f64 = prompts
            .iter()
            .map(|p| params.success_probability(task, p))
            .sum();
        return total / prompts.len() as f64;
    }
    let correct = prompts
        .iter()
        .enumerate()
        .filter(|(i, prompt)| {
            let response = match decoding {
                Decoding::Greedy | Decoding::Expected => params.greedy_response(task, prompt),
                Decoding::Sampled => {
                    let mut rng = substream(Purpose::Eval, &[stream_seed, *i as u64]);
                    match params.sample_response(task, prompt, 1.0, &mut rng) {
                        Ok(r) => r.response,
                        Err(_) => return false,
                    }
                }
            };
            task.verify_exact(prompt, &response).is_correct()
        })
        .count();
    correct as f64 / prompts.len() as f64
}

/// First step reaching `threshold`, and the population standard deviation
/// of the trailing `window` accuracies (the whole trace if shorter).
pub fn curve_metrics(trace: &EvalTrace, threshold: f64, window: usize) -> (Option<u64>, f64) {
    assert!(
        !trace.points.is_empty(),
        "curve metrics need a nonempty trace"
    );
    let steps_to_threshold = trace
        .points
        .iter()
        .find(|&&(_, a)| a >= threshold)
        .map(|&(s, _)| s);
    let tail = &trace.points[trace.points.len().saturating_sub(window.max(1))..];
    let n = tail.len() as f64;
    let mean = tail.iter().map(|&(_, a)| a).sum::<f64>() / n;
    let var = tail.iter().map(|&(_, a)| (a - mean).powi(2)).sum::<f64>() / n;
    (steps_to_threshold, var.sqrt())
}

/// Everything a single training run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: EvalRecord,
    pub trace: EvalTrace,
    pub metrics: Vec<StepMetrics>,
    pub params: PolicyParams,
    /// Present when training stopped on a numerical failure.
    pub failure: Option<String>,
}

/// Trains one `(p, x, G, seed)` configuration from the uniform policy.
///
/// Evaluates before the first update, every `eval_every` updates, and after
/// the last one. A numerical failure ends training early and yields a record
/// with status `failed`.
pub fn run_config(
    task: &Task,
    key: RunKey,
    cfg: &TrainConfig,
    global_seed: u64,
) -> Result<RunOutput> {
    cfg.validate(task.spec())?;
    let noise = key.noise()?;
    let mut grpo = cfg.grpo.clone();
    grpo.group_size = key.group_size;
    grpo.validate()?;

    let split = task.split_dataset(cfg.n_train, cfg.n_val, cfg.split_seed)?;
    let eval_prompts = match cfg.eval_split {
        EvalSplit::Validation => &split.validation,
        EvalSplit::Train => &split.train,
    };
    let run_seed = key.run_seed(global_seed);
    let mut params = PolicyParams::zeros(task);
    let reference = ReferenceParams::snapshot(&params);
    let mut opt = OptimizerState::new(params.weights().len());
    let total_steps = cfg.total_steps();

    let evaluate = |params: &PolicyParams, step: u64| {
        eval_accuracy_with(
            params,
            task,
            eval_prompts,
            cfg.eval_decoding,
            rng::mix(&[run_seed, step]),
        )
    };

    let mut trace = EvalTrace::default();
    let mut metrics = Vec::with_capacity(total_steps as usize);
    let mut failure = None;
    trace.push(0, evaluate(&params, 0));

    let mut step = 0u64;
    'passes: for pass in 0..cfg.passes {
        let mut order = split.train.clone();
        rand::seq::SliceRandom::shuffle(
            order.as_mut_slice(),
            &mut substream(Purpose::Shuffle, &[run_seed, pass as u64]),
        );
        for batch in order.chunks(grpo.batch_prompts) {
            let inputs = StepInputs {
                task,
                reference: &reference,
                noise,
                cfg: &grpo,
                run_seed,
                step,
            };
            match grpo_step(&mut params, &mut opt, batch, &inputs) {
                Ok(m) => metrics.push(m),
                Err(e) if e.is_numerical() => {
                    failure = Some(e.to_string());
                    break 'passes;
                }
                Err(e) => return Err(e),
            }
            step += 1;
            if step.is_multiple_of(cfg.eval_every) || step == total_steps {
                trace.push(step, evaluate(&params, step));
            }
        }
    }

    let record = if failure.is_none() {
        let (steps_to_threshold, stability) =
            curve_metrics(&trace, cfg.threshold, cfg.stability_window);
        EvalRecord {
            task: task.kind().to_string(),
            p: key.p,
            x: key.x,
            group_size: key.group_size,
            seed: key.seed,
            status: RunStatus::Ok,
            final_accuracy: trace.final_accuracy(),
            best_accuracy: trace.best_accuracy(),
            steps_to_threshold,
            stability: Some(stability),
            wall_steps: step,
        }
    } else {
        EvalRecord {
            task: task.kind().to_string(),
            p: key.p,
            x: key.x,
            group_size: key.group_size,
            seed: key.seed,
            status: RunStatus::Failed,
            final_accuracy: None,
            best_accuracy: None,
            steps_to_threshold: None,
            stability: None,
            wall_steps: step,
        }
    };
    Ok(RunOutput {
        record,
        trace,
        metrics,
        params,
        failure,
    })
}

/// Writes the per-step training log.
pub fn write_metrics_csv(metrics: &[StepMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "lr_factor",
        "mean_noisy_reward",
        "mean_true_reward",
        "kl_mean",
        "grad_norm",
    ])?;
    for m in metrics {
        w.write_record([
            m.step.to_string(),
            m.lr_factor.to_string(),
            m.mean_noisy_reward.to_string(),
            m.mean_true_reward.to_string(),
            m.kl_mean.to_string(),
            m.grad_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in records {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Where [`run_grid`] puts its files.
#[derive(Debug, Clone)]
pub struct GridOutput {
    pub dir: PathBuf,
}

impl GridOutput {
    pub fn records_path(&self) -> PathBuf {
        self.dir.join("records.csv")
    }

    pub fn run_dir(&self, task: &str, key: &RunKey) -> PathBuf {
        self.dir.join("runs").join(key.dir_name(task))
    }
}

/// Runs every grid cell not already in the records table.
///
/// `workers` caps the thread count. `on_record` sees each record as it
/// finishes (for progress output). With `output`, records are appended to
/// `records.csv` as they complete, per-run trace and metrics CSVs are
/// written, and the table is canonically re-sorted at the end. Returns the
/// full sorted table, including rows from earlier invocations.
pub fn run_grid(
    sweep: &SweepConfig,
    workers: usize,
    output: Option<&GridOutput>,
    on_record: &(dyn Fn(&EvalRecord) + Sync),
) -> Result<Vec<EvalRecord>> {
    sweep.validate()?;
    let task = Task::new(sweep.task.clone())?;
    let tag = task.kind().to_string();

    let mut existing = Vec::new();
    if let Some(out) = output {
        fs::create_dir_all(&out.dir)?;
        let path = out.records_path();
        if path.exists() && fs::metadata(&path)?.len() > 0 {
            existing = read_records(&path)?;
        }
    }
    let done: HashSet<(String, u64, u64, usize, u64)> = existing
        .iter()
        .map(|r| {
            (
                r.task.clone(),
                r.p.to_bits(),
                r.x.to_bits(),
                r.group_size,
                r.seed,
            )
        })
        .collect();
    let pending: Vec<RunKey> = sweep
        .keys()
        .into_iter()
        .filter(|k| {
            !done.contains(&(
                tag.clone(),
                k.p.to_bits(),
                k.x.to_bits(),
                k.group_size,
                k.seed,
            ))
        })
        .collect();

    let appender = match output {
        Some(out) => {
            let path = out.records_path();
            let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            Some(Mutex::new(
                csv::WriterBuilder::new()
                    .has_headers(fresh)
                    .from_writer(file),
            ))
        }
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;

    let finish = |out: RunOutput| -> Result<EvalRecord> {
        if let (Some(dir), Some(appender)) = (output, appender.as_ref()) {
            let run_dir = dir.run_dir(&tag, &out.record.key());
            fs::create_dir_all(&run_dir)?;
            out.trace.write_csv(&run_dir.join("trace.csv"))?;
            write_metrics_csv(&out.metrics, &run_dir.join("metrics.csv"))?;
            let mut w = appender.lock().expect("records writer poisoned");
            w.serialize(&out.record)?;
            w.flush()?;
        }
        on_record(&out.record);
        Ok(out.record)
    };

    let fresh: Vec<EvalRecord> = pool.install(|| {
        use rayon::prelude::*;
        pending
            .par_iter()
            .map(|&key| run_config(&task, key, &sweep.train, sweep.global_seed).and_then(&finish))
            .collect::<Result<_>>()
    })?;
    drop(appender);

    let mut all = existing;
    all.extend(fresh);
    sort_records(&mut all);
    if let Some(out) = output {
        write_records(&all, &out.records_path())?;
    }
    Ok(all)
}
