//! Experiment configuration: presets, config files, env overrides.
//!
//! A config file is TOML (dotted key paths to scalars) or the equivalent
//! JSON. Resolution order, later wins:
//!
//! 1. the preset (`paper`, `desk`, or `symmetric`),
//! 2. the file,
//! 3. environment variables `NOISY_RLVR_<PATH>` where `<PATH>` is the key
//!    path upper-cased with `__` between segments, e.g.
//!    `NOISY_RLVR_TRAIN__GRPO__LEARNING_RATE=0.02`,
//! 4. command-line flags.
//!
//! A run manifest written by `train` is also accepted as a config file; its
//! `config` section is used verbatim and its `run` section supplies defaults
//! for `--p`, `--x`, `--group-size` and `--seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::envs::TaskSpec;
use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;
use crate::noise::DEFAULT_LEVELS;
use crate::sweep::{Decoding, EvalSplit, SweepConfig, TrainConfig};

pub const ENV_PREFIX: &str = "NOISY_RLVR_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full-scale LLM hyperparameters: lr 5e-6, one pass, one seed, 6×6×{8,16,32}.
    Paper,
    /// Desk-scale learning rate, multiple passes, five seeds, expected-accuracy
    /// evaluation.
    Desk,
    /// Desk settings on the symmetric grid p = x with G ∈ {4, 8, 16, 32, 64}.
    Symmetric,
}

/// Passes over the 64 ArmBandit contexts in the desk presets (2 steps each,
/// 240 steps in total). Long enough for the noise-free run to plateau, short
/// enough that noisy runs are still separated.
pub const DESK_PASSES: usize = 120;

/// Grid portion of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub noise_levels: Vec<f64>,
    pub symmetric: bool,
    pub group_sizes: Vec<usize>,
    pub seeds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub output_dir: PathBuf,
    pub global_seed: u64,
    pub task: TaskSpec,
    pub sweep: GridSpec,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let task = TaskSpec::arm_bandit(64, 8, 0);
        let base_train = TrainConfig {
            n_train: 64,
            n_val: 0,
            eval_split: EvalSplit::Train,
            ..TrainConfig::default()
        };
        let desk_train = TrainConfig {
            grpo: GrpoConfig::desk(),
            passes: DESK_PASSES,
            eval_decoding: Decoding::Expected,
            ..base_train.clone()
        };
        let grid = GridSpec {
            noise_levels: DEFAULT_LEVELS.to_vec(),
            symmetric: false,
            group_sizes: vec![8, 16, 32],
            seeds: 1,
        };
        let (sweep, train) = match preset {
            Preset::Paper => (grid, base_train),
            Preset::Desk => (GridSpec { seeds: 5, ..grid }, desk_train),
            Preset::Symmetric => (
                GridSpec {
                    symmetric: true,
                    group_sizes: vec![4, 8, 16, 32, 64],
                    seeds: 5,
                    ..grid
                },
                desk_train,
            ),
        };
        ExperimentConfig {
            preset,
            output_dir: PathBuf::from("out"),
            global_seed: 0,
            task,
            sweep,
            train,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            noise_levels: self.sweep.noise_levels.clone(),
            symmetric: self.sweep.symmetric,
            group_sizes: self.sweep.group_sizes.clone(),
            seeds: self.sweep.seeds,
            global_seed: self.global_seed,
            task: self.task.clone(),
            train: self.train.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep_config().validate()
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Run parameters recorded in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub p: f64,
    pub x: f64,
    pub group_size: usize,
    pub seed: u64,
}

/// Command-line overrides applied last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub output_dir: Option<PathBuf>,
    pub global_seed: Option<u64>,
}

/// A resolved config plus, when loaded from a manifest, its run parameters.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub manifest_run: Option<ManifestRun>,
}

/// Resolves the config from an optional file, environment, and flags.
pub fn load(
    path: Option<&Path>,
    overrides: &Overrides,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<Loaded> {
    let mut file_value = match path {
        Some(p) => read_value(p)?,
        None => Value::Object(Map::new()),
    };

    let mut manifest_run = None;
    if file_value.get("manifest_version").is_some() {
        manifest_run = Some(
            serde_json::from_value(file_value.get("run").cloned().unwrap_or(Value::Null))
                .map_err(|e| Error::config("run", e.to_string()))?,
        );
        file_value = file_value.get("config").cloned().unwrap_or(Value::Null);
    }

    let preset = match (overrides.preset, file_value.get("preset")) {
        (Some(p), _) => p,
        (None, Some(v)) => {
            serde_json::from_value(v.clone()).map_err(|e| Error::config("preset", e.to_string()))?
        }
        (None, None) => Preset::Desk,
    };

    let mut value = ExperimentConfig::preset(preset).to_json();
    merge(&mut value, file_value);
    for (key, raw) in env {
        if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
            let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
            set_path(&mut value, &path, parse_scalar(&raw))?;
        }
    }
    value["preset"] = serde_json::to_value(preset)?;
    if let Some(dir) = &overrides.output_dir {
        value["output_dir"] = Value::String(dir.to_string_lossy().into_owned());
    }
    if let Some(seed) = overrides.global_seed {
        value["global_seed"] = Value::from(seed);
    }

    let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        Error::config(field, e.inner().to_string())
    })?;
    config.validate()?;
    Ok(Loaded {
        config,
        manifest_run,
    })
}

fn read_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| Error::Parse {
        path: path.display().to_string(),
        message,
    })
}

/// Deep-merges `overlay` into `base`; non-object values replace.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, path: &[String], v: Value) -> Result<()> {
    let mut cur = root;
    for (i, seg) in path.iter().enumerate() {
        let Value::Object(map) = cur else {
            return Err(Error::config(path[..i].join("."), "is not a table"));
        };
        if i + 1 == path.len() {
            map.insert(seg.clone(), v);
            return Ok(());
        }
        cur = map
            .entry(seg.clone())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Env values parse as JSON when possible (numbers, booleans, arrays),
/// otherwise as plain strings.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        path
    }

    #[test]
    fn presets_validate() {
        for p in [Preset::Paper, Preset::Desk, Preset::Symmetric] {
            ExperimentConfig::preset(p).validate().unwrap();
        }
        assert_eq!(
            ExperimentConfig::preset(Preset::Paper)
                .sweep_config()
                .keys()
                .len(),
            108
        );
        assert_eq!(
            ExperimentConfig::preset(Preset::Symmetric)
                .sweep_config()
                .keys()
                .len(),
            30 * 5
        );
    }

    #[test]
    fn toml_and_json_are_interchangeable() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(
            dir.path(),
            "c.toml",
            "preset = \"paper\"\nglobal_seed = 9\ntrain.grpo.learning_rate = 0.05\nsweep.seeds = 2\n",
        );
        let j = write(
            dir.path(),
            "c.json",
            r#"{"preset":"paper","global_seed":9,"train":{"grpo":{"learning_rate":0.05}},"sweep":{"seeds":2}}"#,
        );
        let a = load(Some(&t), &Overrides::default(), []).unwrap().config;
        let b = load(Some(&j), &Overrides::default(), []).unwrap().config;
        assert_eq!(a, b);
        assert_eq!(a.train.grpo.learning_rate, 0.05);
        assert_eq!(a.train.grpo.kl_coeff, 0.01);
    }

    #[test]
    fn env_and_flags_override() {
        let env = vec![
            (
                "NOISY_RLVR_TRAIN__GRPO__LEARNING_RATE".to_string(),
                "0.2".to_string(),
            ),
            ("NOISY_RLVR_TASK__KIND".to_string(), "digit_sum".to_string()),
            ("NOISY_RLVR_TRAIN__N_VAL".to_string(), "16".to_string()),
            ("NOISY_RLVR_TRAIN__N_TRAIN".to_string(), "48".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ];
        let overrides = Overrides {
            global_seed: Some(77),
            ..Default::default()
        };
        let c = load(None, &overrides, env).unwrap().config;
        assert_eq!(c.train.grpo.learning_rate, 0.2);
        assert_eq!(c.task.kind, crate::envs::TaskKind::DigitSum);
        assert_eq!(c.global_seed, 77);
    }

    #[test]
    fn errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "c.toml", "train.grpo.learning_rat = 0.05\n");
        let err = load(Some(&t), &Overrides::default(), []).unwrap_err();
        assert!(err.to_string().contains("learning_rat"), "{err}");

        let t = write(dir.path(), "d.toml", "train.grpo.clip_eps = 1.5\n");
        let err = load(Some(&t), &Overrides::default(), []).unwrap_err();
        assert!(err.to_string().contains("clip_eps"), "{err}");

        let t = write(dir.path(), "e.toml", "task.context_count = \"many\"\n");
        let err = load(Some(&t), &Overrides::default(), []).unwrap_err();
        assert!(err.to_string().contains("task.context_count"), "{err}");
    }
}
