//! Run configuration: one JSON document holding every knob of a run.
//!
//! Resolution order, lowest to highest precedence: built-in defaults, the
//! config file, the `WMFORGE_SEED` environment variable, dotted flag
//! overrides such as `--train.group_size 8`. Each section keeps its own
//! `seed` field as an offset; the seed a stage actually uses mixes it with
//! the global seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::DEFAULT_ETA;
use crate::datapipe::PipelineConfig;
use crate::envsim::SuiteConfig;
use crate::error::{Result, WmError};
use crate::lm::LmConfig;
use crate::trainer::{BaseConfig, Stage, TrainConfig};
use crate::util::{str_id, stream_seed};

pub const SEED_ENV_VAR: &str = "WMFORGE_SEED";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

/// Names accepted as keys of the `stages` section.
pub const STAGE_KEYS: [&str; 7] = ["pretrain", "filter", "wm_sft", "wmrl", "policy_rl", "rft", "distill"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Model,
    Oracle,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub runs: usize,
    /// Temperature-1 base-model episodes per evaluation task used to build
    /// the held-out next-state set.
    pub heldout_rollouts: usize,
    pub max_new_tokens: usize,
    /// Threshold for counting a weight pair as a major update.
    pub eta: f64,
    /// Also write `step,metric,value` CSV series next to JSON outputs.
    pub plot_data: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::Model,
            runs: 1,
            heldout_rollouts: 2,
            max_new_tokens: 48,
            eta: DEFAULT_ETA,
            plot_data: false,
        }
    }
}

/// Explicit input and output locations. Unset entries fall back to the
/// standard layout under `output_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub suite: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub heldout_trajectories: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub before: Option<PathBuf>,
    pub after: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Stage run by `train` when none is given on the command line.
    pub stage: Option<Stage>,
    pub suite: SuiteConfig,
    pub lm: LmConfig,
    pub base: BaseConfig,
    pub pipeline: PipelineConfig,
    /// Shared training hyperparameters.
    pub train: TrainConfig,
    /// Per-stage partial overrides of `train`.
    pub stages: BTreeMap<String, Value>,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

fn stage_defaults() -> BTreeMap<String, Value> {
    use serde_json::json;
    [
        ("pretrain", json!({"lr": 3e-3, "epochs": 6, "batch_size": 32})),
        ("filter", json!({"lr": 3e-3, "epochs": 8, "batch_size": 16})),
        ("wm_sft", json!({"lr": 2e-3, "epochs": 3, "batch_size": 16})),
        ("wmrl", json!({"lr": 3e-3, "steps": 150, "batch_size": 16})),
        ("policy_rl", json!({"lr": 1e-3, "steps": 20, "batch_size": 8})),
        ("rft", json!({"lr": 1e-3, "epochs": 3})),
        ("distill", json!({"lr": 3e-3, "epochs": 10})),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            stage: None,
            suite: SuiteConfig::default(),
            lm: LmConfig::default(),
            base: BaseConfig::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            stages: stage_defaults(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Recursively overlay `top` onto `base`; objects merge key by key, any
/// other value replaces.
pub fn deep_merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set `a.b.c` in a JSON tree, creating objects on the way. The value is
/// parsed as JSON when possible and kept as a string otherwise.
pub fn set_dotted(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(WmError::config(path, "malformed override path"));
    }
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Map::new());
            } else {
                return Err(WmError::config(parts[..i].join("."), "is not a section"));
            }
        }
        let map = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

fn from_value_at<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        WmError::config(path, e.into_inner().to_string())
    })
}

impl RunConfig {
    /// Defaults, then `file`, then the seed variable, then `overrides`.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut tree = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| WmError::config("config", format!("cannot read {}: {e}", path.display())))?;
            let user: Value = serde_json::from_str(&text)
                .map_err(|e| WmError::config("config", format!("invalid JSON in {}: {e}", path.display())))?;
            if !user.is_object() {
                return Err(WmError::config("config", "top level must be an object"));
            }
            deep_merge(&mut tree, user);
        }
        if let Some(raw) = env_seed {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| WmError::config("seed", format!("{SEED_ENV_VAR} is not an unsigned integer")))?;
            tree["seed"] = Value::from(seed);
        }
        for (path, raw) in overrides {
            set_dotted(&mut tree, path, raw)?;
        }
        let cfg: RunConfig = from_value_at(tree, "")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::resolve(Some(path), None, &[])
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dir.as_os_str().is_empty() {
            return Err(WmError::config("output_dir", "must not be empty"));
        }
        if self.suite.max_steps == 0 {
            return Err(WmError::config("suite.max_steps", "must be positive"));
        }
        self.lm.validate()?;
        self.pipeline.validate()?;
        self.train.validate()?;
        for key in self.stages.keys() {
            if !STAGE_KEYS.contains(&key.as_str()) {
                return Err(WmError::config(
                    format!("stages.{key}"),
                    format!("unknown stage; expected one of {}", STAGE_KEYS.join(", ")),
                ));
            }
            self.stage_config(key)?;
        }
        if !(0.0..=1.0).contains(&self.base.valid_action_prob) {
            return Err(WmError::config("base.valid_action_prob", "must lie in [0, 1]"));
        }
        if self.eval.runs == 0 {
            return Err(WmError::config("eval.runs", "must be positive"));
        }
        if !(self.eval.eta > 0.0 && self.eval.eta.is_finite()) {
            return Err(WmError::config("eval.eta", "must be positive"));
        }
        Ok(())
    }

    fn section_seed(&self, section: &str, offset: u64) -> u64 {
        stream_seed(self.seed, &[str_id(section), offset])
    }

    /// Training settings for `stage`: `train` overlaid with `stages.<stage>`,
    /// seeded from the global seed.
    pub fn stage_config(&self, stage: &str) -> Result<TrainConfig> {
        let mut tree = serde_json::to_value(&self.train)?;
        if let Some(over) = self.stages.get(stage) {
            if !over.is_object() {
                return Err(WmError::config(format!("stages.{stage}"), "must be an object"));
            }
            deep_merge(&mut tree, over.clone());
        }
        let mut cfg: TrainConfig = from_value_at(tree, &format!("stages.{stage}"))?;
        cfg.validate().map_err(|e| match e {
            WmError::ConfigError { path, message } => WmError::ConfigError {
                path: path.replacen("train.", &format!("stages.{stage}."), 1),
                message,
            },
            other => other,
        })?;
        cfg.seed = self.section_seed(stage, cfg.seed);
        Ok(cfg)
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            seed: self.section_seed("suite", self.suite.seed),
            ..self.suite.clone()
        }
    }

    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            seed: self.section_seed("lm", self.lm.seed),
            ..self.lm
        }
    }

    pub fn base_config(&self) -> BaseConfig {
        BaseConfig {
            seed: self.section_seed("base", self.base.seed),
            ..self.base.clone()
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.section_seed("pipeline", self.pipeline.seed),
            ..self.pipeline.clone()
        }
    }

    pub fn eval_seed(&self) -> u64 {
        self.section_seed("eval", 0)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.output_dir)
    }

    /// Pretty JSON of the fully resolved document; loading it with
    /// [`RunConfig::from_file`] yields an equal config.
    pub fn snapshot_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Standard artifact locations under an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.root.join(RESOLVED_CONFIG_FILE)
    }

    pub fn suite(&self) -> PathBuf {
        self.root.join("suite.json")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.json"))
    }

    pub fn data(&self, name: &str) -> PathBuf {
        self.root.join("data").join(format!("{name}.jsonl"))
    }

    pub fn metrics(&self, stage: &str) -> PathBuf {
        self.root.join("metrics").join(format!("{stage}.jsonl"))
    }

    pub fn metrics_csv(&self, stage: &str) -> PathBuf {
        self.root.join("metrics").join(format!("{stage}.csv"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(format!("{name}.json"))
    }

    pub fn final_metrics(&self) -> PathBuf {
        self.report("final_metrics")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn over(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_validate_and_snapshot_reloads() {
        let cfg = RunConfig::resolve(None, None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, cfg.snapshot_json().unwrap()).unwrap();
        assert_eq!(RunConfig::from_file(&p).unwrap(), cfg);
    }

    #[test]
    fn precedence_file_env_flag() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "train": {"group_size": 4, "lr": 0.5}}"#).unwrap();
        let cfg = RunConfig::resolve(Some(&p), None, &[]).unwrap();
        assert_eq!((cfg.seed, cfg.train.group_size, cfg.train.lr), (3, 4, 0.5));
        assert_eq!(cfg.train.batch_size, 16);
        let cfg = RunConfig::resolve(Some(&p), Some("9"), &over(&[("train.group_size", "8")])).unwrap();
        assert_eq!((cfg.seed, cfg.train.group_size), (9, 8));
        let cfg = RunConfig::resolve(Some(&p), Some("9"), &over(&[("seed", "11")])).unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn errors_carry_field_paths() {
        let path_of = |o: &[(&str, &str)]| match RunConfig::resolve(None, None, &over(o)) {
            Err(WmError::ConfigError { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(path_of(&[("train.group_size", "\"eight\"")]), "train.group_size");
        assert_eq!(path_of(&[("train.clip_eps", "3")]), "train.clip_eps");
        assert!(path_of(&[("train.bogus", "1")]).starts_with("train"));
        assert_eq!(path_of(&[("stages.wmrl.group_size", "1")]), "stages.wmrl.group_size");
        assert_eq!(path_of(&[("stages.nope.lr", "1")]), "stages.nope");
        assert_eq!(path_of(&[("pipeline.keep_prob", "2")]), "pipeline.keep_prob");
        assert!(matches!(
            RunConfig::resolve(None, Some("x"), &[]),
            Err(WmError::ConfigError { .. })
        ));
    }

    #[test]
    fn stage_overrides_merge_over_shared_settings() {
        let cfg = RunConfig::resolve(None, None, &over(&[("train.group_size", "4"), ("stages.wmrl.lr", "0.01")])).unwrap();
        let w = cfg.stage_config("wmrl").unwrap();
        assert_eq!((w.group_size, w.lr, w.steps), (4, 0.01, 150));
        let p = cfg.stage_config("policy_rl").unwrap();
        assert_eq!((p.group_size, p.batch_size), (4, 8));
        assert_ne!(w.seed, p.seed);
        let other = RunConfig { seed: 1, ..cfg.clone() };
        assert_ne!(other.stage_config("wmrl").unwrap().seed, w.seed);
    }

    #[test]
    fn dotted_paths() {
        let mut v = serde_json::json!({"a": {"b": 1}});
        set_dotted(&mut v, "a.c.d", "true").unwrap();
        set_dotted(&mut v, "a.b", "hello").unwrap();
        assert_eq!(v, serde_json::json!({"a": {"b": "hello", "c": {"d": true}}}));
        assert!(set_dotted(&mut v, "a.b.x", "1").is_err());
        assert!(set_dotted(&mut v, "a..b", "1").is_err());
    }
}
