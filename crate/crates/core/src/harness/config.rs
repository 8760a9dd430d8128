use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::net::{ModelConfig, ModelKind};
use crate::trainer::TrainConfig;

/// Flat JSON run configuration. Every key is optional; missing keys take
/// the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub map_size: usize,
    pub episode_len: usize,
    pub tasks: Vec<TaskId>,
    pub seed: u64,
    pub n_workers: usize,
    pub n_steps: usize,
    pub gamma: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub completion_coef: f64,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub clip_norm: Option<f64>,
    pub total_steps: u64,
    pub log_every: u64,
    pub success_window: Option<usize>,
    pub success_memory: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub env_hidden: usize,
    pub task_hidden: usize,
    pub embed_dim: usize,
    pub baseline_hidden: Option<usize>,
    /// Evaluation feeds the predicted completion back as `d_prev` instead of
    /// the environment's signal.
    pub use_predicted_completion: bool,
    /// Evaluation picks the most likely action instead of sampling.
    pub greedy: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        RunConfig {
            model: m.kind,
            map_size: t.map_size,
            episode_len: t.episode_len,
            tasks: t.tasks,
            seed: t.seed,
            n_workers: t.n_workers,
            n_steps: t.n_steps,
            gamma: t.gamma,
            value_coef: t.value_coef,
            entropy_coef: t.entropy_coef,
            completion_coef: t.completion_coef,
            learning_rate: t.learning_rate,
            rms_decay: t.rms_decay,
            rms_eps: t.rms_eps,
            clip_norm: t.clip_norm,
            total_steps: t.total_steps,
            log_every: t.log_every,
            success_window: t.success_window,
            success_memory: t.success_memory,
            conv1: m.conv1,
            conv2: m.conv2,
            env_hidden: m.env_hidden,
            task_hidden: m.task_hidden,
            embed_dim: m.embed_dim,
            baseline_hidden: m.baseline_hidden,
            use_predicted_completion: false,
            greedy: false,
        }
    }
}

impl RunConfig {
    /// Every accepted key, sorted.
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(RunConfig::default()) {
            Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
            _ => unreachable!("config serializes to an object"),
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        let keys = RunConfig::keys();
        let mut unknown: Vec<&str> = obj.keys().map(String::as_str).filter(|k| !keys.iter().any(|v| v == k)).collect();
        if !unknown.is_empty() {
            unknown.sort();
            return Err(Error::Config(format!(
                "unknown key(s) {}; valid keys: {}",
                unknown.join(", "),
                keys.join(", ")
            )));
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            conv1: self.conv1,
            conv2: self.conv2,
            env_hidden: self.env_hidden,
            task_hidden: self.task_hidden,
            embed_dim: self.embed_dim,
            baseline_hidden: self.baseline_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_workers: self.n_workers,
            n_steps: self.n_steps,
            gamma: self.gamma,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            completion_coef: self.completion_coef,
            learning_rate: self.learning_rate,
            rms_decay: self.rms_decay,
            rms_eps: self.rms_eps,
            clip_norm: self.clip_norm,
            total_steps: self.total_steps,
            seed: self.seed,
            episode_len: self.episode_len,
            map_size: self.map_size,
            tasks: self.tasks.clone(),
            log_every: self.log_every,
            success_window: self.success_window,
            success_memory: self.success_memory,
        }
    }
}
