use serde::{Deserialize, Serialize};

use crate::env::{Action, TaskId, CHANNELS, VIEW};
use crate::error::{Error, Result};

/// Largest relative parameter-count gap tolerated between a baseline and
/// the SEM network it is compared against.
pub const PARITY_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Episodic LSTM plus task-conditioned factorized LSTM.
    Sem,
    /// One LSTM on `[ô, v_g]`, trained on single-task episodes, state reset
    /// on every completion.
    Multitask,
    /// One LSTM on `[ô, v_g]` trained with chained tasks; state reset only at
    /// episode end.
    BaselineConcat,
    /// One factorized LSTM on `ô` conditioned on `v_g`.
    BaselineFactorized,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Sem,
        ModelKind::Multitask,
        ModelKind::BaselineConcat,
        ModelKind::BaselineFactorized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sem => "sem",
            ModelKind::Multitask => "multitask",
            ModelKind::BaselineConcat => "baseline_concat",
            ModelKind::BaselineFactorized => "baseline_factorized",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown model {s:?}; valid models: {}",
                ModelKind::ALL.map(ModelKind::name).join(", ")
            ))
        })
    }

    /// Whether the recurrent state is cleared on the completion signal.
    pub fn resets_on_completion(self) -> bool {
        self == ModelKind::Multitask
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer sizes. Observation geometry and the action/task counts come from
/// the environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub conv1: usize,
    pub conv2: usize,
    pub env_hidden: usize,
    pub task_hidden: usize,
    /// Task embedding width, also the rank of every factorized LSTM.
    pub embed_dim: usize,
    /// Recurrent width of the single-core baselines. `None` solves for
    /// parameter parity with the SEM network of the same sizes.
    pub baseline_hidden: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Sem,
            conv1: 16,
            conv2: 32,
            env_hidden: 128,
            task_hidden: 128,
            embed_dim: 32,
            baseline_hidden: None,
        }
    }
}

impl ModelConfig {
    pub fn of_kind(kind: ModelKind) -> Self {
        ModelConfig { kind, ..Self::default() }
    }

    /// Narrow layers for finite-difference checks.
    pub fn tiny(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            conv1: 2,
            conv2: 2,
            env_hidden: 5,
            task_hidden: 4,
            embed_dim: 3,
            baseline_hidden: Some(6),
        }
    }

    pub fn with_kind(&self, kind: ModelKind) -> Self {
        ModelConfig { kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.conv1, self.conv2, self.env_hidden, self.task_hidden, self.embed_dim];
        if sizes.contains(&0) || self.baseline_hidden == Some(0) {
            return Err(Error::Config("model layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn conv_out(&self) -> usize {
        VIEW * VIEW * self.conv2
    }

    /// Width of `ô = [E_obs(o), carrying, d_prev, a_prev]`.
    pub fn obs_dim(&self) -> usize {
        self.conv_out() + 2 + 1 + Action::COUNT
    }

    /// Hidden width of the single recurrent core of a baseline.
    pub fn core_hidden(&self) -> usize {
        match self.kind {
            ModelKind::Sem => self.env_hidden,
            _ => self.baseline_hidden.unwrap_or_else(|| self.parity_hidden()),
        }
    }

    /// Input width of the heads.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            ModelKind::Sem => self.env_hidden + self.task_hidden,
            _ => self.core_hidden(),
        }
    }

    /// Scalar parameter count implied by the sizes (no allocation).
    pub fn param_count(&self) -> usize {
        self.count_with_hidden(self.core_hidden())
    }

    fn count_with_hidden(&self, hidden: usize) -> usize {
        let shared = self.conv1 * (CHANNELS * 9 + 1) + self.conv2 * (self.conv1 * 9 + 1) + TaskId::COUNT * self.embed_dim;
        let od = self.obs_dim();
        let r = self.embed_dim;
        let core = match self.kind {
            ModelKind::Sem => {
                let (he, ht) = (self.env_hidden, self.task_hidden);
                4 * he * (od + he) + 4 * he + 4 * ht * r + r * (od + he + ht) + 4 * ht
            }
            ModelKind::Multitask | ModelKind::BaselineConcat => 4 * hidden * (od + r + hidden) + 4 * hidden,
            ModelKind::BaselineFactorized => 4 * hidden * r + r * (od + hidden) + 4 * hidden,
        };
        let feat = match self.kind {
            ModelKind::Sem => self.env_hidden + self.task_hidden,
            _ => hidden,
        };
        let heads = (Action::COUNT + 2) * (feat + 1);
        shared + core + heads
    }

    /// Baseline width whose parameter count is closest to the SEM network
    /// with the same encoder, embedding and SEM widths.
    pub fn parity_hidden(&self) -> usize {
        let target = self.with_kind(ModelKind::Sem).param_count() as f64;
        let gap = |h: usize| (self.count_with_hidden(h) as f64 - target).abs();
        // Counts grow monotonically in the width, so stop once past target.
        let mut best = 1;
        for h in 1..=65_536 {
            if gap(h) < gap(best) {
                best = h;
            }
            if self.count_with_hidden(h) as f64 > target {
                break;
            }
        }
        best
    }

    /// Relative gap to the SEM parameter count.
    pub fn parity_gap(&self) -> f64 {
        let sem = self.with_kind(ModelKind::Sem).param_count() as f64;
        (self.param_count() as f64 - sem).abs() / sem
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::parse(k.name()).unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!(ModelKind::parse("lstm").is_err());
    }

    #[test]
    fn baselines_are_sized_for_parity() {
        for k in [ModelKind::Multitask, ModelKind::BaselineConcat, ModelKind::BaselineFactorized] {
            let cfg = ModelConfig::of_kind(k);
            assert!(cfg.parity_gap() <= PARITY_TOLERANCE, "{k}: gap {}", cfg.parity_gap());
        }
    }

    #[test]
    fn zero_sizes_rejected() {
        let cfg = ModelConfig {
            env_hidden: 0,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
