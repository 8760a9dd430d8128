use std::io::Write;
use std::path::Path;

use super::agent::NetworkAgent;
use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::eval::{eval_by_appearance, EvalOptions, EvalReport};
use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::trainer::{finetune_continual, IterationLog, Trainer};

impl RunConfig {
    /// 8×8 maps with 200-step episodes and a 3M-step budget.
    pub fn desk_scale() -> RunConfig {
        RunConfig {
            map_size: 8,
            episode_len: 200,
            total_steps: 3_000_000,
            log_every: 100,
            ..RunConfig::default()
        }
    }

    /// Freshly initialized network for this configuration.
    pub fn network(&self) -> Result<Network<f32>> {
        Network::new(self.model_config(), self.seed)
    }

    pub fn eval_options(&self, runs: usize) -> EvalOptions {
        EvalOptions {
            tasks: self.tasks.clone(),
            success_window: self.success_window,
            ..EvalOptions::new(runs, self.map_size, self.episode_len, self.seed)
        }
    }
}

/// Trains a new network under `cfg`, handing every log record to `on_log`.
pub fn train(cfg: &RunConfig, on_log: impl FnMut(&IterationLog) -> Result<()>) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(cfg.network()?, cfg.train_config())?;
    trainer.run(on_log)?;
    let steps = trainer.steps_done();
    Ok(Checkpoint::new(&trainer.into_network(), cfg, &cfg.tasks, steps))
}

/// Continual-learning stage on top of a pre-trained checkpoint: only the
/// heads and the task embedding train, on all seven tasks.
pub fn finetune(
    base: &Checkpoint,
    budget: u64,
    seed: Option<u64>,
    on_log: impl FnMut(&IterationLog) -> Result<()>,
) -> Result<Checkpoint> {
    let mut cfg = base.manifest.config.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let trainer = finetune_continual(base.network()?, &base.manifest.trained_tasks, &cfg.train_config(), budget, on_log)?;
    let steps = trainer.steps_done();
    cfg.tasks = TaskId::ALL.to_vec();
    cfg.total_steps = budget;
    Ok(Checkpoint::new(&trainer.into_network(), &cfg, &TaskId::ALL, base.manifest.steps + steps))
}

/// Table of completion steps by appearance for a checkpoint, using its
/// evaluation flags.
pub fn evaluate(ckpt: &Checkpoint, opts: &EvalOptions) -> Result<EvalReport> {
    let net = ckpt.network()?;
    let mut agent = NetworkAgent::new(&net, opts.seed);
    agent.greedy = ckpt.manifest.config.greedy;
    agent.use_predicted_completion = ckpt.manifest.config.use_predicted_completion;
    eval_by_appearance(&mut agent, opts)
}

/// Appends log records to `path` as line-delimited JSON.
pub struct JsonLog {
    file: std::io::BufWriter<std::fs::File>,
    path: std::path::PathBuf,
}

impl JsonLog {
    pub fn create(path: &Path) -> Result<JsonLog> {
        let file = std::fs::File::create(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(JsonLog {
            file: std::io::BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, log: &IterationLog) -> Result<()> {
        let line = serde_json::to_string(log)?;
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|source| Error::File {
                path: self.path.clone(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_training_returns_the_initial_network() {
        let cfg = RunConfig {
            total_steps: 0,
            ..RunConfig::desk_scale()
        };
        let ckpt = train(&cfg, |_| Ok(())).unwrap();
        assert_eq!(ckpt.manifest.steps, 0);
        assert_eq!(ckpt.params, cfg.network().unwrap().params().clone());
    }

    #[test]
    fn evaluation_uses_the_configured_tasks() {
        let cfg = RunConfig {
            tasks: TaskId::ALL.to_vec(),
            ..RunConfig::desk_scale()
        };
        let opts = cfg.eval_options(3);
        assert_eq!(opts.tasks, TaskId::ALL.to_vec());
        assert!(opts.world_config().enabled(TaskId::DeliverC));
    }
}
