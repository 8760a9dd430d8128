use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{a2c_loss, LossTerms, LossWeights};
use super::optim::RmsProp;
use super::returns::compute_returns;
use super::rollout::{collect_rollout, worker_seed, RolloutBuffer, Worker};
use super::stats::SuccessTracker;
use crate::env::{EpisodeMode, TaskId, WorldConfig};
use crate::error::{Error, Result};
use crate::net::{AgentState, ModelKind, Network};

/// Episodes kept for the running mean return.
const RETURN_WINDOW: usize = 100;

/// Training hyperparameters and the environment they run on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_workers: usize,
    /// Unroll length per update.
    pub n_steps: usize,
    pub gamma: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub completion_coef: f64,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Environment steps summed over all workers.
    pub total_steps: u64,
    pub seed: u64,
    pub episode_len: usize,
    pub map_size: usize,
    pub tasks: Vec<TaskId>,
    /// Emit a log record every this many iterations.
    pub log_every: u64,
    /// Minimum active steps for a cut-off assignment to count as a timeout;
    /// defaults to a quarter of the episode.
    pub success_window: Option<usize>,
    /// Resolved assignments per task in the running success rate.
    pub success_memory: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_workers: 16,
            n_steps: 20,
            gamma: 0.99,
            value_coef: 0.5,
            entropy_coef: 0.01,
            completion_coef: 0.5,
            learning_rate: 7e-4,
            rms_decay: 0.99,
            rms_eps: 1e-5,
            clip_norm: Some(0.5),
            total_steps: 3_000_000,
            seed: 0,
            episode_len: 400,
            map_size: 15,
            tasks: TaskId::TAXI.to_vec(),
            log_every: 1,
            success_window: None,
            success_memory: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if [self.value_coef, self.entropy_coef, self.completion_coef, self.learning_rate]
            .iter()
            .any(|&w| !(w >= 0.0))
        {
            return bad("loss weights and learning rate must be non-negative");
        }
        if self.n_workers == 0 || self.n_steps == 0 || self.log_every == 0 {
            return bad("n_workers, n_steps and log_every must be positive");
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_eps > 0.0) {
            return bad("rms_decay must lie in [0, 1) and rms_eps be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        self.world(ModelKind::Sem).validate()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            value: self.value_coef,
            entropy: self.entropy_coef,
            completion: self.completion_coef,
        }
    }

    pub fn success_window(&self) -> usize {
        self.success_window.unwrap_or(self.episode_len / 4)
    }

    /// Environment for a model: the multitask baseline trains on one task
    /// per episode, everything else on chained tasks.
    pub fn world(&self, kind: ModelKind) -> WorldConfig {
        let mode = if kind == ModelKind::Multitask {
            EpisodeMode::SingleTask
        } else {
            EpisodeMode::Chain
        };
        WorldConfig::taxi(self.map_size, self.episode_len)
            .with_tasks(&self.tasks)
            .with_mode(mode)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u64,
    pub step: u64,
    /// Mean over the most recent finished episodes.
    pub mean_return: Option<f64>,
    pub loss: LossTerms,
    pub grad_norm: f64,
    pub success: BTreeMap<String, f64>,
    /// Resolved assignments behind each success rate.
    #[serde(default)]
    pub samples: BTreeMap<String, usize>,
    /// Seconds since the trainer was created.
    pub wall_clock: f64,
}

/// Synchronous advantage actor-critic over `n_workers` environments.
pub struct Trainer {
    cfg: TrainConfig,
    net: Network<f32>,
    opt: RmsProp<f32>,
    workers: Vec<Worker>,
    state: AgentState<f32>,
    rng: ChaCha8Rng,
    tracker: SuccessTracker,
    returns: VecDeque<f64>,
    steps_done: u64,
    iteration: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(net: Network<f32>, cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let world = cfg.world(net.kind());
        let workers = (0..cfg.n_workers)
            .map(|i| Worker::new(worker_seed(cfg.seed, i), world.clone(), cfg.success_window()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            opt: RmsProp::new(net.params(), cfg.learning_rate, cfg.rms_decay, cfg.rms_eps),
            state: net.initial_state(cfg.n_workers),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            tracker: SuccessTracker::new(cfg.success_memory),
            returns: VecDeque::with_capacity(RETURN_WINDOW),
            steps_done: 0,
            iteration: 0,
            started: Instant::now(),
            workers,
            net,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn into_network(self) -> Network<f32> {
        self.net
    }

    pub fn tracker(&self) -> &SuccessTracker {
        &self.tracker
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done >= self.cfg.total_steps
    }

    /// Collects one rollout without updating; exposed for inspection.
    pub fn collect(&mut self) -> Result<RolloutBuffer<f32>> {
        collect_rollout(&mut self.workers, &self.net, &mut self.state, &mut self.rng, self.cfg.n_steps)
    }

    /// One rollout, loss, reverse pass and optimizer step.
    pub fn iterate(&mut self) -> Result<IterationLog> {
        let buf = self.collect()?;
        self.tracker.record_events(&buf.events);
        for &r in &buf.episode_returns {
            if self.returns.len() == RETURN_WINDOW {
                self.returns.pop_front();
            }
            self.returns.push_back(r);
        }
        let (ret, adv) = compute_returns(&buf.rewards, &buf.dones, &buf.values, &buf.bootstrap, self.cfg.gamma, buf.n_workers);
        let unroll = &buf.unroll;
        let value_norm = self.net.params().value_norm();
        let (terms, grads) = a2c_loss(
            unroll.logits(),
            unroll.values(),
            unroll.comp_logits(),
            &buf.action_codes(),
            &ret,
            &adv,
            &buf.completions,
            &self.cfg.weights(),
        )
        .map_err(|e| match e {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("{context}; parameter norm {value_norm}"),
            },
            e => e,
        })?;
        self.net.params_mut().zero_grads();
        self.net.backward(unroll, &grads.d_logits, &grads.d_values, &grads.d_comp)?;
        let grad_norm = self.net.params().grad_norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient at iteration {}; parameter norm {value_norm}", self.iteration),
            });
        }
        self.opt.step(self.net.params_mut(), self.cfg.clip_norm);
        self.steps_done += buf.len() as u64;
        self.iteration += 1;
        Ok(IterationLog {
            iteration: self.iteration,
            step: self.steps_done,
            mean_return: (!self.returns.is_empty()).then(|| self.returns.iter().sum::<f64>() / self.returns.len() as f64),
            loss: terms,
            grad_norm,
            success: self.tracker.rates(),
            samples: self.tracker.sample_counts(),
            wall_clock: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Iterates until `total_steps` environment steps have been taken,
    /// passing every `log_every`-th record to `on_log`.
    pub fn run(&mut self, mut on_log: impl FnMut(&IterationLog) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let log = self.iterate()?;
            if log.iteration % self.cfg.log_every == 0 || self.is_finished() {
                on_log(&log)?;
            }
        }
        Ok(())
    }
}
