use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, GridWorld, Observation, TaskId, WorldConfig};
use crate::error::{Error, Result};
use crate::net::{AgentState, Network, StepBatch, Unroll};
use crate::numerics::softmax::log_softmax_row;
use crate::numerics::Real;

/// How an assignment of a task ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Completed after this many steps.
    Success(usize),
    /// The episode ended first, after the task had been active long enough
    /// to count.
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskEvent {
    pub worker: usize,
    pub task: TaskId,
    pub outcome: Outcome,
}

/// One environment with the agent-side bookkeeping that feeds the network.
#[derive(Clone, Debug)]
pub struct Worker {
    pub env: GridWorld,
    pub obs: Observation,
    pub d_prev: bool,
    pub a_prev: Option<Action>,
    pub episode_start: bool,
    /// Assignments cut off by the episode end count as timeouts only after
    /// this many steps; shorter ones are dropped.
    pub success_window: usize,
    assigned_at: usize,
    episode_return_tenths: i64,
}

impl Worker {
    pub fn new(seed: u64, cfg: WorldConfig, success_window: usize) -> Result<Worker> {
        let env = GridWorld::generate(seed, cfg)?;
        let obs = env.observe();
        Ok(Worker {
            env,
            obs,
            d_prev: false,
            a_prev: None,
            episode_start: true,
            success_window,
            assigned_at: 0,
            episode_return_tenths: 0,
        })
    }

    pub fn push_input<F: Real>(&self, batch: &mut StepBatch<F>) {
        batch.push(&self.obs, self.env.current_task(), self.d_prev, self.a_prev, self.episode_start);
    }
}

/// Seed of worker `index` derived from a run seed.
pub fn worker_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Transitions of `n_workers` environments over `n_steps`, step-major
/// (`index = step·n_workers + worker`).
#[derive(Clone, Debug)]
pub struct RolloutBuffer<F> {
    pub n_workers: usize,
    pub n_steps: usize,
    pub observations: Vec<Observation>,
    pub tasks: Vec<TaskId>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub reward_tenths: Vec<i32>,
    pub values: Vec<f64>,
    /// Ground-truth completion `d_t` of each step.
    pub completions: Vec<bool>,
    pub comp_logits: Vec<f64>,
    /// The episode ended with this step; no bootstrap across it.
    pub dones: Vec<bool>,
    /// Critic value of the state after the last step, per worker.
    pub bootstrap: Vec<f64>,
    pub events: Vec<TaskEvent>,
    /// Returns of episodes that ended during the rollout.
    pub episode_returns: Vec<f64>,
    pub unroll: Unroll<F>,
}

impl<F: Real> RolloutBuffer<F> {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn action_codes(&self) -> Vec<usize> {
        self.actions.iter().map(|a| a.code()).collect()
    }
}

/// Draws an index from a probability row by inverse CDF.
pub fn sample_action<F: Real>(probs: &[F], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Runs every worker for `n_steps` with actions sampled from the policy,
/// recording the unroll for the reverse pass. `state` is carried across
/// calls; rows are cleared when an episode ends and the task memory is gated
/// by the completion signal inside the network step.
pub fn collect_rollout<F: Real>(
    workers: &mut [Worker],
    net: &Network<F>,
    state: &mut AgentState<F>,
    rng: &mut ChaCha8Rng,
    n_steps: usize,
) -> Result<RolloutBuffer<F>> {
    let nw = workers.len();
    let cap = nw * n_steps;
    let mut buf = RolloutBuffer {
        n_workers: nw,
        n_steps,
        observations: Vec::with_capacity(cap),
        tasks: Vec::with_capacity(cap),
        actions: Vec::with_capacity(cap),
        log_probs: Vec::with_capacity(cap),
        rewards: Vec::with_capacity(cap),
        reward_tenths: Vec::with_capacity(cap),
        values: Vec::with_capacity(cap),
        completions: Vec::with_capacity(cap),
        comp_logits: Vec::with_capacity(cap),
        dones: Vec::with_capacity(cap),
        bootstrap: Vec::with_capacity(nw),
        events: Vec::new(),
        episode_returns: Vec::new(),
        unroll: Unroll::new(),
    };
    let mut input = StepBatch::new();
    let mut logp = vec![0.0f64; Action::COUNT];
    let mut row = vec![0.0f64; Action::COUNT];
    for _ in 0..n_steps {
        input.clear();
        for w in workers.iter() {
            w.push_input(&mut input);
        }
        let (out, next) = net.step(&input, state, Some(&mut buf.unroll))?;
        *state = next;
        for (i, w) in workers.iter_mut().enumerate() {
            let a = sample_action(out.policy(i), rng);
            let action = Action::ALL[a];
            for (dst, z) in row.iter_mut().zip(&out.logits[i * Action::COUNT..(i + 1) * Action::COUNT]) {
                *dst = z.to_f64();
            }
            log_softmax_row(&row, &mut logp);
            let task = w.env.current_task();
            if w.episode_start {
                w.assigned_at = 0;
                w.episode_return_tenths = 0;
            }
            let res = w.env.step(action).map_err(|e| Error::Worker {
                worker: i,
                source: Box::new(e),
            })?;
            buf.observations.push(std::mem::replace(&mut w.obs, res.observation));
            buf.tasks.push(task);
            buf.actions.push(action);
            buf.log_probs.push(logp[a]);
            buf.rewards.push(res.reward);
            buf.reward_tenths.push(res.reward_tenths);
            buf.values.push(out.values[i].to_f64());
            buf.completions.push(res.completion);
            buf.comp_logits.push(out.comp_logits[i].to_f64());
            buf.dones.push(res.episode_done);
            w.episode_return_tenths += res.reward_tenths as i64;
            let now = w.env.step_count();
            if res.completion {
                buf.events.push(TaskEvent {
                    worker: i,
                    task,
                    outcome: Outcome::Success(now - w.assigned_at),
                });
                w.assigned_at = now;
            }
            w.d_prev = res.completion;
            w.a_prev = Some(action);
            w.episode_start = false;
            if res.episode_done {
                if !res.completion && now - w.assigned_at >= w.success_window {
                    buf.events.push(TaskEvent {
                        worker: i,
                        task: w.env.current_task(),
                        outcome: Outcome::Timeout,
                    });
                }
                buf.episode_returns.push(w.episode_return_tenths as f64 / 10.0);
                w.env.reset().map_err(|e| Error::Worker {
                    worker: i,
                    source: Box::new(e),
                })?;
                w.obs = w.env.observe();
                w.d_prev = false;
                w.a_prev = None;
                w.episode_start = true;
                state.reset_row(i);
            }
        }
    }
    input.clear();
    for w in workers.iter() {
        w.push_input(&mut input);
    }
    let (out, _) = net.step(&input, state, None)?;
    buf.bootstrap = out.values.iter().map(|v| v.to_f64()).collect();
    Ok(buf)
}
