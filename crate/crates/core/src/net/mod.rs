//! The SEM actor-critic network and the baselines it is compared against.
//!
//! SEM keeps two recurrent memories. The episodic memory (`rnn_env`, an
//! LSTM) sees only the encoded observation, the previous completion signal
//! and the previous action, and is cleared at episode boundaries. The task
//! memory (`rnn_task`, a factorized LSTM whose weights are generated from the
//! current task embedding) also reads the episodic hidden state and is
//! cleared whenever a sub-task completes. Policy, value and completion heads
//! read `[h_sem, h_tsm]`.
//!
//! Parameters use canonical dotted names (`e_obs.conv1.w`, `rnn_task.w1`,
//! `head.pol.b`, ...) which are the contract for checkpoints and freezing.

mod backward;
mod config;
mod network;
mod state;

pub use config::{ModelConfig, ModelKind, PARITY_TOLERANCE};
pub use network::{param_layout, Network};
pub use state::{AgentState, ForwardOutput, StepBatch, StepOutput, Unroll};

use crate::env::{Action, Observation, TaskId};
use crate::error::{Error, Result};
use crate::numerics::Real;

/// Parameter groups the continual-learning stage keeps trainable.
pub const HEAD_GROUPS: [&str; 2] = ["head", "e_task"];

fn forward_one<F: Real>(
    net: &Network<F>,
    obs: &Observation,
    task: TaskId,
    d_prev: bool,
    a_prev: Option<Action>,
    state: &AgentState<F>,
) -> Result<ForwardOutput<F>> {
    let mut input = StepBatch::new();
    input.push(obs, task, d_prev, a_prev, false);
    let (out, next_state) = net.step(&input, state, None)?;
    Ok(ForwardOutput {
        policy: out.probs,
        value: out.values[0],
        completion_prob: out.comp_probs[0],
        next_state,
    })
}

/// One step of the SEM network for a single agent (`state` has batch one).
pub fn sem_forward<F: Real>(
    net: &Network<F>,
    obs: &Observation,
    task: TaskId,
    d_prev: bool,
    a_prev: Option<Action>,
    state: &AgentState<F>,
) -> Result<ForwardOutput<F>> {
    if net.kind() != ModelKind::Sem {
        return Err(Error::Config(format!("sem_forward called on a {} network", net.kind())));
    }
    forward_one(net, obs, task, d_prev, a_prev, state)
}

/// One step of a single-core baseline for a single agent.
pub fn multitask_baseline_forward<F: Real>(
    net: &Network<F>,
    obs: &Observation,
    task: TaskId,
    d_prev: bool,
    a_prev: Option<Action>,
    state: &AgentState<F>,
) -> Result<ForwardOutput<F>> {
    if net.kind() == ModelKind::Sem {
        return Err(Error::Config("multitask_baseline_forward called on a sem network".into()));
    }
    forward_one(net, obs, task, d_prev, a_prev, state)
}

/// Zeroes every memory.
pub fn reset_episode<F: Real>(state: &AgentState<F>) -> AgentState<F> {
    let mut s = state.clone();
    s.reset();
    s
}

pub fn count_params<F: Real>(net: &Network<F>, groups: &[&str]) -> usize {
    net.count_params(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridWorld, WorldConfig};

    fn sum(x: &[f64]) -> f64 {
        x.iter().sum()
    }

    #[test]
    fn embedding_count() {
        let net = Network::<f32>::new(ModelConfig::default(), 0).unwrap();
        assert_eq!(count_params(&net, &["e_task"]), 7 * 32);
        assert_eq!(count_params(&net, &[]), net.config().param_count());
    }

    #[test]
    fn layout_matches_store() {
        for kind in ModelKind::ALL {
            let net = Network::<f32>::new(ModelConfig::tiny(kind), 1).unwrap();
            let names: Vec<_> = net.params().names().map(str::to_string).collect();
            let layout: Vec<_> = param_layout(net.config()).into_iter().map(|(n, _)| n).collect();
            assert_eq!(names, layout);
            assert_eq!(net.count_params(&[]), net.config().param_count());
        }
    }

    #[test]
    fn single_forward_outputs_are_distributions() {
        let net = Network::<f64>::new(ModelConfig::tiny(ModelKind::Sem), 3).unwrap();
        let world = GridWorld::generate(1, WorldConfig::taxi(8, 20)).unwrap();
        let state = net.initial_state(1);
        let out = sem_forward(&net, &world.observe(), TaskId::ReachP, false, None, &state).unwrap();
        assert!((sum(&out.policy) - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&out.completion_prob));
        assert!(out.value.is_finite());
        assert!(multitask_baseline_forward(&net, &world.observe(), TaskId::ReachP, false, None, &state).is_err());
    }

    #[test]
    fn reset_zeroes_everything() {
        let net = Network::<f64>::new(ModelConfig::tiny(ModelKind::Sem), 3).unwrap();
        let world = GridWorld::generate(1, WorldConfig::taxi(8, 20)).unwrap();
        let out = sem_forward(&net, &world.observe(), TaskId::ReachP, false, None, &net.initial_state(1)).unwrap();
        assert!(!out.next_state.is_zero());
        assert!(reset_episode(&out.next_state).is_zero());
    }

    #[test]
    fn wrong_state_shape_is_rejected() {
        let net = Network::<f64>::new(ModelConfig::tiny(ModelKind::Sem), 3).unwrap();
        let other = Network::<f64>::new(ModelConfig::tiny(ModelKind::BaselineConcat), 3).unwrap();
        let err = sem_forward(&net, &Observation::blank(), TaskId::ReachP, false, None, &other.initial_state(1));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn unknown_task_code_is_rejected() {
        let net = Network::<f64>::new(ModelConfig::tiny(ModelKind::Sem), 3).unwrap();
        let mut input = StepBatch::new();
        input.push_code(&Observation::blank(), 9, false, None, false);
        assert!(matches!(net.step(&input, &net.initial_state(1), None), Err(Error::UnknownTask(9))));
    }
}
