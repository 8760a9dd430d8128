//! Synchronous advantage actor-critic over parallel environments, and the
//! continual-learning stage that adapts only the heads and task embeddings.
//!
//! Each iteration unrolls every worker for `n_steps`, computes n-step
//! returns bootstrapped from the critic, and backpropagates through the
//! recorded chunk only (states are carried into the next chunk but not
//! differentiated through). The loss adds a cross-entropy term on the
//! completion head with the environment's `d_t` as target.

mod check;
mod loss;
mod optim;
mod returns;
mod rollout;
mod stats;
mod train;

pub use check::{network_grad_check, toy_unroll, unroll_loss, ToyUnroll};
pub use loss::{a2c_loss, LossGrads, LossTerms, LossWeights};
pub use optim::RmsProp;
pub use returns::compute_returns;
pub use rollout::{collect_rollout, sample_action, worker_seed, Outcome, RolloutBuffer, TaskEvent, Worker};
pub use stats::SuccessTracker;
pub use train::{IterationLog, TrainConfig, Trainer};

use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::net::{Network, HEAD_GROUPS};
use crate::numerics::in_group;

/// True for parameters the continual-learning stage may change.
pub fn is_head_param(name: &str) -> bool {
    HEAD_GROUPS.iter().any(|g| in_group(name, g))
}

/// Freezes everything except the heads and the task embedding, then trains
/// on all seven tasks for `budget` environment steps. `trained_tasks` lists
/// the tasks the network was pre-trained on; it must include ReachC.
pub fn finetune_continual(
    mut net: Network<f32>,
    trained_tasks: &[TaskId],
    cfg: &TrainConfig,
    budget: u64,
    on_log: impl FnMut(&IterationLog) -> Result<()>,
) -> Result<Trainer> {
    if !trained_tasks.contains(&TaskId::ReachC) {
        return Err(Error::Precondition(
            "fine-tuning needs a network pre-trained with ReachC".into(),
        ));
    }
    net.params_mut().freeze_except(is_head_param);
    let cfg = TrainConfig {
        tasks: TaskId::ALL.to_vec(),
        total_steps: budget,
        ..cfg.clone()
    };
    let mut trainer = Trainer::new(net, cfg)?;
    trainer.run(on_log)?;
    Ok(trainer)
}
