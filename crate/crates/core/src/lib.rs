//! SEM-A2C: an advantage actor-critic agent whose recurrent core is split
//! into a task-agnostic episodic memory and a task-specific factorized
//! memory, together with the multi-task Taxi grid-world it is trained on.
//!
//! * [`numerics`]: tensors and layers with explicit reverse passes.
//! * [`env`]: the randomized, partially observable Taxi world.
//! * [`net`]: the SEM network and its baselines.
//! * [`trainer`]: synchronous A2C over parallel environments and the
//!   freeze-and-fine-tune continual learning stage.
//! * [`harness`]: configuration, checkpoints and evaluation protocols.

pub mod env;
pub mod error;
pub mod harness;
pub mod net;
pub mod numerics;
pub mod trainer;

pub use env::{Action, GridWorld, Observation, StepOutcome, TaskId};
pub use error::{Error, Result};
pub use net::{AgentState, ForwardOutput, ModelConfig, ModelKind, Network};
pub use numerics::{LstmCellState, ParamStore, Parameter, Real, Tensor};
