//! Run configuration, checkpoints and the evaluation protocols: steps to
//! completion by appearance index, visit heatmaps and bootstrap intervals.

mod agent;
mod checkpoint;
mod config;
mod eval;
mod heatmap;
mod run;

pub use agent::{Agent, FixedAgent, NetworkAgent, OracleAgent};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, ParamEntry, TaskEntry, MAGIC, VERSION};
pub use config::RunConfig;
pub use eval::{
    appearance_drop, bootstrap_ci, eval_by_appearance, run_episodes, Attempt, CellStats, EvalOptions, EvalReport,
    Interval, RunTrace, EVAL_BATCH, MAX_APPEARANCE,
};
pub use heatmap::{heatmap, heatmap_on, Condition, HeatmapGrid};
pub use run::{evaluate, finetune, train, JsonLog};
