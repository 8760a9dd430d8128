//! Benchmark fixtures.

use sem_core::env::{GridWorld, WorldConfig};
use sem_core::harness::OracleAgent;
use sem_core::net::StepBatch;

/// Worlds on `size`-sided maps, each advanced a few oracle steps so the
/// batch mixes tasks.
pub fn worlds(n: usize, size: usize) -> Vec<GridWorld> {
    (0..n as u64)
        .map(|i| {
            let mut w = GridWorld::generate(i, WorldConfig::taxi(size, 400)).unwrap();
            for _ in 0..i % 7 {
                w.step(OracleAgent::action(&w)).unwrap();
            }
            w
        })
        .collect()
}

/// One network input row per world.
pub fn step_batch(worlds: &[GridWorld]) -> StepBatch<f32> {
    let mut b = StepBatch::new();
    for w in worlds {
        b.push(&w.observe(), w.current_task(), false, None, false);
    }
    b
}
