use std::collections::{BTreeMap, VecDeque};

use super::rollout::{Outcome, TaskEvent};
use crate::env::TaskId;

/// Per-task success rate over the most recent `memory` resolved
/// assignments: completions / (completions + timeouts).
#[derive(Clone, Debug)]
pub struct SuccessTracker {
    memory: usize,
    recent: Vec<VecDeque<bool>>,
    totals: Vec<(u64, u64)>,
}

impl SuccessTracker {
    pub fn new(memory: usize) -> Self {
        SuccessTracker {
            memory: memory.max(1),
            recent: vec![VecDeque::new(); TaskId::COUNT],
            totals: vec![(0, 0); TaskId::COUNT],
        }
    }

    pub fn record(&mut self, task: TaskId, success: bool) {
        let q = &mut self.recent[task.code()];
        if q.len() == self.memory {
            q.pop_front();
        }
        q.push_back(success);
        let t = &mut self.totals[task.code()];
        t.0 += success as u64;
        t.1 += 1;
    }

    pub fn record_events(&mut self, events: &[TaskEvent]) {
        for e in events {
            self.record(e.task, matches!(e.outcome, Outcome::Success(_)));
        }
    }

    /// Recent rate, `None` until the task has resolved at least once.
    pub fn rate(&self, task: TaskId) -> Option<f64> {
        let q = &self.recent[task.code()];
        (!q.is_empty()).then(|| q.iter().filter(|&&s| s).count() as f64 / q.len() as f64)
    }

    /// Number of resolved assignments currently in the window.
    pub fn samples(&self, task: TaskId) -> usize {
        self.recent[task.code()].len()
    }

    /// `(successes, resolved)` since creation.
    pub fn totals(&self, task: TaskId) -> (u64, u64) {
        self.totals[task.code()]
    }

    pub fn sample_counts(&self) -> BTreeMap<String, usize> {
        TaskId::ALL
            .into_iter()
            .filter(|&t| self.samples(t) > 0)
            .map(|t| (t.name().to_string(), self.samples(t)))
            .collect()
    }

    pub fn rates(&self) -> BTreeMap<String, f64> {
        TaskId::ALL
            .into_iter()
            .filter_map(|t| self.rate(t).map(|r| (t.name().to_string(), r)))
            .collect()
    }
}
