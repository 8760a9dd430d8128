use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use crate::env::{Action, GridWorld, StepOutcome, TaskId, WorldConfig};
use crate::error::Result;
use crate::trainer::worker_seed;

/// Highest appearance index reported; later appearances are kept in the
/// per-run traces only.
pub const MAX_APPEARANCE: usize = 5;

/// Runs advanced together through one forward pass.
pub const EVAL_BATCH: usize = 64;

/// Drives `worlds` for one full episode each, in lockstep batches.
/// `observe(run, world_before_step, action, outcome)` sees every transition.
pub fn run_episodes<A, O>(agent: &mut A, mut worlds: Vec<GridWorld>, mut observe: O) -> Result<()>
where
    A: Agent + ?Sized,
    O: FnMut(usize, &GridWorld, Action, &StepOutcome),
{
    let total = worlds.len();
    let mut first = 0;
    while first < total {
        let end = (first + EVAL_BATCH).min(total);
        let ids: Vec<usize> = (first..end).collect();
        let batch = &mut worlds[first..end];
        let n = batch.len();
        agent.begin(n, &ids);
        let mut d_prev = vec![false; n];
        let mut a_prev: Vec<Option<Action>> = vec![None; n];
        let mut start = vec![true; n];
        let mut live = vec![true; n];
        while live.iter().any(|&l| l) {
            let actions = agent.act(batch, &d_prev, &a_prev, &start)?;
            for i in 0..n {
                if !live[i] {
                    continue;
                }
                let before = batch[i].clone();
                let out = batch[i].step(actions[i])?;
                observe(ids[i], &before, actions[i], &out);
                d_prev[i] = out.completion;
                a_prev[i] = Some(actions[i]);
                start[i] = false;
                live[i] = !out.episode_done;
            }
        }
        first = end;
    }
    Ok(())
}

/// Outcome of one sub-task assignment within an evaluation episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub task: TaskId,
    /// 1-based count of this task's assignments so far in the episode.
    pub appearance: usize,
    /// Steps to completion; `None` when the episode ended first.
    pub steps: Option<usize>,
    /// Unfinished and active for fewer than the success window when the
    /// episode ended, so neither a success nor a timeout.
    pub censored: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub attempts: Vec<Attempt>,
    /// Steps from each ReachP assignment to the matching DropoffP completion.
    pub deliveries: Vec<usize>,
}

impl RunTrace {
    /// Mean completion steps of `task` at `appearance` in this run.
    pub fn mean_steps(&self, task: TaskId, appearance: std::ops::RangeInclusive<usize>) -> Option<f64> {
        let v: Vec<usize> = self
            .attempts
            .iter()
            .filter(|a| a.task == task && appearance.contains(&a.appearance))
            .filter_map(|a| a.steps)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Assignments made at this appearance index.
    pub n: usize,
    pub successes: usize,
    pub timeouts: usize,
    pub censored: usize,
    /// Mean steps over successful completions only.
    pub mean_steps: Option<f64>,
}

impl CellStats {
    pub fn success_rate(&self) -> Option<f64> {
        let decided = self.successes + self.timeouts;
        (decided > 0).then(|| self.successes as f64 / decided as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: usize,
    pub map_size: usize,
    pub episode_len: usize,
    /// Keyed by task, then appearance index `1..=MAX_APPEARANCE`.
    pub cells: BTreeMap<TaskId, BTreeMap<usize, CellStats>>,
    pub mean_delivery_steps: Option<f64>,
    pub deliveries: usize,
    pub traces: Vec<RunTrace>,
}

impl EvalReport {
    pub fn from_traces(traces: Vec<RunTrace>, map_size: usize, episode_len: usize) -> EvalReport {
        let mut cells: BTreeMap<TaskId, BTreeMap<usize, CellStats>> = BTreeMap::new();
        let mut sums: BTreeMap<(TaskId, usize), usize> = BTreeMap::new();
        for a in traces.iter().flat_map(|t| &t.attempts) {
            if a.appearance > MAX_APPEARANCE {
                continue;
            }
            let c = cells.entry(a.task).or_default().entry(a.appearance).or_default();
            c.n += 1;
            match (a.steps, a.censored) {
                (Some(s), _) => {
                    c.successes += 1;
                    *sums.entry((a.task, a.appearance)).or_default() += s;
                }
                (None, true) => c.censored += 1,
                (None, false) => c.timeouts += 1,
            }
        }
        for (task, row) in cells.iter_mut() {
            for (app, c) in row.iter_mut() {
                if c.successes > 0 {
                    c.mean_steps = Some(sums[&(*task, *app)] as f64 / c.successes as f64);
                }
            }
        }
        let all: Vec<usize> = traces.iter().flat_map(|t| t.deliveries.iter().copied()).collect();
        EvalReport {
            runs: traces.len(),
            map_size,
            episode_len,
            cells,
            mean_delivery_steps: (!all.is_empty()).then(|| all.iter().sum::<usize>() as f64 / all.len() as f64),
            deliveries: all.len(),
            traces,
        }
    }

    pub fn cell(&self, task: TaskId, appearance: usize) -> Option<&CellStats> {
        self.cells.get(&task)?.get(&appearance)
    }

    /// Mean completion steps of `task` pooled over a range of appearances.
    pub fn mean_steps(&self, task: TaskId, appearance: std::ops::RangeInclusive<usize>) -> Option<f64> {
        let v: Vec<usize> = self
            .traces
            .iter()
            .flat_map(|t| &t.attempts)
            .filter(|a| a.task == task && appearance.contains(&a.appearance))
            .filter_map(|a| a.steps)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
    }

    /// Successes over decided attempts for one task, all appearances.
    pub fn task_success(&self, task: TaskId) -> Option<f64> {
        let (s, t) = self.totals(|a| a.task == task);
        (s + t > 0).then(|| s as f64 / (s + t) as f64)
    }

    pub fn overall_success(&self) -> Option<f64> {
        let (s, t) = self.totals(|_| true);
        (s + t > 0).then(|| s as f64 / (s + t) as f64)
    }

    fn totals(&self, keep: impl Fn(&Attempt) -> bool) -> (usize, usize) {
        let mut s = 0;
        let mut t = 0;
        for a in self.traces.iter().flat_map(|t| &t.attempts).filter(|a| keep(a)) {
            match (a.steps, a.censored) {
                (Some(_), _) => s += 1,
                (None, false) => t += 1,
                (None, true) => {}
            }
        }
        (s, t)
    }

    /// One row per (task, appearance) with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,appearance,runs,n,successes,timeouts,censored,success_rate,mean_steps\n");
        for (task, row) in &self.cells {
            for (app, c) in row {
                let _ = writeln!(
                    out,
                    "{task},{app},{},{},{},{},{},{},{}",
                    self.runs,
                    c.n,
                    c.successes,
                    c.timeouts,
                    c.censored,
                    fmt_opt(c.success_rate()),
                    fmt_opt(c.mean_steps)
                );
            }
        }
        let _ = writeln!(
            out,
            "delivery,all,{},{},{},,,,{}",
            self.runs,
            self.deliveries,
            self.deliveries,
            fmt_opt(self.mean_delivery_steps)
        );
        out
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.4}"))
}

/// Records attempts and deliveries for one episode.
#[derive(Clone, Debug)]
struct Recorder {
    window: usize,
    trace: RunTrace,
    counts: BTreeMap<TaskId, usize>,
    current: Option<(TaskId, usize, usize)>,
    chain_start: Option<usize>,
}

impl Recorder {
    fn new(window: usize) -> Self {
        Recorder {
            window,
            trace: RunTrace::default(),
            counts: BTreeMap::new(),
            current: None,
            chain_start: None,
        }
    }

    fn assign(&mut self, task: TaskId, step: usize) {
        let n = self.counts.entry(task).or_default();
        *n += 1;
        self.current = Some((task, *n, step));
        if task == TaskId::ReachP {
            self.chain_start = Some(step);
        }
    }

    fn observe(&mut self, before: &GridWorld, out: &StepOutcome) {
        let step = before.step_count();
        if self.current.is_none() {
            self.assign(before.current_task(), step);
        }
        let (task, appearance, since) = self.current.expect("assigned");
        if out.completion {
            self.trace.attempts.push(Attempt {
                task,
                appearance,
                steps: Some(step + 1 - since),
                censored: false,
            });
            if task == TaskId::DropoffP {
                if let Some(s) = self.chain_start.take() {
                    self.trace.deliveries.push(step + 1 - s);
                }
            }
            self.current = None;
            if !out.episode_done {
                self.assign(out.next_task, step + 1);
            }
        } else if out.episode_done {
            let active = step + 1 - since;
            self.trace.attempts.push(Attempt {
                task,
                appearance,
                steps: None,
                censored: active < self.window,
            });
            self.current = None;
        }
    }
}

/// Evaluation protocol settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub runs: usize,
    pub map_size: usize,
    pub episode_len: usize,
    pub tasks: Vec<TaskId>,
    pub seed: u64,
    /// Minimum steps an unfinished assignment must have been active to count
    /// as a timeout. Defaults to a quarter episode.
    pub success_window: Option<usize>,
}

impl EvalOptions {
    pub fn new(runs: usize, map_size: usize, episode_len: usize, seed: u64) -> Self {
        EvalOptions {
            runs,
            map_size,
            episode_len,
            tasks: TaskId::TAXI.to_vec(),
            seed,
            success_window: None,
        }
    }

    pub fn window(&self) -> usize {
        self.success_window.unwrap_or(self.episode_len / 4).max(1)
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig::taxi(self.map_size, self.episode_len).with_tasks(&self.tasks)
    }
}

/// Runs `opts.runs` chained episodes, each on a fresh map seeded by
/// `worker_seed(opts.seed, run)`, and tabulates completion steps by task and
/// appearance index.
pub fn eval_by_appearance<A: Agent + ?Sized>(agent: &mut A, opts: &EvalOptions) -> Result<EvalReport> {
    let cfg = opts.world_config();
    cfg.validate()?;
    let worlds = (0..opts.runs)
        .map(|r| GridWorld::generate(worker_seed(opts.seed, r), cfg.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut recorders = vec![Recorder::new(opts.window()); opts.runs];
    run_episodes(agent, worlds, |run, before, _, out| recorders[run].observe(before, out))?;
    Ok(EvalReport::from_traces(
        recorders.into_iter().map(|r| r.trace).collect(),
        opts.map_size,
        opts.episode_len,
    ))
}

/// Percentile bootstrap over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Confidence interval for `mean(a) - mean(b)` where each run contributes
/// an optional `a` and `b` value; runs are resampled with replacement and
/// means taken over the present values. `None` when either side is empty.
pub fn bootstrap_ci(
    runs: &[(Option<f64>, Option<f64>)],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Option<Interval> {
    fn diff(runs: &[(Option<f64>, Option<f64>)], idx: impl Iterator<Item = usize>) -> Option<f64> {
        let (mut sa, mut na, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for i in idx {
            if let Some(a) = runs[i].0 {
                sa += a;
                na += 1;
            }
            if let Some(b) = runs[i].1 {
                sb += b;
                nb += 1;
            }
        }
        (na > 0 && nb > 0).then(|| sa / na as f64 - sb / nb as f64)
    }
    let estimate = diff(runs, 0..runs.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .filter_map(|_| {
            let idx: Vec<usize> = (0..runs.len()).map(|_| rng.random_range(0..runs.len())).collect();
            diff(runs, idx.into_iter())
        })
        .collect();
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Some(Interval {
        estimate,
        lo: at(tail),
        hi: at(1.0 - tail),
    })
}

/// Bootstrap interval of the drop in `task` completion steps from
/// appearance `from` to appearance `to`.
pub fn appearance_drop(report: &EvalReport, task: TaskId, from: usize, to: usize, seed: u64) -> Option<Interval> {
    let runs: Vec<(Option<f64>, Option<f64>)> = report
        .traces
        .iter()
        .map(|t| (t.mean_steps(task, from..=from), t.mean_steps(task, to..=to)))
        .collect();
    bootstrap_ci(&runs, 2000, 0.95, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::agent::{FixedAgent, OracleAgent};

    #[test]
    fn zero_runs_is_empty() {
        let r = eval_by_appearance(&mut OracleAgent, &EvalOptions::new(0, 8, 50, 1)).unwrap();
        assert_eq!(r.runs, 0);
        assert!(r.cells.is_empty());
        assert_eq!(r.overall_success(), None);
    }

    #[test]
    fn oracle_completes_everything_it_starts() {
        let r = eval_by_appearance(&mut OracleAgent, &EvalOptions::new(6, 8, 120, 3)).unwrap();
        assert_eq!(r.runs, 6);
        let bad: Vec<_> = r.traces.iter().flat_map(|t| &t.attempts).filter(|a| a.steps.is_none()).collect();
        assert_eq!(r.overall_success(), Some(1.0), "{bad:?}");
        assert!(r.deliveries > 0);
    }

    #[test]
    fn stationary_agent_times_out() {
        let r = eval_by_appearance(&mut FixedAgent(Action::Dropoff), &EvalOptions::new(3, 8, 40, 3)).unwrap();
        let c = r.cell(TaskId::ReachP, 1).unwrap();
        assert_eq!((c.n, c.successes, c.timeouts), (3, 0, 3));
        assert_eq!(c.mean_steps, None);
        assert_eq!(r.cells.len(), 1);
    }

    #[test]
    fn bootstrap_brackets_a_known_gap() {
        let runs: Vec<_> = (0..200).map(|i| (Some(10.0 + (i % 4) as f64), Some(5.0 + (i % 2) as f64))).collect();
        let ci = bootstrap_ci(&runs, 500, 0.95, 1).unwrap();
        assert!((ci.estimate - 6.0).abs() < 1e-9);
        assert!(ci.lo < 6.0 && 6.0 < ci.hi && ci.hi - ci.lo < 1.0);
        assert!(bootstrap_ci(&[(None, Some(1.0))], 10, 0.95, 1).is_none());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = eval_by_appearance(&mut OracleAgent, &EvalOptions::new(2, 8, 60, 9)).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("task,appearance,runs"));
        assert!(csv.contains("\nReachP,1,2,"));
    }
}
