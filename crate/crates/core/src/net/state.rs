use crate::env::{Action, Observation, TaskId};
use crate::numerics::{LstmCellState, Real, Tensor};

/// Recurrent state for a batch of agents. Every tensor is `[batch, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentState<F> {
    /// Episodic memory `sem` and task memory `tsm`.
    Sem {
        sem: LstmCellState<F>,
        tsm: LstmCellState<F>,
    },
    /// The single core of a baseline.
    Single { core: LstmCellState<F> },
}

impl<F: Real> AgentState<F> {
    pub fn batch(&self) -> usize {
        match self {
            AgentState::Sem { sem, .. } => sem.batch(),
            AgentState::Single { core } => core.batch(),
        }
    }

    pub fn layers(&self) -> Vec<&LstmCellState<F>> {
        match self {
            AgentState::Sem { sem, tsm } => vec![sem, tsm],
            AgentState::Single { core } => vec![core],
        }
    }

    fn layers_mut(&mut self) -> Vec<&mut LstmCellState<F>> {
        match self {
            AgentState::Sem { sem, tsm } => vec![sem, tsm],
            AgentState::Single { core } => vec![core],
        }
    }

    pub fn reset(&mut self) {
        self.layers_mut().into_iter().for_each(LstmCellState::reset);
    }

    pub fn reset_row(&mut self, row: usize) {
        for l in self.layers_mut() {
            l.reset_row(row);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.h.data().iter().chain(l.c.data()).all(|&x| x == F::ZERO))
    }

    pub fn sem(&self) -> Option<&LstmCellState<F>> {
        match self {
            AgentState::Sem { sem, .. } => Some(sem),
            AgentState::Single { .. } => None,
        }
    }

    pub fn tsm(&self) -> Option<&LstmCellState<F>> {
        match self {
            AgentState::Sem { tsm, .. } => Some(tsm),
            AgentState::Single { .. } => None,
        }
    }

    /// `(batch, hidden)` of every layer, used to tell architectures apart.
    pub fn signature(&self) -> Vec<(usize, usize)> {
        self.layers().iter().map(|l| (l.batch(), l.hidden())).collect()
    }

    /// Copy of one batch row as a batch of one.
    pub fn row(&self, row: usize) -> AgentState<F> {
        let pick = |l: &LstmCellState<F>| {
            let n = l.hidden();
            LstmCellState {
                h: Tensor::from_vec(&[1, n], l.h.data()[row * n..(row + 1) * n].to_vec()).expect("row shape"),
                c: Tensor::from_vec(&[1, n], l.c.data()[row * n..(row + 1) * n].to_vec()).expect("row shape"),
            }
        };
        match self {
            AgentState::Sem { sem, tsm } => AgentState::Sem {
                sem: pick(sem),
                tsm: pick(tsm),
            },
            AgentState::Single { core } => AgentState::Single { core: pick(core) },
        }
    }
}

/// Inputs for one synchronous step of `len()` agents.
#[derive(Clone, Debug, Default)]
pub struct StepBatch<F> {
    /// `[batch, CHANNELS, VIEW, VIEW]`.
    pub grids: Vec<F>,
    /// `[batch, 2]`.
    pub carrying: Vec<F>,
    pub tasks: Vec<usize>,
    pub d_prev: Vec<bool>,
    pub a_prev: Vec<Option<usize>>,
    /// Clears all recurrent state of the row before the step.
    pub episode_start: Vec<bool>,
}

impl<F: Real> StepBatch<F> {
    pub fn new() -> Self {
        StepBatch {
            grids: Vec::new(),
            carrying: Vec::new(),
            tasks: Vec::new(),
            d_prev: Vec::new(),
            a_prev: Vec::new(),
            episode_start: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: &Observation, task: TaskId, d_prev: bool, a_prev: Option<Action>, episode_start: bool) {
        self.push_code(obs, task.code(), d_prev, a_prev.map(Action::code), episode_start);
    }

    /// As [`StepBatch::push`] with raw codes; out-of-range codes are reported
    /// by the network step.
    pub fn push_code(&mut self, obs: &Observation, task: usize, d_prev: bool, a_prev: Option<usize>, episode_start: bool) {
        self.grids.extend(obs.grid.iter().map(|&x| F::of(x as f64)));
        self.carrying.extend(obs.carrying.iter().map(|&x| F::of(x as f64)));
        self.tasks.push(task);
        self.d_prev.push(d_prev);
        self.a_prev.push(a_prev);
        self.episode_start.push(episode_start);
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn clear(&mut self) {
        self.grids.clear();
        self.carrying.clear();
        self.tasks.clear();
        self.d_prev.clear();
        self.a_prev.clear();
        self.episode_start.clear();
    }
}

/// Head outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<F> {
    /// `[batch, actions]`.
    pub logits: Vec<F>,
    /// `[batch, actions]`, rows sum to one.
    pub probs: Vec<F>,
    pub values: Vec<F>,
    pub comp_logits: Vec<F>,
    /// Predicted completion probability `d̂`.
    pub comp_probs: Vec<F>,
}

impl<F: Real> StepOutput<F> {
    pub fn policy(&self, row: usize) -> &[F] {
        &self.probs[row * Action::COUNT..(row + 1) * Action::COUNT]
    }
}

/// Single-agent result of a forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<F> {
    pub policy: Vec<F>,
    pub value: F,
    pub completion_prob: F,
    pub next_state: AgentState<F>,
}

/// Activations of one recurrent layer, contiguous over recorded steps.
#[derive(Clone, Debug, Default)]
pub(crate) struct CoreRecord<F> {
    /// Layer input `[x, gated h_prev]`.
    pub z: Vec<F>,
    /// Task embedding rows (factorized layers only).
    pub v: Vec<F>,
    pub u: Vec<F>,
    pub s: Vec<F>,
    pub gates: Vec<F>,
    pub c_prev: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Real> CoreRecord<F> {
    pub fn append(&mut self, other: CoreRecord<F>) {
        self.z.extend(other.z);
        self.v.extend(other.v);
        self.u.extend(other.u);
        self.s.extend(other.s);
        self.gates.extend(other.gates);
        self.c_prev.extend(other.c_prev);
        self.c.extend(other.c);
    }
}

/// Everything the reverse pass needs from a sequence of batched steps.
/// Gradients flow only through steps recorded in the same unroll.
#[derive(Clone, Debug, Default)]
pub struct Unroll<F> {
    pub(crate) batch: usize,
    pub(crate) steps: usize,
    pub(crate) tasks: Vec<usize>,
    pub(crate) keep_outer: Vec<bool>,
    pub(crate) keep_inner: Vec<bool>,
    pub(crate) x0: Vec<F>,
    pub(crate) a1: Vec<F>,
    pub(crate) a2: Vec<F>,
    pub(crate) cores: Vec<CoreRecord<F>>,
    pub(crate) feat: Vec<F>,
    pub(crate) logits: Vec<F>,
    pub(crate) values: Vec<F>,
    pub(crate) comp_logits: Vec<F>,
    pub(crate) obs_dim: usize,
    pub(crate) env_hidden: usize,
}

impl<F: Real> Unroll<F> {
    pub fn new() -> Self {
        Unroll {
            batch: 0,
            steps: 0,
            tasks: Vec::new(),
            keep_outer: Vec::new(),
            keep_inner: Vec::new(),
            x0: Vec::new(),
            a1: Vec::new(),
            a2: Vec::new(),
            cores: Vec::new(),
            feat: Vec::new(),
            logits: Vec::new(),
            values: Vec::new(),
            comp_logits: Vec::new(),
            obs_dim: 0,
            env_hidden: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `[steps·batch, actions]`, step-major.
    pub fn logits(&self) -> &[F] {
        &self.logits
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn comp_logits(&self) -> &[F] {
        &self.comp_logits
    }

    /// Hidden input the task memory received at `(step, row)`: the
    /// previous task memory after completion gating. SEM only.
    pub fn task_memory_input(&self, step: usize, row: usize) -> Option<&[F]> {
        let core = self.cores.get(1)?;
        let zc = core.z.len() / (self.steps * self.batch);
        let start = (step * self.batch + row) * zc + self.obs_dim + self.env_hidden;
        Some(&core.z[start..(step * self.batch + row + 1) * zc])
    }

    /// Head input `[h_sem, h_tsm]` (or the baseline hidden) at `(step, row)`.
    pub fn features(&self, step: usize, row: usize) -> &[F] {
        let fd = self.feat.len() / (self.steps * self.batch);
        let k = step * self.batch + row;
        &self.feat[k * fd..(k + 1) * fd]
    }
}
