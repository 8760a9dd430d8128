use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::map::bfs;
use super::{Action, Cell, Item, Observation, Pos, TaskId};
use crate::error::{Error, Result};

pub const WALL_FRACTION: f64 = 0.10;
pub const WATER_FRACTION: f64 = 0.10;

/// Rewards are kept in integer tenths so episode totals are exact.
pub const STEP_PENALTY_TENTHS: i32 = -1;
pub const WATER_PENALTY_TENTHS: i32 = -3;
pub const COMPLETION_REWARD_TENTHS: i32 = 10;

const MAP_ATTEMPTS: usize = 64;
const PLACEMENT_ATTEMPTS: usize = 16;

/// How sub-tasks map onto episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    /// Tasks follow each other inside one episode over a fixed map.
    Chain,
    /// One task per episode; the episode ends when it is completed.
    SingleTask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    pub episode_len: usize,
    pub tasks: Vec<TaskId>,
    pub mode: EpisodeMode,
}

impl WorldConfig {
    /// Four taxi sub-tasks, chained, on a square map.
    pub fn taxi(size: usize, episode_len: usize) -> Self {
        WorldConfig {
            width: size,
            height: size,
            episode_len,
            tasks: TaskId::TAXI.to_vec(),
            mode: EpisodeMode::Chain,
        }
    }

    pub fn with_tasks(mut self, tasks: &[TaskId]) -> Self {
        self.tasks = tasks.to_vec();
        self
    }

    pub fn with_mode(mut self, mode: EpisodeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn cargo_enabled(&self) -> bool {
        self.tasks.iter().any(|t| t.uses_cargo())
    }

    pub fn enabled(&self, t: TaskId) -> bool {
        self.tasks.contains(&t)
    }

    pub fn chain_starts(&self) -> Vec<TaskId> {
        let mut s: Vec<TaskId> = self.tasks.iter().copied().filter(|t| t.is_chain_start()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.width * self.height < 25 {
            return Err(Error::Config(format!(
                "map {}x{} is smaller than 25 cells",
                self.width, self.height
            )));
        }
        if self.episode_len == 0 {
            return Err(Error::Config("episode_len must be positive".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("task set is empty".into()));
        }
        if self.mode == EpisodeMode::Chain && self.chain_starts().is_empty() {
            return Err(Error::Config(
                "chained episodes need ReachP or ReachC in the task set".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub reward_tenths: i32,
    /// `d_t`: the current task's success predicate fired on this step.
    pub completion: bool,
    pub completed_task: Option<TaskId>,
    pub episode_done: bool,
    /// Task active after this step.
    pub next_task: TaskId,
    pub relocated: bool,
}

#[derive(Clone, Debug)]
pub struct GridWorld {
    cfg: WorldConfig,
    cells: Vec<Cell>,
    taxi: Pos,
    passenger: Item,
    cargo: Item,
    target: Pos,
    current_task: TaskId,
    step_count: usize,
    tasks_since_relocation: usize,
    relocation_quota: usize,
    done: bool,
    /// Passable cells connected to the target; every placement draws from it.
    region: Vec<Pos>,
    rng: ChaCha8Rng,
}

impl GridWorld {
    /// Fresh world with a random map. Each episode after the first is drawn
    /// from the same generator by [`GridWorld::reset`].
    pub fn generate(seed: u64, cfg: WorldConfig) -> Result<GridWorld> {
        cfg.validate()?;
        let mut w = GridWorld {
            cells: vec![Cell::Empty; cfg.width * cfg.height],
            taxi: Pos::new(0, 0),
            passenger: Item::Absent,
            cargo: Item::Absent,
            target: Pos::new(0, 0),
            current_task: TaskId::ReachP,
            step_count: 0,
            tasks_since_relocation: 0,
            relocation_quota: 2,
            done: false,
            region: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        };
        w.reset()?;
        Ok(w)
    }

    /// Starts a new episode on a newly generated map.
    pub fn reset(&mut self) -> Result<()> {
        let (width, height) = (self.cfg.width, self.cfg.height);
        let n = width * height;
        let walls = (WALL_FRACTION * n as f64).floor() as usize;
        let water = (WATER_FRACTION * n as f64).floor() as usize;
        let cargo = self.cfg.cargo_enabled();
        let k = if cargo { 4 } else { 3 };
        for _ in 0..MAP_ATTEMPTS {
            let mut cells = vec![Cell::Empty; n];
            for (i, idx) in sample(&mut self.rng, n, walls + water).into_iter().enumerate() {
                cells[idx] = if i < walls { Cell::Wall } else { Cell::Water };
            }
            let passable: Vec<usize> = (0..n).filter(|&i| cells[i].passable()).collect();
            if passable.len() < k + 2 {
                continue;
            }
            for _ in 0..PLACEMENT_ATTEMPTS {
                let picks: Vec<Pos> = sample(&mut self.rng, passable.len(), k)
                    .into_iter()
                    .map(|i| Pos::new(passable[i] / width, passable[i] % width))
                    .collect();
                let dist = bfs(&cells, width, height, picks[0]);
                if picks.iter().any(|p| dist[p.row * width + p.col].is_none()) {
                    continue;
                }
                let region: Vec<Pos> = (0..n)
                    .filter(|&i| dist[i].is_some())
                    .map(|i| Pos::new(i / width, i % width))
                    .collect();
                if region.len() < k + 2 {
                    continue;
                }
                self.cells = cells;
                self.region = region;
                self.taxi = picks[0];
                self.target = picks[1];
                self.passenger = Item::At(picks[2]);
                self.cargo = if cargo { Item::At(picks[3]) } else { Item::Absent };
                self.step_count = 0;
                self.tasks_since_relocation = 0;
                self.relocation_quota = self.draw_quota();
                self.done = false;
                self.current_task = self.initial_task();
                return Ok(());
            }
        }
        Err(Error::Generation {
            width,
            height,
            attempts: MAP_ATTEMPTS,
        })
    }

    fn draw_quota(&mut self) -> usize {
        self.rng.random_range(2..=3)
    }

    fn initial_task(&mut self) -> TaskId {
        match self.cfg.mode {
            EpisodeMode::Chain => {
                let starts = self.cfg.chain_starts();
                starts[self.rng.random_range(0..starts.len())]
            }
            EpisodeMode::SingleTask => {
                let t = self.cfg.tasks[self.rng.random_range(0..self.cfg.tasks.len())];
                // Put the world in a state where `t` is the logical next step.
                match t {
                    TaskId::ReachD | TaskId::DropoffP => self.passenger = Item::InTaxi,
                    TaskId::DeliverC => self.cargo = Item::InTaxi,
                    _ => {}
                }
                t
            }
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }
    pub fn width(&self) -> usize {
        self.cfg.width
    }
    pub fn height(&self) -> usize {
        self.cfg.height
    }
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
    pub fn cell(&self, p: Pos) -> Cell {
        self.cells[p.row * self.cfg.width + p.col]
    }
    pub fn taxi(&self) -> Pos {
        self.taxi
    }
    pub fn passenger(&self) -> Item {
        self.passenger
    }
    pub fn cargo(&self) -> Item {
        self.cargo
    }
    pub fn target(&self) -> Pos {
        self.target
    }
    pub fn current_task(&self) -> TaskId {
        self.current_task
    }
    pub fn step_count(&self) -> usize {
        self.step_count
    }
    pub fn is_done(&self) -> bool {
        self.done
    }
    pub fn tasks_since_relocation(&self) -> usize {
        self.tasks_since_relocation
    }
    pub fn relocation_quota(&self) -> usize {
        self.relocation_quota
    }
    pub fn region(&self) -> &[Pos] {
        &self.region
    }

    pub fn observe(&self) -> Observation {
        Observation::of(self)
    }

    /// Success predicate of `task` in the current state, given the action
    /// just applied. Reach tasks look at the taxi position after the move.
    fn predicate(&self, task: TaskId, action: Action) -> bool {
        match task {
            TaskId::ReachP => self.passenger == Item::At(self.taxi),
            TaskId::ReachC => self.cargo == Item::At(self.taxi),
            TaskId::ReachD => self.taxi == self.target && self.passenger == Item::InTaxi,
            TaskId::PickupP => action == Action::Pickup && self.passenger == Item::InTaxi,
            TaskId::PickupC => action == Action::Pickup && self.cargo == Item::InTaxi,
            TaskId::DropoffP => action == Action::Dropoff && self.passenger == Item::Delivered,
            TaskId::DeliverC => action == Action::Dropoff && self.cargo == Item::Delivered,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let mut tenths = if self.cell(self.taxi) == Cell::Water {
            WATER_PENALTY_TENTHS
        } else {
            STEP_PENALTY_TENTHS
        };
        let task = self.current_task;
        match action {
            Action::Pickup => match task {
                // Pickup/Dropoff only act when they serve the active task.
                TaskId::PickupP if self.passenger == Item::At(self.taxi) => self.passenger = Item::InTaxi,
                TaskId::PickupC if self.cargo == Item::At(self.taxi) => self.cargo = Item::InTaxi,
                _ => {}
            },
            Action::Dropoff => match task {
                TaskId::DropoffP if self.passenger == Item::InTaxi && self.taxi == self.target => {
                    self.passenger = Item::Delivered
                }
                TaskId::DeliverC if self.cargo == Item::InTaxi && self.taxi == self.target => {
                    self.cargo = Item::Delivered
                }
                _ => {}
            },
            mv => {
                let (dr, dc) = mv.delta().expect("move action");
                let r = self.taxi.row as isize + dr;
                let c = self.taxi.col as isize + dc;
                if r >= 0 && c >= 0 && (r as usize) < self.cfg.height && (c as usize) < self.cfg.width {
                    let np = Pos::new(r as usize, c as usize);
                    if self.cell(np).passable() {
                        self.taxi = np;
                    }
                }
            }
        }
        let completion = self.predicate(task, action);
        let mut relocated = false;
        if completion {
            tenths += COMPLETION_REWARD_TENTHS;
            if self.cfg.mode == EpisodeMode::Chain {
                relocated = self.advance();
            }
        }
        self.step_count += 1;
        self.done = self.step_count >= self.cfg.episode_len
            || (completion && self.cfg.mode == EpisodeMode::SingleTask);
        Ok(StepOutcome {
            observation: self.observe(),
            reward: tenths as f64 / 10.0,
            reward_tenths: tenths,
            completion,
            completed_task: completion.then_some(task),
            episode_done: self.done,
            next_task: self.current_task,
            relocated,
        })
    }

    /// Selects the task that follows the current one and applies the
    /// completion side effects (respawn at the end of a chain, periodic
    /// relocation). Only meaningful right after a completion; [`step`]
    /// calls it.
    ///
    /// [`step`]: GridWorld::step
    pub fn next_task(&mut self) -> TaskId {
        self.advance();
        self.current_task
    }

    fn advance(&mut self) -> bool {
        let finished = self.current_task;
        let next = finished.successor().filter(|t| self.cfg.enabled(*t));
        self.current_task = match next {
            Some(t) => t,
            None => {
                if finished.uses_cargo() {
                    self.cargo = Item::At(self.free_cell());
                } else {
                    self.passenger = Item::At(self.free_cell());
                }
                let starts = self.cfg.chain_starts();
                starts[self.rng.random_range(0..starts.len())]
            }
        };
        self.tasks_since_relocation += 1;
        if self.tasks_since_relocation >= self.relocation_quota {
            self.relocate();
            self.tasks_since_relocation = 0;
            self.relocation_quota = self.draw_quota();
            true
        } else {
            false
        }
    }

    fn occupied(&self) -> Vec<Pos> {
        let mut v = vec![self.taxi, self.target];
        v.extend(self.passenger.pos());
        v.extend(self.cargo.pos());
        v
    }

    /// Uniform cell of the target's region not holding the taxi, the target
    /// or an object.
    fn free_cell(&mut self) -> Pos {
        let taken = self.occupied();
        let free: Vec<Pos> = self.region.iter().copied().filter(|p| !taken.contains(p)).collect();
        free[self.rng.random_range(0..free.len())]
    }

    fn relocate(&mut self) {
        let candidates: Vec<Pos> = self.region.iter().copied().filter(|&p| p != self.target).collect();
        let on_map = 1 + self.passenger.pos().is_some() as usize + self.cargo.pos().is_some() as usize;
        let picks: Vec<Pos> = sample(&mut self.rng, candidates.len(), on_map)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        let mut it = picks.into_iter();
        self.taxi = it.next().expect("taxi placement");
        if self.passenger.pos().is_some() {
            self.passenger = Item::At(it.next().expect("passenger placement"));
        }
        if self.cargo.pos().is_some() {
            self.cargo = Item::At(it.next().expect("cargo placement"));
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        cfg: WorldConfig,
        cells: Vec<Cell>,
        taxi: Pos,
        passenger: Item,
        cargo: Item,
        target: Pos,
        current_task: TaskId,
        step_count: usize,
        tasks_since_relocation: usize,
        relocation_quota: usize,
        seed: u64,
    ) -> Result<GridWorld> {
        cfg.validate()?;
        if cells.len() != cfg.width * cfg.height {
            return Err(Error::dim("world cells", &[cells.len()], &[cfg.height, cfg.width]));
        }
        let dist = bfs(&cells, cfg.width, cfg.height, target);
        let region = (0..cells.len())
            .filter(|&i| dist[i].is_some())
            .map(|i| Pos::new(i / cfg.width, i % cfg.width))
            .collect();
        let done = step_count >= cfg.episode_len;
        let w = GridWorld {
            cells,
            taxi,
            passenger,
            cargo,
            target,
            current_task,
            step_count,
            tasks_since_relocation,
            relocation_quota,
            done,
            region,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        };
        if !w.cell(w.taxi).passable() {
            return Err(Error::Config("taxi placed on a wall".into()));
        }
        Ok(w)
    }
}

/// Default-configuration map: four chained taxi tasks, 400-step episodes.
pub fn generate_map(seed: u64, width: usize, height: usize) -> Result<GridWorld> {
    GridWorld::generate(
        seed,
        WorldConfig {
            width,
            height,
            episode_len: 400,
            tasks: TaskId::TAXI.to_vec(),
            mode: EpisodeMode::Chain,
        },
    )
}
