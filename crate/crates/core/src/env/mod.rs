//! Randomized, partially observable multi-task Taxi world.
//!
//! A map is regenerated every episode: 10% walls, 10% water, a fixed target
//! and pickable objects (a passenger, optionally a cargo). Sub-tasks are
//! chained inside one episode; completing one emits `d = 1`, selects the
//! logical successor, and every two or three completions the taxi and the
//! objects are moved while the map and the target stay put.

mod map;
mod observe;
mod snapshot;
mod world;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use map::{components, shortest_path_oracle};
pub use observe::{
    Observation, CHANNELS, CH_CARGO, CH_OUTSIDE, CH_PASSENGER, CH_TARGET, CH_WALL, CH_WATER, VIEW, VIEW_RADIUS,
};
pub use snapshot::WorldSnapshot;
pub use world::{
    generate_map, EpisodeMode, GridWorld, StepOutcome, WorldConfig, COMPLETION_REWARD_TENTHS, STEP_PENALTY_TENTHS,
    WATER_PENALTY_TENTHS,
};

/// Sub-task identifiers. The integer codes index rows of the task
/// embedding and are part of the checkpoint format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    ReachP = 0,
    PickupP = 1,
    ReachD = 2,
    DropoffP = 3,
    ReachC = 4,
    PickupC = 5,
    DeliverC = 6,
}

impl TaskId {
    pub const COUNT: usize = 7;
    pub const ALL: [TaskId; 7] = [
        TaskId::ReachP,
        TaskId::PickupP,
        TaskId::ReachD,
        TaskId::DropoffP,
        TaskId::ReachC,
        TaskId::PickupC,
        TaskId::DeliverC,
    ];
    pub const TAXI: [TaskId; 4] = [TaskId::ReachP, TaskId::PickupP, TaskId::ReachD, TaskId::DropoffP];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<TaskId> {
        TaskId::ALL.get(code).copied().ok_or(Error::UnknownTask(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::ReachP => "ReachP",
            TaskId::PickupP => "PickupP",
            TaskId::ReachD => "ReachD",
            TaskId::DropoffP => "DropoffP",
            TaskId::ReachC => "ReachC",
            TaskId::PickupC => "PickupC",
            TaskId::DeliverC => "DeliverC",
        }
    }

    pub fn parse(s: &str) -> Result<TaskId> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown task {s:?}; valid tasks: {}",
                    TaskId::ALL.map(TaskId::name).join(", ")
                ))
            })
    }

    pub fn uses_cargo(self) -> bool {
        matches!(self, TaskId::ReachC | TaskId::PickupC | TaskId::DeliverC)
    }

    /// Next task in the same delivery chain.
    pub fn successor(self) -> Option<TaskId> {
        match self {
            TaskId::ReachP => Some(TaskId::PickupP),
            TaskId::PickupP => Some(TaskId::ReachD),
            TaskId::ReachD => Some(TaskId::DropoffP),
            TaskId::ReachC => Some(TaskId::PickupC),
            TaskId::PickupC => Some(TaskId::DeliverC),
            TaskId::DropoffP | TaskId::DeliverC => None,
        }
    }

    pub fn is_chain_start(self) -> bool {
        matches!(self, TaskId::ReachP | TaskId::ReachC)
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Pickup = 4,
    Dropoff = 5,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Pickup,
        Action::Dropoff,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Action> {
        Action::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::Usage(format!("action code {code} out of range")))
    }

    /// Row/column offset of a move, `None` for Pickup/Dropoff.
    pub fn delta(self) -> Option<(isize, isize)> {
        match self {
            Action::Up => Some((-1, 0)),
            Action::Down => Some((1, 0)),
            Action::Left => Some((0, -1)),
            Action::Right => Some((0, 1)),
            Action::Pickup | Action::Dropoff => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    pub fn chebyshev(self, other: Pos) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Wall,
    Water,
}

impl Cell {
    pub fn symbol(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Wall => '#',
            Cell::Water => '~',
        }
    }

    pub fn from_symbol(c: char) -> Option<Cell> {
        match c {
            '.' => Some(Cell::Empty),
            '#' => Some(Cell::Wall),
            '~' => Some(Cell::Water),
            _ => None,
        }
    }

    pub fn passable(self) -> bool {
        self != Cell::Wall
    }
}

/// Where a pickable object is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    At(Pos),
    InTaxi,
    Delivered,
    Absent,
}

impl Item {
    pub fn pos(self) -> Option<Pos> {
        match self {
            Item::At(p) => Some(p),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        for (i, t) in TaskId::ALL.iter().enumerate() {
            assert_eq!(t.code(), i);
            assert_eq!(TaskId::from_code(i).unwrap(), *t);
            assert_eq!(TaskId::parse(t.name()).unwrap(), *t);
        }
        assert!(TaskId::from_code(7).is_err());
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.code(), i);
        }
    }

    #[test]
    fn chains() {
        let mut t = TaskId::ReachP;
        let mut seen = vec![t];
        while let Some(n) = t.successor() {
            seen.push(n);
            t = n;
        }
        assert_eq!(seen, TaskId::TAXI);
        assert_eq!(TaskId::ReachC.successor(), Some(TaskId::PickupC));
        assert_eq!(TaskId::DeliverC.successor(), None);
    }
}
