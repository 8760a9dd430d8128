use serde::{Deserialize, Serialize};

use super::{Cell, EpisodeMode, GridWorld, Item, Pos, TaskId, WorldConfig};
use crate::error::{Error, Result};

/// JSON view of a world: one string per map row using `.` empty, `#` wall,
/// `~` water, plus entity positions and the task clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<String>,
    pub taxi: Pos,
    pub passenger: Item,
    pub cargo: Item,
    pub target: Pos,
    pub task: TaskId,
    pub task_code: usize,
    pub step: usize,
    pub episode_len: usize,
    pub tasks: Vec<TaskId>,
    pub mode: EpisodeMode,
    pub tasks_since_relocation: usize,
    pub relocation_quota: usize,
}

impl GridWorld {
    pub fn snapshot(&self) -> WorldSnapshot {
        let cells = self
            .cells()
            .chunks(self.width())
            .map(|row| row.iter().map(|c| c.symbol()).collect())
            .collect();
        WorldSnapshot {
            width: self.width(),
            height: self.height(),
            cells,
            taxi: self.taxi(),
            passenger: self.passenger(),
            cargo: self.cargo(),
            target: self.target(),
            task: self.current_task(),
            task_code: self.current_task().code(),
            step: self.step_count(),
            episode_len: self.config().episode_len,
            tasks: self.config().tasks.clone(),
            mode: self.config().mode,
            tasks_since_relocation: self.tasks_since_relocation(),
            relocation_quota: self.relocation_quota(),
        }
    }
}

impl WorldSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<WorldSnapshot> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rebuilds a world in exactly this state; `seed` drives all randomness
    /// from here on (respawns, relocations, later episodes).
    pub fn to_world(&self, seed: u64) -> Result<GridWorld> {
        if self.cells.len() != self.height || self.cells.iter().any(|r| r.chars().count() != self.width) {
            return Err(Error::Config("snapshot rows do not match width/height".into()));
        }
        let cells = self
            .cells
            .iter()
            .flat_map(|r| r.chars())
            .map(|c| Cell::from_symbol(c).ok_or_else(|| Error::Config(format!("unknown map symbol {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let cfg = WorldConfig {
            width: self.width,
            height: self.height,
            episode_len: self.episode_len,
            tasks: self.tasks.clone(),
            mode: self.mode,
        };
        GridWorld::from_parts(
            cfg,
            cells,
            self.taxi,
            self.passenger,
            self.cargo,
            self.target,
            self.task,
            self.step,
            self.tasks_since_relocation,
            self.relocation_quota,
            seed,
        )
    }

    /// Hand-built world for tests and demos. `rows` use the map symbols plus
    /// `T` (taxi), `P` (passenger), `C` (cargo), `D` (target) on empty cells.
    pub fn from_layout(rows: &[&str], task: TaskId, episode_len: usize, tasks: &[TaskId]) -> Result<WorldSnapshot> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(height);
        let (mut taxi, mut passenger, mut cargo, mut target) = (None, Item::Absent, Item::Absent, None);
        for (r, row) in rows.iter().enumerate() {
            let mut line = String::with_capacity(width);
            for (c, ch) in row.chars().enumerate() {
                let p = Pos::new(r, c);
                match ch {
                    'T' => taxi = Some(p),
                    'P' => passenger = Item::At(p),
                    'C' => cargo = Item::At(p),
                    'D' => target = Some(p),
                    _ => {}
                }
                line.push(if "TPCD".contains(ch) { '.' } else { ch });
            }
            cells.push(line);
        }
        Ok(WorldSnapshot {
            width,
            height,
            cells,
            taxi: taxi.ok_or_else(|| Error::Config("layout has no taxi".into()))?,
            passenger,
            cargo,
            target: target.ok_or_else(|| Error::Config("layout has no target".into()))?,
            task,
            task_code: task.code(),
            step: 0,
            episode_len,
            tasks: tasks.to_vec(),
            mode: EpisodeMode::Chain,
            tasks_since_relocation: 0,
            relocation_quota: 3,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let w = GridWorld::generate(9, WorldConfig::taxi(6, 40)).unwrap();
        let snap = w.snapshot();
        let text = snap.to_json();
        assert!(text.contains("\"cells\""));
        let back = WorldSnapshot::from_json(&text).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_world(0).unwrap().snapshot(), snap);
    }

    #[test]
    fn layout_parsing() {
        let s = WorldSnapshot::from_layout(&["T.#..", "..~..", "P...D", ".....", "....."], TaskId::ReachP, 10, &TaskId::TAXI)
            .unwrap();
        assert_eq!(s.taxi, Pos::new(0, 0));
        assert_eq!(s.passenger, Item::At(Pos::new(2, 0)));
        assert_eq!(s.target, Pos::new(2, 4));
        assert_eq!(s.cells[0], "..#..");
    }
}
