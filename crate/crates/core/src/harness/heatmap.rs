use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::eval::run_episodes;
use crate::env::{GridWorld, TaskId, WorldConfig, WorldSnapshot};
use crate::error::{Error, Result};

/// Whether the taxi had entered the target cell before the ReachD
/// assignment whose steps are being counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    BeforeTargetVisit,
    AfterTargetVisit,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::BeforeTargetVisit => "before",
            Condition::AfterTargetVisit => "after",
        }
    }

    pub fn parse(s: &str) -> Result<Condition> {
        match s {
            "before" | "before_target_visit" => Ok(Condition::BeforeTargetVisit),
            "after" | "after_target_visit" => Ok(Condition::AfterTargetVisit),
            _ => Err(Error::Config(format!("unknown condition {s:?}; use before or after"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub width: usize,
    pub height: usize,
    /// Row-major visit counts.
    pub counts: Vec<u64>,
    pub condition: Condition,
}

impl HeatmapGrid {
    pub fn new(width: usize, height: usize, condition: Condition) -> Self {
        HeatmapGrid {
            width,
            height,
            counts: vec![0; width * height],
            condition,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Relative visit frequencies; all zero for an empty grid.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.width).map(|c| format!("c{c}")).collect();
        let _ = writeln!(out, "row,{}", header.join(","));
        for (r, row) in self.normalized().chunks(self.width).enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "{r},{}", cells.join(","));
        }
        out
    }

    /// Binary greyscale image, one pixel per cell, scaled so the most
    /// visited cell is white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        let max = self.counts.iter().copied().max().unwrap_or(0);
        out.extend(self.counts.iter().map(|&c| {
            if max == 0 {
                0
            } else {
                ((c as f64 / max as f64) * 255.0).round() as u8
            }
        }));
        out
    }

    /// Writes `<stem>.csv` and `<stem>.pgm`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let put = |name: String, bytes: &[u8]| {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|source| Error::File { path, source })
        };
        put(format!("{stem}.csv"), self.to_csv().as_bytes())?;
        put(format!("{stem}.pgm"), &self.to_pgm())
    }
}

/// Visit counts of the taxi during ReachD on one fixed map. The map comes
/// from `map_seed`; run `i` replays it from the same start with its own
/// generator. Every ReachD step adds one count at the cell the taxi acts
/// from, in the grid matching the condition of that assignment.
pub fn heatmap<A: Agent + ?Sized>(
    agent: &mut A,
    map_seed: u64,
    runs: usize,
    cfg: &WorldConfig,
) -> Result<[HeatmapGrid; 2]> {
    let base = GridWorld::generate(map_seed, cfg.clone())?.snapshot();
    heatmap_on(agent, &base, map_seed, runs)
}

/// Same as [`heatmap`] on a given starting world.
pub fn heatmap_on<A: Agent + ?Sized>(
    agent: &mut A,
    base: &WorldSnapshot,
    seed: u64,
    runs: usize,
) -> Result<[HeatmapGrid; 2]> {
    let worlds = (0..runs)
        .map(|r| base.to_world(seed.wrapping_add(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut grids = [
        HeatmapGrid::new(base.width, base.height, Condition::BeforeTargetVisit),
        HeatmapGrid::new(base.width, base.height, Condition::AfterTargetVisit),
    ];
    // Per run: target entered so far, and the condition of the current
    // ReachD assignment.
    let mut visited = vec![false; runs];
    let mut assigned: Vec<Option<Condition>> = vec![None; runs];
    run_episodes(agent, worlds, |run, before, _, out| {
        if before.current_task() == TaskId::ReachD {
            let cond = *assigned[run].get_or_insert(if visited[run] {
                Condition::AfterTargetVisit
            } else {
                Condition::BeforeTargetVisit
            });
            let taxi = before.taxi();
            let g = &mut grids[(cond == Condition::AfterTargetVisit) as usize];
            g.counts[taxi.row * g.width + taxi.col] += 1;
        }
        // A relocation can move the taxi off the cell it just reached, which
        // only matters when that cell is the target.
        if before.taxi() == before.target() || out.completed_task == Some(TaskId::ReachD) {
            visited[run] = true;
        }
        if out.completion || out.episode_done {
            assigned[run] = None;
        }
    })?;
    Ok(grids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::harness::agent::{FixedAgent, OracleAgent};

    #[test]
    fn stationary_agent_fills_one_cell() {
        let snap = WorldSnapshot::from_layout(
            &["T....", ".....", "..#..", ".....", "....D"],
            TaskId::ReachD,
            30,
            &TaskId::TAXI,
        )
        .unwrap();
        let [before, after] = heatmap_on(&mut FixedAgent(Action::Pickup), &snap, 1, 4).unwrap();
        assert!(after.is_empty());
        assert_eq!(before.total(), 4 * 30);
        let n = before.normalized();
        assert_eq!(n[0], 1.0);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_visits_avoid_walls_and_split_by_condition() {
        let cfg = WorldConfig::taxi(8, 150);
        let [before, after] = heatmap(&mut OracleAgent, 11, 5, &cfg).unwrap();
        let world = GridWorld::generate(11, cfg).unwrap();
        for g in [&before, &after] {
            for (i, &c) in g.counts.iter().enumerate() {
                if c > 0 {
                    assert!(world.cells()[i].passable());
                }
            }
        }
        assert!(!after.is_empty());
        let pgm = after.to_pgm();
        assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(pgm.len(), b"P5\n8 8\n255\n".len() + 64);
    }

    #[test]
    fn condition_names_parse() {
        for c in [Condition::BeforeTargetVisit, Condition::AfterTargetVisit] {
            assert_eq!(Condition::parse(c.name()).unwrap(), c);
        }
        assert!(Condition::parse("during").is_err());
    }
}
