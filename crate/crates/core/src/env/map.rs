use std::collections::VecDeque;

use super::{Cell, GridWorld, Pos};

pub(crate) fn neighbours(p: Pos, width: usize, height: usize) -> impl Iterator<Item = Pos> {
    let (r, c) = (p.row as isize, p.col as isize);
    [(-1, 0), (1, 0), (0, -1), (0, 1)]
        .into_iter()
        .map(move |(dr, dc)| (r + dr, c + dc))
        .filter(move |&(nr, nc)| nr >= 0 && nc >= 0 && (nr as usize) < height && (nc as usize) < width)
        .map(|(nr, nc)| Pos::new(nr as usize, nc as usize))
}

/// Move counts from `from` to every cell; walls and unreachable cells are
/// `None`. Water is passable.
pub(crate) fn bfs(cells: &[Cell], width: usize, height: usize, from: Pos) -> Vec<Option<usize>> {
    let mut dist = vec![None; cells.len()];
    if !cells[from.row * width + from.col].passable() {
        return dist;
    }
    dist[from.row * width + from.col] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        let d = dist[p.row * width + p.col].expect("queued cells have a distance");
        for n in neighbours(p, width, height) {
            let k = n.row * width + n.col;
            if dist[k].is_none() && cells[k].passable() {
                dist[k] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Minimal number of moves between two cells, or `None` when unreachable.
pub fn shortest_path_oracle(world: &GridWorld, from: Pos, to: Pos) -> Option<usize> {
    bfs(world.cells(), world.width(), world.height(), from)[to.row * world.width() + to.col]
}

/// Connected components of passable cells, labelled from 0; walls get
/// `usize::MAX`.
pub fn components(cells: &[Cell], width: usize, height: usize) -> Vec<usize> {
    let mut label = vec![usize::MAX; cells.len()];
    let mut next = 0;
    for start in 0..cells.len() {
        if label[start] != usize::MAX || !cells[start].passable() {
            continue;
        }
        label[start] = next;
        let mut queue = VecDeque::from([Pos::new(start / width, start % width)]);
        while let Some(p) = queue.pop_front() {
            for n in neighbours(p, width, height) {
                let k = n.row * width + n.col;
                if label[k] == usize::MAX && cells[k].passable() {
                    label[k] = next;
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    label
}
