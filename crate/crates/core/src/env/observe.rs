use super::{Cell, GridWorld, Item, Pos};

/// Window side length.
pub const VIEW: usize = 7;
pub const VIEW_RADIUS: usize = VIEW / 2;

/// Indicator planes, in order: wall, water, passenger, cargo, target,
/// out-of-bounds.
pub const CHANNELS: usize = 6;
pub const CH_WALL: usize = 0;
pub const CH_WATER: usize = 1;
pub const CH_PASSENGER: usize = 2;
pub const CH_CARGO: usize = 3;
pub const CH_TARGET: usize = 4;
pub const CH_OUTSIDE: usize = 5;

/// Egocentric view centred on the taxi. Holds no absolute coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// `[CHANNELS, VIEW, VIEW]`, row-major.
    pub grid: Vec<f32>,
    /// Passenger in taxi, cargo in taxi.
    pub carrying: [f32; 2],
}

impl Observation {
    pub const GRID_LEN: usize = CHANNELS * VIEW * VIEW;

    pub fn of(world: &GridWorld) -> Observation {
        let mut grid = vec![0.0; Self::GRID_LEN];
        let taxi = world.taxi();
        let r = VIEW_RADIUS as isize;
        let visible = |item: Item| item.pos();
        for dy in -r..=r {
            for dx in -r..=r {
                let cell = ((dy + r) as usize) * VIEW + (dx + r) as usize;
                let y = taxi.row as isize + dy;
                let x = taxi.col as isize + dx;
                if y < 0 || x < 0 || y as usize >= world.height() || x as usize >= world.width() {
                    grid[CH_OUTSIDE * VIEW * VIEW + cell] = 1.0;
                    continue;
                }
                let p = Pos::new(y as usize, x as usize);
                match world.cell(p) {
                    Cell::Wall => grid[CH_WALL * VIEW * VIEW + cell] = 1.0,
                    Cell::Water => grid[CH_WATER * VIEW * VIEW + cell] = 1.0,
                    Cell::Empty => {}
                }
                if visible(world.passenger()) == Some(p) {
                    grid[CH_PASSENGER * VIEW * VIEW + cell] = 1.0;
                }
                if visible(world.cargo()) == Some(p) {
                    grid[CH_CARGO * VIEW * VIEW + cell] = 1.0;
                }
                if world.target() == p {
                    grid[CH_TARGET * VIEW * VIEW + cell] = 1.0;
                }
            }
        }
        Observation {
            grid,
            carrying: [
                (world.passenger() == Item::InTaxi) as u8 as f32,
                (world.cargo() == Item::InTaxi) as u8 as f32,
            ],
        }
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        &self.grid[ch * VIEW * VIEW..(ch + 1) * VIEW * VIEW]
    }

    /// All-zero observation, used for padding and tests.
    pub fn blank() -> Observation {
        Observation {
            grid: vec![0.0; Self::GRID_LEN],
            carrying: [0.0; 2],
        }
    }
}
