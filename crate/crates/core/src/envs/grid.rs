use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A grid coordinate. `x` grows east, `y` grows north.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl From<[usize; 2]> for Cell {
    fn from([x, y]: [usize; 2]) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Walls of a rectangular scenario. Anything outside the rectangle is wall.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    walls: Vec<bool>,
}

impl GridMap {
    pub fn open(width: usize, height: usize) -> Self {
        GridMap {
            width,
            height,
            walls: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn set_wall(&mut self, cell: Cell, wall: bool) {
        let i = cell.y * self.width + cell.x;
        self.walls[i] = wall;
    }

    /// Whether the signed coordinate is a wall or outside the map.
    pub fn blocked(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return true;
        }
        self.walls[y as usize * self.width + x as usize]
    }

    pub fn is_walkable(&self, cell: Cell) -> bool {
        !self.blocked(cell.x as i64, cell.y as i64)
    }

    /// Walkable cells in row-major order (south row first).
    pub fn walkable_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Cell::new(x, y)))
            .filter(|&c| self.is_walkable(c))
            .collect()
    }

    /// 4-connected breadth-first distances from `source`; `None` where unreachable.
    pub fn distances_from(&self, source: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        if !self.is_walkable(source) {
            return dist;
        }
        let mut queue = VecDeque::new();
        dist[source.y * self.width + source.x] = Some(0);
        queue.push_back(source);
        while let Some(c) = queue.pop_front() {
            let d = dist[c.y * self.width + c.x].unwrap_or(0);
            for (dx, dy) in [(0i64, 1i64), (0, -1), (-1, 0), (1, 0)] {
                let (nx, ny) = (c.x as i64 + dx, c.y as i64 + dy);
                if self.blocked(nx, ny) {
                    continue;
                }
                let i = ny as usize * self.width + nx as usize;
                if dist[i].is_none() {
                    dist[i] = Some(d + 1);
                    queue.push_back(Cell::new(nx as usize, ny as usize));
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<usize> {
        self.distances_from(from)[to.y * self.width + to.x]
    }

    /// Rooms of `room_size` cells laid out west to east, separated by
    /// one-cell walls. Walls are placed by recursive division of the room
    /// strip; each wall gets a single seeded doorway.
    pub fn maze<R: Rng + ?Sized>(rooms: usize, room_size: usize, rng: &mut R) -> Self {
        let width = rooms * room_size + rooms.saturating_sub(1);
        let mut grid = GridMap::open(width, room_size);
        divide(&mut grid, 0, rooms, room_size, rng);
        grid
    }
}

fn divide<R: Rng + ?Sized>(grid: &mut GridMap, lo: usize, hi: usize, room_size: usize, rng: &mut R) {
    if hi - lo < 2 {
        return;
    }
    let split = rng.gen_range(lo + 1..hi);
    let wall_x = split * (room_size + 1) - 1;
    let door = rng.gen_range(0..grid.height);
    for y in 0..grid.height {
        grid.set_wall(Cell::new(wall_x, y), y != door);
    }
    divide(grid, lo, split, room_size, rng);
    divide(grid, split, hi, room_size, rng);
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn maze_has_one_door_per_dividing_wall() {
        for seed in 0..20 {
            let grid = GridMap::maze(3, 6, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(grid.width(), 20);
            assert_eq!(grid.height(), 6);
            for wall_x in [6usize, 13] {
                let open = (0..6).filter(|&y| grid.is_walkable(Cell::new(wall_x, y))).count();
                assert_eq!(open, 1);
            }
            let cells = grid.walkable_cells();
            let dist = grid.distances_from(cells[0]);
            assert!(cells.iter().all(|c| dist[c.y * 20 + c.x].is_some()));
        }
    }

    #[test]
    fn outside_is_blocked() {
        let grid = GridMap::open(3, 3);
        assert!(grid.blocked(-1, 0));
        assert!(grid.blocked(0, 3));
        assert!(!grid.blocked(2, 2));
    }
}
