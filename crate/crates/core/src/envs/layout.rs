//! ASCII maze layouts for the grid pursuit game.
//!
//! Charset: `#` wall, `.` pill, `G` ghost spawn, `P` pac-man spawn, space
//! empty. Rows must all have the same width; a trailing newline is allowed.

use std::collections::VecDeque;

use crate::{Error, Result};

pub const OPEN_CLASSIC: &str = include_str!("../../layouts/open_classic.lay");
pub const MEDIUM_CLASSIC: &str = include_str!("../../layouts/medium_classic.lay");
pub const GRID9: &str = include_str!("../../layouts/grid9.lay");

/// Row-major `(row, col)` cell coordinate.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub pills: Vec<Cell>,
    pub ghost_spawns: Vec<Cell>,
    pub pacman_spawn: Cell,
}

impl GridLayout {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        let rows: Vec<&str> = text.split('\n').collect();
        let err = |line: usize, column: usize, message: String| Error::Parse { line, column, message };
        if rows.is_empty() || rows[0].is_empty() {
            return Err(err(1, 1, "empty layout".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::with_capacity(width * height);
        let mut pills = Vec::new();
        let mut ghost_spawns = Vec::new();
        let mut pacman_spawn = None;
        for (r, row) in rows.iter().enumerate() {
            let n = row.chars().count();
            if n != width {
                return Err(err(r + 1, n.min(width) + 1, format!("row has width {n}, expected {width}")));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    ' ' => walls.push(false),
                    '.' => {
                        walls.push(false);
                        pills.push((r, c));
                    }
                    'G' => {
                        walls.push(false);
                        ghost_spawns.push((r, c));
                    }
                    'P' => {
                        if pacman_spawn.is_some() {
                            return Err(err(r + 1, c + 1, "more than one pac-man spawn".into()));
                        }
                        walls.push(false);
                        pacman_spawn = Some((r, c));
                    }
                    other => return Err(err(r + 1, c + 1, format!("unknown character {other:?}"))),
                }
            }
        }
        if ghost_spawns.is_empty() {
            return Err(err(height, width, "layout has no ghost spawn 'G'".into()));
        }
        let pacman_spawn = pacman_spawn.ok_or_else(|| err(height, width, "layout has no pac-man spawn 'P'".into()))?;
        let layout = Self {
            width,
            height,
            walls,
            pills,
            ghost_spawns,
            pacman_spawn,
        };
        layout.check_connected()?;
        Ok(layout)
    }

    /// Bundled layouts by name, otherwise a path on disk.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "open_classic" => Self::parse(OPEN_CLASSIC),
            "medium_classic" => Self::parse(MEDIUM_CLASSIC),
            "grid9" => Self::parse(GRID9),
            path => Self::parse(&std::fs::read_to_string(path)?),
        }
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls[cell.0 * self.width + cell.1]
    }

    pub fn wall_count(&self) -> usize {
        self.walls.iter().filter(|&&w| w).count()
    }

    /// Non-wall cells in row-major order.
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| !self.is_wall(cell))
            .collect()
    }

    /// Moves off the grid edge are treated like moves into a wall.
    pub fn neighbor(&self, cell: Cell, action: usize) -> Cell {
        let (r, c) = cell;
        let target = match action {
            1 if r > 0 => (r - 1, c),
            2 if r + 1 < self.height => (r + 1, c),
            3 if c > 0 => (r, c - 1),
            4 if c + 1 < self.width => (r, c + 1),
            _ => return cell,
        };
        if self.is_wall(target) {
            cell
        } else {
            target
        }
    }

    fn check_connected(&self) -> Result<()> {
        let free = self.free_cells();
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([free[0]]);
        seen[free[0].0 * self.width + free[0].1] = true;
        let mut count = 0;
        while let Some(cell) = queue.pop_front() {
            count += 1;
            for a in 1..=4 {
                let n = self.neighbor(cell, a);
                let k = n.0 * self.width + n.1;
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back(n);
                }
            }
        }
        if count != free.len() {
            let stray = free.iter().find(|c| !seen[c.0 * self.width + c.1]).expect("unreached cell");
            return Err(Error::Parse {
                line: stray.0 + 1,
                column: stray.1 + 1,
                message: "free space is not connected".into(),
            });
        }
        Ok(())
    }
}
