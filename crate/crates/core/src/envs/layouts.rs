//! Built-in environment geometries.
//!
//! Mazes are drawn as character grids (`#` wall, `.` free, `S` start cell,
//! `G` goal cell), top row first, one unit per cell. Wall cells are merged into
//! as few boxes as possible and the oracle route is the shortest 4-connected
//! cell path from `S` to `G`, compressed to its corner cells.

use std::collections::VecDeque;

use crate::envs::geometry::{Geometry, Point, Rect};

/// Inward rectangular spiral on an 11×11 grid. Corridors are one cell wide and
/// separated by one-cell walls; the goal is the centre cell.
pub const SPIRAL_11: &str = "\
...........
.#########.
.#.......#.
.#.#####.#.
.#.#####.#.
.#.#.G##.#.
.#.#.###.#.
.#.#.###.#.
.#.#.....#.
.#.#######.
S#.........";

/// The same spiral with the goal cell sealed off on all four sides.
pub const SPIRAL_11_SEALED: &str = "\
...........
.#########.
.#.......#.
.#.#####.#.
.#.#####.#.
.#.##G##.#.
.#.#.###.#.
.#.#.###.#.
.#.#.....#.
.#.#######.
S#.........";

#[derive(Debug, Clone)]
pub struct GridMaze {
    pub width: usize,
    pub height: usize,
    /// `wall[row][col]` with row 0 at the bottom.
    pub wall: Vec<Vec<bool>>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

impl GridMaze {
    /// Parses a character grid. Panics on malformed built-in layouts.
    pub fn parse(text: &str) -> Self {
        let rows: Vec<&str> = text.lines().collect();
        let height = rows.len();
        let width = rows[0].len();
        let mut wall = vec![vec![false; width]; height];
        let mut start = None;
        let mut goal = None;
        for (text_row, line) in rows.iter().enumerate() {
            assert_eq!(line.len(), width, "ragged maze row");
            let row = height - 1 - text_row;
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '#' => wall[row][col] = true,
                    '.' => {}
                    'S' => start = Some((col, row)),
                    'G' => goal = Some((col, row)),
                    other => panic!("unknown maze cell {other:?}"),
                }
            }
        }
        Self {
            width,
            height,
            wall,
            start: start.expect("maze needs a start cell"),
            goal: goal.expect("maze needs a goal cell"),
        }
    }

    pub fn cell_center(cell: (usize, usize)) -> Point {
        [cell.0 as f64 + 0.5, cell.1 as f64 + 0.5]
    }

    /// Wall cells merged row-wise into runs, then runs with identical column
    /// spans stacked vertically.
    pub fn wall_rects(&self) -> Vec<Rect> {
        let mut open: Vec<(usize, usize, usize, usize)> = Vec::new(); // (c0, c1, r0, r1)
        let mut done = Vec::new();
        for row in 0..self.height {
            let mut runs = Vec::new();
            let mut col = 0;
            while col < self.width {
                if self.wall[row][col] {
                    let c0 = col;
                    while col < self.width && self.wall[row][col] {
                        col += 1;
                    }
                    runs.push((c0, col));
                } else {
                    col += 1;
                }
            }
            let mut still_open = Vec::new();
            for rect in open.drain(..) {
                if let Some(pos) = runs.iter().position(|&(a, b)| a == rect.0 && b == rect.1) {
                    runs.remove(pos);
                    still_open.push((rect.0, rect.1, rect.2, row + 1));
                } else {
                    done.push(rect);
                }
            }
            still_open.extend(runs.into_iter().map(|(a, b)| (a, b, row, row + 1)));
            open = still_open;
        }
        done.extend(open);
        done.sort_by_key(|&(c0, _, r0, _)| (r0, c0));
        done.into_iter()
            .map(|(c0, c1, r0, r1)| Rect::new(c0 as f64, r0 as f64, c1 as f64, r1 as f64))
            .collect()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            bounds: Rect::new(0.0, 0.0, self.width as f64, self.height as f64),
            walls: self.wall_rects(),
        }
    }

    /// Shortest 4-connected cell path from start to goal, if one exists.
    pub fn cell_path(&self) -> Option<Vec<(usize, usize)>> {
        let idx = |(c, r): (usize, usize)| r * self.width + c;
        let mut prev = vec![usize::MAX; self.width * self.height];
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([self.start]);
        seen[idx(self.start)] = true;
        while let Some((c, r)) = queue.pop_front() {
            if (c, r) == self.goal {
                let mut path = vec![(c, r)];
                let mut cur = idx((c, r));
                while prev[cur] != usize::MAX {
                    cur = prev[cur];
                    path.push((cur % self.width, cur / self.width));
                }
                path.reverse();
                return Some(path);
            }
            let steps = [
                (c.wrapping_sub(1), r),
                (c + 1, r),
                (c, r.wrapping_sub(1)),
                (c, r + 1),
            ];
            for (nc, nr) in steps {
                if nc < self.width && nr < self.height && !self.wall[nr][nc] && !seen[idx((nc, nr))]
                {
                    seen[idx((nc, nr))] = true;
                    prev[idx((nc, nr))] = idx((c, r));
                    queue.push_back((nc, nr));
                }
            }
        }
        None
    }
}

/// Keeps the first and last cells and every cell where the path turns.
pub fn corner_waypoints(path: &[(usize, usize)]) -> Vec<Point> {
    let mut out = Vec::new();
    for i in 1..path.len() {
        let turn = i + 1 < path.len() && {
            let a = path[i - 1];
            let b = path[i];
            let c = path[i + 1];
            (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64)
                != (c.0 as i64 - b.0 as i64, c.1 as i64 - b.1 as i64)
        };
        if turn || i + 1 == path.len() {
            out.push(GridMaze::cell_center(path[i]));
        }
    }
    out
}

/// Divider for the pusher toy: a 0.2-thick vertical wall at x = 5 with a
/// one-unit gap centred on y = 5, inside a 10×10 workspace.
pub fn pusher_geometry() -> Geometry {
    Geometry {
        bounds: Rect::new(0.0, 0.0, 10.0, 10.0),
        walls: vec![
            Rect::new(4.9, 0.0, 5.1, 4.5),
            Rect::new(4.9, 5.5, 5.1, 10.0),
        ],
    }
}
