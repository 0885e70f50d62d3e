//! Planar collision geometry over axis-aligned wall boxes.
//!
//! A wall is a closed axis-aligned box `[x1, x2] × [y1, y2]`; a box with zero
//! width or height is a plain segment. Points move axis by axis (x first) and
//! stop [`WALL_MARGIN`] short of the first face they would touch.

use std::collections::VecDeque;

/// Clearance kept between a moving point and any wall face.
pub const WALL_MARGIN: f64 = 1e-6;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    /// Normalises the corner order so `x1 <= x2` and `y1 <= y2`.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1: x1.min(x2),
            y1: y1.min(y2),
            x2: x1.max(x2),
            y2: y1.max(y2),
        }
    }

    pub fn distance(&self, p: Point) -> f64 {
        let dx = (self.x1 - p[0]).max(0.0).max(p[0] - self.x2);
        let dy = (self.y1 - p[1]).max(0.0).max(p[1] - self.y2);
        dx.hypot(dy)
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x1 && p[0] <= self.x2 && p[1] >= self.y1 && p[1] <= self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
}

/// Walls plus the workspace box that bounds every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bounds: Rect,
    pub walls: Vec<Rect>,
}

impl Geometry {
    /// Smallest distance from `p` to any wall or to the workspace border.
    pub fn clearance(&self, p: Point) -> f64 {
        let border = (p[0] - self.bounds.x1)
            .min(self.bounds.x2 - p[0])
            .min(p[1] - self.bounds.y1)
            .min(self.bounds.y2 - p[1]);
        self.walls
            .iter()
            .map(|w| w.distance(p))
            .fold(border, f64::min)
    }

    /// True when `p` keeps at least the wall margin from every wall and the border.
    pub fn is_free(&self, p: Point) -> bool {
        // Tolerate the rounding of `face - margin`.
        self.clearance(p) >= WALL_MARGIN * (1.0 - 1e-6)
    }

    /// Moves `p` by `d`, x then y, truncating each axis at the first wall face.
    pub fn move_point(&self, p: Point, d: Point) -> Point {
        let x = self.slide_x(p, d[0]);
        let y = self.slide_y([x, p[1]], d[1]);
        [x, y]
    }

    fn slide_x(&self, p: Point, dx: f64) -> f64 {
        let [x0, y] = p;
        if dx > 0.0 {
            let mut x1 = (x0 + dx).min(self.bounds.x2 - WALL_MARGIN);
            for w in &self.walls {
                if y >= w.y1 && y <= w.y2 && w.x1 > x0 && w.x1 - WALL_MARGIN < x1 {
                    x1 = w.x1 - WALL_MARGIN;
                }
            }
            x1.max(x0)
        } else if dx < 0.0 {
            let mut x1 = (x0 + dx).max(self.bounds.x1 + WALL_MARGIN);
            for w in &self.walls {
                if y >= w.y1 && y <= w.y2 && w.x2 < x0 && w.x2 + WALL_MARGIN > x1 {
                    x1 = w.x2 + WALL_MARGIN;
                }
            }
            x1.min(x0)
        } else {
            x0
        }
    }

    fn slide_y(&self, p: Point, dy: f64) -> f64 {
        let [x, y0] = p;
        if dy > 0.0 {
            let mut y1 = (y0 + dy).min(self.bounds.y2 - WALL_MARGIN);
            for w in &self.walls {
                if x >= w.x1 && x <= w.x2 && w.y1 > y0 && w.y1 - WALL_MARGIN < y1 {
                    y1 = w.y1 - WALL_MARGIN;
                }
            }
            y1.max(y0)
        } else if dy < 0.0 {
            let mut y1 = (y0 + dy).max(self.bounds.y1 + WALL_MARGIN);
            for w in &self.walls {
                if x >= w.x1 && x <= w.x2 && w.y2 < y0 && w.y2 + WALL_MARGIN > y1 {
                    y1 = w.y2 + WALL_MARGIN;
                }
            }
            y1.min(y0)
        } else {
            y0
        }
    }

    /// Nearest free point to `p` (identity when `p` is already free).
    ///
    /// Candidates are the margin-offset projections onto the faces of every box
    /// `p` violates, refined a few levels deep for points that land inside a
    /// neighbouring box.
    pub fn project_free(&self, p: Point) -> Point {
        let clamp = |p: Point| {
            [
                p[0].clamp(self.bounds.x1 + WALL_MARGIN, self.bounds.x2 - WALL_MARGIN),
                p[1].clamp(self.bounds.y1 + WALL_MARGIN, self.bounds.y2 - WALL_MARGIN),
            ]
        };
        let start = clamp(p);
        if self.is_free(start) {
            return start;
        }
        let dist2 = |q: Point| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        let mut frontier = vec![start];
        let mut best: Option<Point> = None;
        for _ in 0..4 {
            let mut next = Vec::new();
            for q in frontier {
                for w in self.walls.iter().filter(|w| w.distance(q) < WALL_MARGIN) {
                    for c in [
                        [w.x1 - WALL_MARGIN, q[1]],
                        [w.x2 + WALL_MARGIN, q[1]],
                        [q[0], w.y1 - WALL_MARGIN],
                        [q[0], w.y2 + WALL_MARGIN],
                    ] {
                        let c = clamp(c);
                        if self.is_free(c) {
                            if best.is_none_or(|b| dist2(c) < dist2(b)) {
                                best = Some(c);
                            }
                        } else {
                            next.push(c);
                        }
                    }
                }
            }
            if best.is_some() || next.is_empty() {
                break;
            }
            frontier = next;
        }
        best.unwrap_or(start)
    }
}

/// Reachable free space on a regular lattice, found by breadth-first search.
#[derive(Debug, Clone)]
pub struct FloodFill {
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    origin: Point,
    reachable: Vec<bool>,
}

impl FloodFill {
    /// Lattice points sit at cell centres `origin + (i + 0.5) * resolution`.
    /// Two 4-neighbours are connected when a straight axis move between them is
    /// not truncated by any wall.
    pub fn run(geometry: &Geometry, start: Point, resolution: f64) -> Self {
        let b = geometry.bounds;
        let nx = (b.width() / resolution).round() as usize;
        let ny = (b.height() / resolution).round() as usize;
        let origin = [b.x1, b.y1];
        let point = |i: usize, j: usize| {
            [
                origin[0] + (i as f64 + 0.5) * resolution,
                origin[1] + (j as f64 + 0.5) * resolution,
            ]
        };
        let si = (((start[0] - origin[0]) / resolution).floor() as usize).min(nx - 1);
        let sj = (((start[1] - origin[1]) / resolution).floor() as usize).min(ny - 1);
        let mut reachable = vec![false; nx * ny];
        let mut queue = VecDeque::new();
        if geometry.is_free(point(si, sj)) {
            reachable[sj * nx + si] = true;
            queue.push_back((si, sj));
        }
        while let Some((i, j)) = queue.pop_front() {
            let p = point(i, j);
            let neighbours = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            for (a, c) in neighbours {
                if a >= nx || c >= ny || reachable[c * nx + a] {
                    continue;
                }
                let q = point(a, c);
                if !geometry.is_free(q) {
                    continue;
                }
                let moved = geometry.move_point(p, [q[0] - p[0], q[1] - p[1]]);
                if (moved[0] - q[0]).abs() < 1e-12 && (moved[1] - q[1]).abs() < 1e-12 {
                    reachable[c * nx + a] = true;
                    queue.push_back((a, c));
                }
            }
        }
        Self {
            resolution,
            nx,
            ny,
            origin,
            reachable,
        }
    }

    pub fn reachable_points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.ny).flat_map(move |j| {
            (0..self.nx).filter_map(move |i| {
                self.reachable[j * self.nx + i].then(|| {
                    [
                        self.origin[0] + (i as f64 + 0.5) * self.resolution,
                        self.origin[1] + (j as f64 + 0.5) * self.resolution,
                    ]
                })
            })
        })
    }

    pub fn count(&self) -> usize {
        self.reachable.iter().filter(|&&r| r).count()
    }
}
