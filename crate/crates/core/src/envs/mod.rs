//! Deterministic desk-scale environments.
//!
//! * `spiral-maze`: a point agent in an 11×11 inward spiral; the goal is the
//!   centre cell.
//! * `impossible-maze`: the same spiral with the goal cell walled off.
//! * `pusher-2d`: a point hand that drags a point block through the gap of a
//!   dividing wall. This is a small stand-in for tabletop manipulation tasks,
//!   not a model of any particular robot.
//!
//! Every episode has a fixed length; reaching the goal does not end it.

mod format;
pub mod geometry;
pub mod layouts;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use geometry::{FloodFill, Geometry, Point, Rect, WALL_MARGIN};

use crate::{Error, Result};

pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    SpiralMaze,
    ImpossibleMaze,
    Pusher2d,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::SpiralMaze => "spiral-maze",
            EnvKind::ImpossibleMaze => "impossible-maze",
            EnvKind::Pusher2d => "pusher-2d",
        }
    }

    pub fn is_maze(self) -> bool {
        !matches!(self, EnvKind::Pusher2d)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spiral-maze" => Ok(EnvKind::SpiralMaze),
            "impossible-maze" => Ok(EnvKind::ImpossibleMaze),
            "pusher-2d" => Ok(EnvKind::Pusher2d),
            other => Err(Error::Config(format!("unknown environment kind {other:?}"))),
        }
    }
}

/// A state of either environment family.
///
/// Mazes use `(agent_x, agent_y)`; the pusher uses
/// `(hand_x, hand_y, block_x, block_y)`.
#[derive(Clone, Copy, PartialEq)]
pub struct Observation {
    len: u8,
    values: [f64; 4],
}

impl Observation {
    pub fn new(values: &[f64]) -> Self {
        assert!(
            values.len() == 2 || values.len() == 4,
            "observations have 2 or 4 coordinates"
        );
        let mut v = [0.0; 4];
        v[..values.len()].copy_from_slice(values);
        Self {
            len: values.len() as u8,
            values: v,
        }
    }

    pub fn maze(x: f64, y: f64) -> Self {
        Self::new(&[x, y])
    }

    pub fn pusher(hand: Point, block: Point) -> Self {
        Self::new(&[hand[0], hand[1], block[0], block[1]])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len as usize]
    }

    pub fn dim(&self) -> usize {
        self.len as usize
    }

    fn point(&self, i: usize) -> Point {
        [self.values[2 * i], self.values[2 * i + 1]]
    }

    fn set_point(&mut self, i: usize, p: Point) {
        self.values[2 * i] = p[0];
        self.values[2 * i + 1] = p[1];
    }
}

impl fmt::Debug for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// A 2-D command; components are clipped to `[-1, 1]` before use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVec(pub [f64; ACTION_DIM]);

impl ActionVec {
    pub fn clipped(self) -> Self {
        Self(self.0.map(|a| a.clamp(-1.0, 1.0)))
    }
}

/// Full description of one environment: geometry, start, goal and dynamics constants.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub episode_length: usize,
    /// Displacement per unit action, per axis.
    pub step_scale: f64,
    pub success_radius: f64,
    /// Pusher only: the hand drags the block when within this distance.
    pub contact_radius: f64,
    /// Uniform per-axis jitter applied to every start coordinate on reset.
    pub start_jitter: f64,
    pub geometry: Geometry,
    pub nominal_start: Observation,
    pub target_goal: Observation,
    /// Route followed by the scripted oracle (agent or hand positions).
    pub oracle_waypoints: Vec<Point>,
}

impl EnvSpec {
    pub fn spiral_maze() -> Self {
        Self::from_grid(EnvKind::SpiralMaze, layouts::SPIRAL_11)
    }

    pub fn impossible_maze() -> Self {
        Self::from_grid(EnvKind::ImpossibleMaze, layouts::SPIRAL_11_SEALED)
    }

    pub fn pusher_2d() -> Self {
        let block_start = [2.5, 5.0];
        let block_goal = [7.5, 5.0];
        Self {
            kind: EnvKind::Pusher2d,
            episode_length: 125,
            step_scale: 0.2,
            success_radius: 0.3,
            contact_radius: 0.15,
            start_jitter: 0.1,
            geometry: layouts::pusher_geometry(),
            nominal_start: Observation::pusher([1.5, 1.5], block_start),
            target_goal: Observation::pusher(block_goal, block_goal),
            oracle_waypoints: vec![block_start, block_goal],
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::SpiralMaze => Self::spiral_maze(),
            EnvKind::ImpossibleMaze => Self::impossible_maze(),
            EnvKind::Pusher2d => Self::pusher_2d(),
        }
    }

    fn from_grid(kind: EnvKind, text: &str) -> Self {
        let maze = layouts::GridMaze::parse(text);
        let start = layouts::GridMaze::cell_center(maze.start);
        let goal = layouts::GridMaze::cell_center(maze.goal);
        // The sealed layout has no route; its oracle stops at the last open
        // cell of the open spiral so it still documents the intended path.
        let route = maze
            .cell_path()
            .or_else(|| layouts::GridMaze::parse(layouts::SPIRAL_11).cell_path())
            .expect("spiral layout is connected");
        let mut waypoints = layouts::corner_waypoints(&route);
        if maze.cell_path().is_none() {
            waypoints.pop();
        }
        Self {
            kind,
            episode_length: 100,
            step_scale: 1.0,
            success_radius: 0.5,
            contact_radius: 0.0,
            start_jitter: 0.1,
            geometry: maze.geometry(),
            nominal_start: Observation::new(&start),
            target_goal: Observation::new(&goal),
            oracle_waypoints: waypoints,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.nominal_start.dim()
    }

    pub fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    /// Start state with uniform jitter on every coordinate, deterministic in `seed`.
    pub fn reset(&self, seed: u64) -> Observation {
        self.reset_with(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn reset_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        let mut obs = self.nominal_start;
        let j = self.start_jitter;
        for i in 0..obs.dim() / 2 {
            let p = obs.point(i);
            let jittered = [
                p[0] + rng.random_range(-j..=j),
                p[1] + rng.random_range(-j..=j),
            ];
            obs.set_point(i, self.geometry.project_free(jittered));
        }
        obs
    }

    /// Deterministic one-step dynamics.
    pub fn transition(&self, obs: &Observation, action: ActionVec) -> Observation {
        let a = action.clipped().0;
        let d = [self.step_scale * a[0], self.step_scale * a[1]];
        let mut next = *obs;
        match self.kind {
            EnvKind::SpiralMaze | EnvKind::ImpossibleMaze => {
                next.set_point(0, self.geometry.move_point(obs.point(0), d));
            }
            EnvKind::Pusher2d => {
                let hand = obs.point(0);
                let block = obs.point(1);
                let moved = self.geometry.move_point(hand, d);
                next.set_point(0, moved);
                if distance(hand, block) <= self.contact_radius {
                    let disp = [moved[0] - hand[0], moved[1] - hand[1]];
                    next.set_point(1, self.geometry.move_point(block, disp));
                }
            }
        }
        next
    }

    /// Coordinates the task is judged on: the agent for mazes, the block for the pusher.
    pub fn object_xy(&self, obs: &Observation) -> Point {
        match self.kind {
            EnvKind::Pusher2d => obs.point(1),
            _ => obs.point(0),
        }
    }

    /// Closed-ball test of the task coordinates against `goal_xy`.
    pub fn within(&self, obs: &Observation, goal_xy: Point) -> bool {
        distance(self.object_xy(obs), goal_xy) <= self.success_radius
    }

    pub fn success(&self, obs: &Observation) -> bool {
        self.within(obs, self.object_xy(&self.target_goal))
    }

    /// Offsets the block by a uniform per-axis sample in `[-magnitude, magnitude]`
    /// and projects the result back into free space.
    pub fn perturb(&self, obs: &Observation, seed: u64, magnitude: f64) -> Result<Observation> {
        if self.kind != EnvKind::Pusher2d {
            return Err(Error::Unsupported(format!(
                "perturb is defined for pusher-2d only, not {}",
                self.kind
            )));
        }
        if !(magnitude >= 0.0) {
            return Err(Error::Config(format!(
                "perturbation magnitude {magnitude} < 0"
            )));
        }
        if magnitude == 0.0 {
            return Ok(*obs);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = obs.point(1);
        let target = [
            block[0] + rng.random_range(-magnitude..=magnitude),
            block[1] + rng.random_range(-magnitude..=magnitude),
        ];
        let mut out = *obs;
        out.set_point(1, self.geometry.project_free(target));
        Ok(out)
    }

    /// True when every point of `obs` keeps the wall margin.
    pub fn is_valid(&self, obs: &Observation) -> bool {
        obs.dim() == self.obs_dim()
            && (0..obs.dim() / 2).all(|i| self.geometry.is_free(obs.point(i)))
    }

    /// Closed-loop scripted controller.
    ///
    /// Mazes follow the waypoint route, advancing `progress` whenever the agent
    /// sits on the current waypoint. The pusher first walks the hand onto the
    /// block, then steers the hand so the dragged block lands on the goal.
    pub fn oracle_action(&self, obs: &Observation, progress: &mut usize) -> ActionVec {
        let pos = obs.point(0);
        let target = match self.kind {
            EnvKind::Pusher2d => {
                let block = obs.point(1);
                if distance(pos, block) > self.contact_radius {
                    block
                } else {
                    let goal = self.object_xy(&self.target_goal);
                    [goal[0] - (block[0] - pos[0]), goal[1] - (block[1] - pos[1])]
                }
            }
            _ => {
                while *progress + 1 < self.oracle_waypoints.len()
                    && distance(pos, self.oracle_waypoints[*progress]) < 1e-9
                {
                    *progress += 1;
                }
                match self.oracle_waypoints.get(*progress) {
                    Some(&wp) => wp,
                    None => pos,
                }
            }
        };
        ActionVec([
            ((target[0] - pos[0]) / self.step_scale).clamp(-1.0, 1.0),
            ((target[1] - pos[1]) / self.step_scale).clamp(-1.0, 1.0),
        ])
    }

    /// Oracle actions from the nominal start until the goal is first reached
    /// (or the episode ends).
    pub fn oracle_actions(&self) -> Vec<ActionVec> {
        let mut obs = self.nominal_start;
        let mut progress = 0;
        let mut actions = Vec::new();
        while actions.len() < self.episode_length && !self.success(&obs) {
            let a = self.oracle_action(&obs, &mut progress);
            obs = self.transition(&obs, a);
            actions.push(a);
        }
        actions
    }

    /// Flood fill of the agent (or hand) position space from the nominal start.
    pub fn flood_fill(&self, resolution: f64) -> FloodFill {
        FloodFill::run(&self.geometry, self.nominal_start.point(0), resolution)
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// An environment instance: a spec plus the current state and step counter.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    spec: &'a EnvSpec,
    obs: Observation,
    t: usize,
}

impl<'a> Env<'a> {
    pub fn reset(spec: &'a EnvSpec, seed: u64) -> Self {
        Self {
            spec,
            obs: spec.reset(seed),
            t: 0,
        }
    }

    pub fn from_state(spec: &'a EnvSpec, obs: Observation) -> Self {
        Self { spec, obs, t: 0 }
    }

    pub fn spec(&self) -> &EnvSpec {
        self.spec
    }

    pub fn observation(&self) -> Observation {
        self.obs
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// Advances one step; the flag is true once `episode_length` steps are done.
    pub fn step(&mut self, action: ActionVec) -> (Observation, bool) {
        self.obs = self.spec.transition(&self.obs, action);
        self.t += 1;
        (self.obs, self.t >= self.spec.episode_length)
    }

    pub fn set_observation(&mut self, obs: Observation) {
        self.obs = obs;
    }
}
