//! Evaluation, exploration counting, goal-encoder norm fields and rollout dumps.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crl::{ActMode, CriticParams, Policy};
use crate::envs::{ActionVec, Env, EnvKind, EnvSpec, Observation, Point, Rect};
use crate::{Error, Result};

pub const DEFAULT_GRID: usize = 20;

/// Cumulative set of visited cells on a regular grid over the workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationCounter {
    bounds: Rect,
    nx: usize,
    ny: usize,
    visited: Vec<bool>,
    count: usize,
    history: Vec<(u64, usize)>,
}

impl ExplorationCounter {
    pub fn new(bounds: Rect, nx: usize, ny: usize) -> Self {
        assert!(nx > 0 && ny > 0, "grid needs at least one cell per axis");
        Self {
            bounds,
            nx,
            ny,
            visited: vec![false; nx * ny],
            count: 0,
            history: Vec::new(),
        }
    }

    /// 20×20 grid over the spec's workspace.
    pub fn for_spec(spec: &EnvSpec) -> Self {
        Self::new(spec.geometry.bounds, DEFAULT_GRID, DEFAULT_GRID)
    }

    /// Cell of `xy`, clamped to the border cells.
    pub fn cell(&self, xy: Point) -> (usize, usize) {
        let b = &self.bounds;
        let ix = ((xy[0] - b.x1) / (b.width() / self.nx as f64)).floor();
        let iy = ((xy[1] - b.y1) / (b.height() / self.ny as f64)).floor();
        (
            (ix.max(0.0) as usize).min(self.nx - 1),
            (iy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    pub fn record_visit(&mut self, env_step: u64, xy: Point) {
        let (ix, iy) = self.cell(xy);
        let k = iy * self.nx + ix;
        if !self.visited[k] {
            self.visited[k] = true;
            self.count += 1;
            self.history.push((env_step, self.count));
        }
    }

    pub fn unique(&self) -> usize {
        self.count
    }

    pub fn total_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// `(env_step, cumulative unique cells)` at every change.
    pub fn history(&self) -> &[(u64, usize)] {
        &self.history
    }

    /// Unique cells visited by `env_step` (inclusive).
    pub fn unique_at(&self, env_step: u64) -> usize {
        match self.history.partition_point(|&(s, _)| s <= env_step) {
            0 => 0,
            k => self.history[k - 1].1,
        }
    }

    pub fn is_visited(&self, ix: usize, iy: usize) -> bool {
        self.visited[iy * self.nx + ix]
    }

    /// Cells that contain any wall-free point, probed on a lattice of spacing `probe`.
    pub fn free_cells(&self, spec: &EnvSpec, probe: f64) -> usize {
        let mut free = vec![false; self.nx * self.ny];
        let b = &self.bounds;
        let mx = (b.width() / probe).round() as usize;
        let my = (b.height() / probe).round() as usize;
        for i in 0..mx {
            for j in 0..my {
                let p = [
                    b.x1 + (i as f64 + 0.5) * probe,
                    b.y1 + (j as f64 + 0.5) * probe,
                ];
                if spec.geometry.walls.iter().all(|w| !w.contains(p)) {
                    let (ix, iy) = self.cell(p);
                    free[iy * self.nx + ix] = true;
                }
            }
        }
        free.iter().filter(|f| **f).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub success_rate: f64,
    pub episodes: usize,
    pub successes: usize,
    /// Index of the first successful evaluation episode.
    pub first_success_episode: Option<usize>,
    pub seed: u64,
}

/// Runs `episodes` episodes with a controller `(t, obs) -> action`; an episode
/// succeeds when any visited state (the start included) satisfies the target.
pub fn evaluate_with(
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    mut controller: impl FnMut(usize, &Observation) -> Result<ActionVec>,
    mut on_reset: impl FnMut(),
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0;
    let mut first = None;
    for ep in 0..episodes {
        on_reset();
        let mut env = Env::from_state(spec, spec.reset_with(&mut rng));
        let mut hit = spec.success(&env.observation());
        for t in 0..spec.episode_length {
            let a = controller(t, &env.observation())?;
            hit |= spec.success(&env.step(a).0);
        }
        if hit {
            successes += 1;
            first.get_or_insert(ep);
        }
    }
    Ok(EvalReport {
        success_rate: successes as f64 / episodes as f64,
        episodes,
        successes,
        first_success_episode: first,
        seed,
    })
}

/// Mean-action policy commanded with the target goal.
pub fn evaluate(policy: &Policy, spec: &EnvSpec, episodes: usize, seed: u64) -> Result<EvalReport> {
    let goal = policy.goal_features(spec, &spec.target_goal);
    // Mean mode never draws from the rng.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    evaluate_with(
        spec,
        episodes,
        seed,
        |_, obs| policy.act(obs.as_slice(), &goal, ActMode::Mean, &mut unused),
        || {},
    )
}

/// Closed-loop oracle from [`EnvSpec::oracle_action`].
pub fn evaluate_oracle(spec: &EnvSpec, episodes: usize, seed: u64) -> Result<EvalReport> {
    let progress = std::cell::Cell::new(0);
    evaluate_with(
        spec,
        episodes,
        seed,
        |_, obs| {
            let mut p = progress.get();
            let a = spec.oracle_action(obs, &mut p);
            progress.set(p);
            Ok(a)
        },
        || progress.set(0),
    )
}

/// `‖ψ(x)‖²` over a `resolution × resolution` grid of cell centres.
///
/// Maze points put the agent at `x`; pusher points put hand and block both at `x`.
pub fn norm_field(
    critic: &CriticParams,
    spec: &EnvSpec,
    resolution: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    let psi = critic
        .psi()
        .ok_or_else(|| Error::Unsupported("norm fields need an inner-product critic".into()))?;
    if resolution == 0 {
        return Err(Error::Config(
            "norm field resolution must be positive".into(),
        ));
    }
    let b = &spec.geometry.bounds;
    let (dx, dy) = (
        b.width() / resolution as f64,
        b.height() / resolution as f64,
    );
    let mut points = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            points.push((b.x1 + (i as f64 + 0.5) * dx, b.y1 + (j as f64 + 0.5) * dy));
        }
    }
    let dim = spec.obs_dim();
    let x = Array2::from_shape_fn((points.len(), dim), |(r, c)| {
        if c % 2 == 0 {
            points[r].0
        } else {
            points[r].1
        }
    });
    let out = psi.forward(x.view())?;
    Ok(points
        .into_iter()
        .zip(out.rows())
        .map(|((x, y), row)| (x, y, row.dot(&row)))
        .collect())
}

pub fn write_norm_field(path: &Path, field: &[(f64, f64, f64)]) -> Result<()> {
    let mut s = String::from("x,y,norm\n");
    for (x, y, n) in field {
        s.push_str(&format!("{x},{y},{n}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn observation_columns(kind: EnvKind) -> &'static [&'static str] {
    match kind {
        EnvKind::Pusher2d => &["hand_x", "hand_y", "block_x", "block_y"],
        _ => &["x", "y"],
    }
}

/// Mean-action rollouts commanded with the target goal, one row per state
/// `s_0 .. s_{T-1}`: `episode, step, <observation>, <goal>`.
pub fn dump_rollouts(
    policy: &Policy,
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let cols = observation_columns(spec.kind);
    let mut out = String::from("episode,step");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    for c in cols {
        out.push_str(",goal_");
        out.push_str(c);
    }
    out.push('\n');
    let goal = spec.target_goal;
    let features = policy.goal_features(spec, &goal);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in 0..episodes {
        let mut env = Env::from_state(spec, spec.reset_with(&mut rng));
        for t in 0..spec.episode_length {
            let obs = env.observation();
            out.push_str(&format!("{ep},{t}"));
            for v in obs.as_slice().iter().chain(goal.as_slice()) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
            let a = policy.act(obs.as_slice(), &features, ActMode::Mean, &mut rng)?;
            env.step(a);
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
