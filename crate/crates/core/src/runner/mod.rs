//! End-to-end training runs: random warm-up, then alternating collection and
//! updates, with periodic evaluation, CSV logs and checkpoints.
//!
//! Output directory layout:
//!
//! ```text
//! resolved.cfg        every config key with its effective value
//! env.spec            the environment in its text form
//! run_meta.txt        protocol choices that are not hyperparameters
//! train_log.csv       one row per evaluation
//! timing.csv          wall-clock seconds per logged row (not deterministic)
//! exploration.csv     (env_step, unique cells) at every change
//! checkpoints/step_<env_step>/, checkpoints/final/, checkpoints/abort/
//! ```

pub mod checkpoint;
pub mod config;

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{CheckpointState, Learner, LoadedCheckpoint};
pub use config::{Algorithm, Exploration, RunConfig};

use crate::baselines::SacAgent;
use crate::crl::{collect_episode, ActMode, Behavior, CrlAgent, GoalSource};
use crate::envs::layouts::{GridMaze, SPIRAL_11};
use crate::envs::{EnvKind, EnvSpec, Observation};
use crate::metrics::{evaluate, EvalReport, ExplorationCounter};
use crate::replay::ReplayBuffer;
use crate::{Error, Result};

/// Environment variable naming the directory that `train` writes runs into.
pub const OUT_ROOT_VAR: &str = "CRL_LAB_OUT";

pub const TRAIN_LOG_HEADER: &str =
    "env_step,episode,eval_success_rate,first_success_episode,critic_loss,actor_loss,alpha,unique_cells";

/// Built-in curriculum for goal-set exploration.
///
/// Spiral: corridor cell centres at 25 %, 50 %, 75 % and 100 % of the route.
/// Pusher: hand on the block, block in the gap, block on the goal.
pub fn goal_set_for(spec: &EnvSpec) -> Result<Vec<Observation>> {
    match spec.kind {
        EnvKind::ImpossibleMaze => Err(Error::Unsupported(
            "the impossible maze has no goal curriculum".into(),
        )),
        EnvKind::SpiralMaze => {
            let route = GridMaze::parse(SPIRAL_11)
                .cell_path()
                .ok_or_else(|| Error::Config("spiral layout has no route".into()))?;
            let last = route.len() - 1;
            Ok([0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|f| {
                    let p = GridMaze::cell_center(route[(f * last as f64).round() as usize]);
                    Observation::maze(p[0], p[1])
                })
                .collect())
        }
        EnvKind::Pusher2d => {
            let start = spec.nominal_start.as_slice();
            let block = [start[2], start[3]];
            let goal = spec.object_xy(&spec.target_goal);
            let gap = [0.5 * (block[0] + goal[0]), 0.5 * (block[1] + goal[1])];
            Ok(vec![
                Observation::pusher(block, block),
                Observation::pusher(gap, gap),
                spec.target_goal,
            ])
        }
    }
}

/// One row of `train_log.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub env_step: u64,
    pub episode: u64,
    pub eval_success_rate: f64,
    pub first_success_episode: Option<u64>,
    /// Mean since the previous row; NaN before the first update.
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub unique_cells: usize,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            }
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env_step,
            self.episode,
            self.eval_success_rate,
            self.first_success_episode
                .map_or_else(String::new, |e| e.to_string()),
            opt(self.critic_loss),
            opt(self.actor_loss),
            self.alpha,
            self.unique_cells
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::parse(
                "train log",
                format!("expected 8 fields in {line:?}"),
            ));
        }
        let p = |s: &str| -> Result<f64> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse()
                    .map_err(|e| Error::parse("train log", format!("{s:?}: {e}")))
            }
        };
        let u = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|e| Error::parse("train log", format!("{s:?}: {e}")))
        };
        Ok(Self {
            env_step: u(f[0])?,
            episode: u(f[1])?,
            eval_success_rate: p(f[2])?,
            first_success_episode: if f[3].is_empty() {
                None
            } else {
                Some(u(f[3])?)
            },
            critic_loss: p(f[4])?,
            actor_loss: p(f[5])?,
            alpha: p(f[6])?,
            unique_cells: u(f[7])? as usize,
        })
    }
}

/// Reads a `train_log.csv` back into rows.
pub fn read_train_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().skip(1).map(LogRow::parse_csv).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub final_eval: EvalReport,
    pub rows: Vec<LogRow>,
    pub exploration: ExplorationCounter,
    pub first_success_episode: Option<u64>,
    pub env_steps: u64,
    pub episodes: u64,
}

pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    run_with(config, out_dir, |_| {})
}

/// Like [`run`], calling `on_row` after every logged evaluation.
pub fn run_with(
    config: &RunConfig,
    out_dir: &Path,
    mut on_row: impl FnMut(&LogRow),
) -> Result<RunOutput> {
    config.validate()?;
    let spec = config.env_spec()?;
    spec.validate()?;
    let goals = match config.exploration {
        Exploration::SingleHardGoal => GoalSource::SingleHardGoal,
        Exploration::GoalSet => GoalSource::GoalSet(config.goal_list(&spec)?),
    };

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("resolved.cfg"), &config.to_text())?;
    write(&out_dir.join("env.spec"), &spec.to_text())?;
    write(&out_dir.join("run_meta.txt"), &run_meta(config))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut learner = match config.algorithm {
        Algorithm::Crl => Learner::Crl(CrlAgent::new(config.crl_config(), &spec, &mut rng)),
        _ => Learner::Sac(SacAgent::new(config.sac_config(), &spec, &mut rng)),
    };
    let mut buffer = ReplayBuffer::new(config.buffer_size, spec.episode_length)?;
    let grid = config.exploration_grid;
    let mut counter = ExplorationCounter::new(spec.geometry.bounds, grid, grid);

    let mut log = CsvFile::create(&out_dir.join("train_log.csv"), TRAIN_LOG_HEADER)?;
    let mut timing = CsvFile::create(&out_dir.join("timing.csv"), "env_step,wall_clock_s")?;
    let started = Instant::now();

    let mut env_step = 0u64;
    let mut episode = 0u64;
    let mut first_success = None;
    let mut next_eval = config.eval_every;
    let mut next_ckpt = config.checkpoint_every;
    let mut acc = LossAccumulator::default();
    let mut rows = Vec::new();
    let mut last_eval = None;
    let ckpt_root = out_dir.join("checkpoints");

    let state_of = |learner: &Learner, env_step, episode, first, rng: &ChaCha8Rng| {
        let mut s = CheckpointState {
            algorithm: config.algorithm,
            critic_arch: config.critic_arch,
            obs_dim: spec.obs_dim(),
            min_std: config.min_std,
            env_step,
            episode,
            updates: learner.updates(),
            log_alpha: learner.log_alpha(),
            first_success_episode: first,
            rng_seed: [0; 32],
            rng_stream: 0,
            rng_word_pos: 0,
        };
        s.rng_snapshot(rng);
        s
    };

    while env_step < config.total_env_steps {
        let behavior = if env_step < config.initial_random_steps {
            Behavior::Uniform
        } else {
            Behavior::Policy(learner.policy(), ActMode::Stochastic)
        };
        let traj = collect_episode(&spec, behavior, &goals, episode, &mut rng)?;
        let len = traj.len() as u64;
        for (t, s) in traj.states.iter().enumerate() {
            counter.record_visit(env_step + t as u64, spec.object_xy(s));
        }
        if traj.states.iter().any(|s| spec.success(s)) {
            first_success.get_or_insert(episode);
        }
        buffer.insert(traj)?;
        let updates = (env_step..env_step + len)
            .filter(|&k| k >= config.initial_random_steps)
            .count();
        env_step += len;
        episode += 1;

        for _ in 0..updates {
            let result = match &mut learner {
                Learner::Crl(a) => a
                    .train_step(&buffer, &spec, &mut rng)
                    .map(|s| (s.critic_loss, s.actor_loss)),
                Learner::Sac(a) => a
                    .train_step(&buffer, &spec, &mut rng)
                    .map(|s| (0.5 * (s.q1_loss + s.q2_loss), s.actor_loss)),
            };
            match result {
                Ok((c, a)) => acc.add(c, a),
                Err(e) => {
                    let state = state_of(&learner, env_step, episode, first_success, &rng);
                    checkpoint::save(&ckpt_root.join("abort"), &learner, &state)?;
                    return Err(e);
                }
            }
        }

        if env_step >= next_eval || env_step >= config.total_env_steps {
            while next_eval <= env_step {
                next_eval += config.eval_every;
            }
            let report = evaluate(
                learner.policy(),
                &spec,
                config.eval_episodes,
                config.eval_seed,
            )?;
            let (c, a) = acc.take();
            let row = LogRow {
                env_step,
                episode,
                eval_success_rate: report.success_rate,
                first_success_episode: first_success,
                critic_loss: c,
                actor_loss: a,
                alpha: learner.log_alpha().exp(),
                unique_cells: counter.unique(),
            };
            log.line(&row.to_csv())?;
            timing.line(&format!(
                "{env_step},{:.3}",
                started.elapsed().as_secs_f64()
            ))?;
            on_row(&row);
            rows.push(row);
            last_eval = Some(report);
        }
        if env_step >= next_ckpt {
            while next_ckpt <= env_step {
                next_ckpt += config.checkpoint_every;
            }
            let state = state_of(&learner, env_step, episode, first_success, &rng);
            checkpoint::save(
                &ckpt_root.join(format!("step_{env_step:09}")),
                &learner,
                &state,
            )?;
        }
    }

    let final_eval = match last_eval {
        Some(r) => r,
        None => evaluate(
            learner.policy(),
            &spec,
            config.eval_episodes,
            config.eval_seed,
        )?,
    };
    let state = state_of(&learner, env_step, episode, first_success, &rng);
    checkpoint::save(&ckpt_root.join("final"), &learner, &state)?;
    let mut explo = String::from("env_step,unique_cells\n");
    for (s, c) in counter.history() {
        explo.push_str(&format!("{s},{c}\n"));
    }
    write(&out_dir.join("exploration.csv"), &explo)?;

    Ok(RunOutput {
        out_dir: out_dir.to_path_buf(),
        final_eval,
        rows,
        exploration: counter,
        first_success_episode: first_success,
        env_steps: env_step,
        episodes: episode,
    })
}

fn run_meta(config: &RunConfig) -> String {
    format!(
        "evaluation_policy = mean action (tanh of the Gaussian mean), commanded with the target goal\n\
         evaluation = {} episodes every {} environment steps, seed {}\n\
         update_ratio = one gradient step per environment step after the random phase\n\
         exploration_counter = training-time visits, {}x{} grid over the workspace\n\
         first_success_episode = 0-based index over all training episodes, random phase included\n",
        config.eval_episodes,
        config.eval_every,
        config.eval_seed,
        config.exploration_grid,
        config.exploration_grid,
    )
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct CsvFile {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl CsvFile {
    fn create(path: &Path, header: &str) -> Result<Self> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut csv = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        };
        csv.line(header)?;
        Ok(csv)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Default)]
struct LossAccumulator {
    critic: f64,
    actor: f64,
    n: u64,
}

impl LossAccumulator {
    fn add(&mut self, critic: f64, actor: f64) {
        self.critic += critic;
        self.actor += actor;
        self.n += 1;
    }

    fn take(&mut self) -> (f64, f64) {
        let out = if self.n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (self.critic / self.n as f64, self.actor / self.n as f64)
        };
        *self = Self::default();
        out
    }
}
