//! Run configuration and its `key = value` text form.
//!
//! Every key is optional; missing keys take the defaults below, which are
//! the published hyperparameters for both the contrastive agent and SAC.
//! `#` starts a comment. Repeated `goal` lines build an explicit goal set.
//!
//! | key | default |
//! |---|---|
//! | `algorithm` | `crl` (`crl`, `sac-sparse`, `sac-dense`, `sac-her`) |
//! | `env` | `spiral-maze` (`spiral-maze`, `impossible-maze`, `pusher-2d`) |
//! | `env_file` | none; a pinned environment spec overriding `env` |
//! | `exploration` | `single-hard-goal` (or `goal-set`) |
//! | `goal_set` | `none` (or `builtin`) |
//! | `goal` | repeated; coordinates of one explicit goal observation |
//! | `actor_goal_mode` | `multi-goal` (or `single-goal`) |
//! | `critic_arch` | `inner-product` (or `monolithic`) |
//! | `seed` | 0 |
//! | `total_env_steps` | 500000 |
//! | `initial_random_steps` | 10000 |
//! | `eval_every` | 5000 |
//! | `eval_episodes` | 50 |
//! | `eval_seed` | 7777777 |
//! | `checkpoint_every` | 25000 |
//! | `lr` | 0.0003 |
//! | `gamma` | 0.99 |
//! | `batch_size` | 256 |
//! | `repr_dim` | 64 |
//! | `hidden` | `256 256` |
//! | `buffer_size` | 1000000 |
//! | `min_std` | 1e-6 |
//! | `target_entropy` | 0 |
//! | `alpha_lr` | 0.0003 |
//! | `target_ema` | 0.005 |
//! | `her_fraction` | 0.8 (used by `sac-her` only) |
//! | `exploration_grid` | 20 |
//! | `norm_field_resolution` | 50 |
//! | `rollout_episodes` | 10 |
//! | `run_name` | `<algorithm>-<env>-seed<seed>` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{RewardKind, SacConfig};
use crate::crl::{ActorGoalMode, CriticArch, CrlConfig, DEFAULT_MIN_STD};
use crate::envs::{EnvKind, EnvSpec, Observation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Crl,
    SacSparse,
    SacDense,
    SacHer,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Crl => "crl",
            Algorithm::SacSparse => "sac-sparse",
            Algorithm::SacDense => "sac-dense",
            Algorithm::SacHer => "sac-her",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crl" => Ok(Algorithm::Crl),
            "sac-sparse" => Ok(Algorithm::SacSparse),
            "sac-dense" => Ok(Algorithm::SacDense),
            "sac-her" => Ok(Algorithm::SacHer),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exploration {
    SingleHardGoal,
    GoalSet,
}

impl Exploration {
    pub fn as_str(self) -> &'static str {
        match self {
            Exploration::SingleHardGoal => "single-hard-goal",
            Exploration::GoalSet => "goal-set",
        }
    }
}

impl FromStr for Exploration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-hard-goal" => Ok(Exploration::SingleHardGoal),
            "goal-set" => Ok(Exploration::GoalSet),
            other => Err(Error::Config(format!("unknown exploration mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub env: EnvKind,
    pub env_file: Option<PathBuf>,
    pub exploration: Exploration,
    pub builtin_goal_set: bool,
    pub goals: Vec<Vec<f64>>,
    pub actor_goal_mode: ActorGoalMode,
    pub critic_arch: CriticArch,
    pub seed: u64,
    pub total_env_steps: u64,
    pub initial_random_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub checkpoint_every: u64,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub repr_dim: usize,
    pub hidden: Vec<usize>,
    pub buffer_size: usize,
    pub min_std: f64,
    pub target_entropy: f64,
    pub alpha_lr: f64,
    pub target_ema: f64,
    pub her_fraction: f64,
    pub exploration_grid: usize,
    pub norm_field_resolution: usize,
    pub rollout_episodes: usize,
    pub run_name: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Crl,
            env: EnvKind::SpiralMaze,
            env_file: None,
            exploration: Exploration::SingleHardGoal,
            builtin_goal_set: false,
            goals: Vec::new(),
            actor_goal_mode: ActorGoalMode::MultiGoal,
            critic_arch: CriticArch::InnerProduct,
            seed: 0,
            total_env_steps: 500_000,
            initial_random_steps: 10_000,
            eval_every: 5_000,
            eval_episodes: 50,
            eval_seed: 7_777_777,
            checkpoint_every: 25_000,
            lr: 3e-4,
            gamma: 0.99,
            batch_size: 256,
            repr_dim: 64,
            hidden: vec![256, 256],
            buffer_size: 1_000_000,
            min_std: DEFAULT_MIN_STD,
            target_entropy: 0.0,
            alpha_lr: 3e-4,
            target_ema: 5e-3,
            her_fraction: 0.8,
            exploration_grid: 20,
            norm_field_resolution: 50,
            rollout_episodes: 10,
            run_name: None,
        }
    }
}

const KEYS: &[&str] = &[
    "algorithm",
    "env",
    "env_file",
    "exploration",
    "goal_set",
    "goal",
    "actor_goal_mode",
    "critic_arch",
    "seed",
    "total_env_steps",
    "initial_random_steps",
    "eval_every",
    "eval_episodes",
    "eval_seed",
    "checkpoint_every",
    "lr",
    "gamma",
    "batch_size",
    "repr_dim",
    "hidden",
    "buffer_size",
    "min_std",
    "target_entropy",
    "alpha_lr",
    "target_ema",
    "her_fraction",
    "exploration_grid",
    "norm_field_resolution",
    "rollout_episodes",
    "run_name",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, &[])
    }

    /// Loads a file, then applies `key = value` overrides as if appended to it.
    pub fn load_with(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for o in overrides {
            text.push('\n');
            text.push_str(o);
        }
        let mut cfg = Self::parse(&text)?;
        // A relative env_file is relative to the config file.
        if let (Some(f), Some(dir)) = (&cfg.env_file, path.parent()) {
            if f.is_relative() {
                cfg.env_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    /// Parses overrides on top of the defaults. Unknown keys are collected and
    /// reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut unknown = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                unknown.push(key.to_string());
                continue;
            }
            cfg.set(key, value)?;
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown config keys: {}",
                unknown.join(", ")
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "env" => self.env = value.parse()?,
            "env_file" => self.env_file = Some(PathBuf::from(value)),
            "exploration" => self.exploration = value.parse()?,
            "goal_set" => {
                self.builtin_goal_set = match value {
                    "builtin" => true,
                    "none" => false,
                    other => return Err(Error::Config(format!("goal_set = {other:?}"))),
                }
            }
            "goal" => self.goals.push(
                value
                    .split_whitespace()
                    .map(|v| num::<f64>(key, v))
                    .collect::<Result<_>>()?,
            ),
            "actor_goal_mode" => self.actor_goal_mode = value.parse()?,
            "critic_arch" => self.critic_arch = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "total_env_steps" => self.total_env_steps = num(key, value)?,
            "initial_random_steps" => self.initial_random_steps = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "eval_seed" => self.eval_seed = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "repr_dim" => self.repr_dim = num(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split_whitespace()
                    .map(|v| num::<usize>(key, v))
                    .collect::<Result<_>>()?
            }
            "buffer_size" => self.buffer_size = num(key, value)?,
            "min_std" => self.min_std = num(key, value)?,
            "target_entropy" => self.target_entropy = num(key, value)?,
            "alpha_lr" => self.alpha_lr = num(key, value)?,
            "target_ema" => self.target_ema = num(key, value)?,
            "her_fraction" => self.her_fraction = num(key, value)?,
            "exploration_grid" => self.exploration_grid = num(key, value)?,
            "norm_field_resolution" => self.norm_field_resolution = num(key, value)?,
            "rollout_episodes" => self.rollout_episodes = num(key, value)?,
            "run_name" => self.run_name = Some(value.to_string()),
            _ => unreachable!("key list and setter agree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..1.0).contains(&self.gamma) {
            problems.push(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(self.lr > 0.0 && self.alpha_lr > 0.0) {
            problems.push("learning rates must be positive".to_string());
        }
        if self.batch_size == 0 || self.repr_dim == 0 || self.eval_episodes == 0 {
            problems.push("batch_size, repr_dim and eval_episodes must be positive".to_string());
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 || self.exploration_grid == 0 {
            problems
                .push("eval_every, checkpoint_every and exploration_grid must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.her_fraction) || !(0.0..=1.0).contains(&self.target_ema) {
            problems.push("her_fraction and target_ema must lie in [0, 1]".to_string());
        }
        if self.exploration == Exploration::GoalSet
            && self.goals.is_empty()
            && !self.builtin_goal_set
        {
            problems.push("goal-set exploration needs `goal` lines or `goal_set = builtin`".into());
        }
        if self.goals.iter().any(|g| g.len() != 2 && g.len() != 4) {
            problems.push("every goal needs 2 or 4 coordinates".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn run_name(&self) -> String {
        self.run_name.clone().unwrap_or_else(|| {
            format!("{}-{}-seed{}", self.algorithm.as_str(), self.env, self.seed)
        })
    }

    /// Environment: the pinned file when given, otherwise the built-in.
    pub fn env_spec(&self) -> Result<EnvSpec> {
        let spec = match &self.env_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                EnvSpec::from_text(&text)?
            }
            None => EnvSpec::for_kind(self.env),
        };
        if spec.kind != self.env {
            return Err(Error::Config(format!(
                "env = {} but the environment file describes {}",
                self.env, spec.kind
            )));
        }
        Ok(spec)
    }

    /// Goals commanded under goal-set exploration.
    pub fn goal_list(&self, spec: &EnvSpec) -> Result<Vec<Observation>> {
        let mut goals = if self.builtin_goal_set {
            super::goal_set_for(spec)?
        } else {
            Vec::new()
        };
        for g in &self.goals {
            if g.len() != spec.obs_dim() {
                return Err(Error::Config(format!(
                    "goal {g:?} does not have {} coordinates",
                    spec.obs_dim()
                )));
            }
            goals.push(Observation::new(g));
        }
        Ok(goals)
    }

    pub fn crl_config(&self) -> CrlConfig {
        CrlConfig {
            lr: self.lr,
            gamma: self.gamma,
            batch_size: self.batch_size,
            repr_dim: self.repr_dim,
            hidden: self.hidden.clone(),
            min_std: self.min_std,
            target_entropy: self.target_entropy,
            alpha_lr: self.alpha_lr,
            critic_arch: self.critic_arch,
            actor_goal_mode: self.actor_goal_mode,
        }
    }

    pub fn sac_config(&self) -> SacConfig {
        SacConfig {
            lr: self.lr,
            gamma: self.gamma,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            min_std: self.min_std,
            target_entropy: self.target_entropy,
            alpha_lr: self.alpha_lr,
            target_ema: self.target_ema,
            reward: match self.algorithm {
                Algorithm::SacDense => RewardKind::Dense,
                _ => RewardKind::Sparse,
            },
            her_fraction: match self.algorithm {
                Algorithm::SacHer => self.her_fraction,
                _ => 0.0,
            },
        }
    }

    /// Every key with its effective value; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "algorithm = {}", self.algorithm.as_str());
        let _ = writeln!(s, "env = {}", self.env);
        if let Some(f) = &self.env_file {
            let _ = writeln!(s, "env_file = {}", f.display());
        }
        let _ = writeln!(s, "exploration = {}", self.exploration.as_str());
        let _ = writeln!(
            s,
            "goal_set = {}",
            if self.builtin_goal_set {
                "builtin"
            } else {
                "none"
            }
        );
        for g in &self.goals {
            let _ = writeln!(s, "goal = {}", join(g));
        }
        let _ = writeln!(s, "actor_goal_mode = {}", self.actor_goal_mode.as_str());
        let _ = writeln!(s, "critic_arch = {}", self.critic_arch.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "total_env_steps = {}", self.total_env_steps);
        let _ = writeln!(s, "initial_random_steps = {}", self.initial_random_steps);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "eval_seed = {}", self.eval_seed);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "lr = {:?}", self.lr);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "repr_dim = {}", self.repr_dim);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "hidden = {}", hidden.join(" "));
        let _ = writeln!(s, "buffer_size = {}", self.buffer_size);
        let _ = writeln!(s, "min_std = {:?}", self.min_std);
        let _ = writeln!(s, "target_entropy = {:?}", self.target_entropy);
        let _ = writeln!(s, "alpha_lr = {:?}", self.alpha_lr);
        let _ = writeln!(s, "target_ema = {:?}", self.target_ema);
        let _ = writeln!(s, "her_fraction = {:?}", self.her_fraction);
        let _ = writeln!(s, "exploration_grid = {}", self.exploration_grid);
        let _ = writeln!(s, "norm_field_resolution = {}", self.norm_field_resolution);
        let _ = writeln!(s, "rollout_episodes = {}", self.rollout_episodes);
        let _ = writeln!(s, "run_name = {}", self.run_name());
        s
    }
}
