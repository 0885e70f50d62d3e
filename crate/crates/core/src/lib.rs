//! Single-goal contrastive reinforcement learning at desk scale.
//!
//! Every training trajectory is collected while the goal-conditioned policy is
//! commanded with one fixed, hard goal. The critic is a contrastive classifier
//! over learned representations and the actor is trained against it for any
//! goal drawn from the replay buffer.
//!
//! Modules, bottom up:
//!
//! * [`numcore`]: MLPs, hand-derived backward passes, Adam, checkpoint files.
//! * [`envs`]: the spiral maze, its sealed variant and a 2-D pusher toy.
//! * [`replay`]: trajectory replay with geometric future-state sampling and hindsight relabeling.
//! * [`crl`]: contrastive critic, tanh-Gaussian actor and the training step.
//! * [`baselines`]: goal-conditioned SAC with sparse, dense or relabeled rewards.
//! * [`metrics`]: evaluation, exploration counting, norm fields and rollout dumps.
//! * [`runner`]: run configuration, the training loop, logs and checkpoints.

pub mod baselines;
pub mod crl;
pub mod envs;
mod error;
pub mod metrics;
pub mod numcore;
pub mod replay;
pub mod runner;

pub use envs::{ActionVec, Env, EnvKind, EnvSpec, Observation};
pub use error::{Error, Result};
pub use numcore::{Adam, AdamConfig, Mlp};
pub use replay::{ReplayBuffer, Trajectory};
pub use runner::RunConfig;
