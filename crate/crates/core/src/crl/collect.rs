use rand::Rng;

use crate::crl::{ActMode, Policy};
use crate::envs::{ActionVec, Env, EnvSpec, Observation};
use crate::replay::Trajectory;
use crate::{Error, Result};

/// What the policy is commanded with during data collection.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalSource {
    /// Always the environment's target goal.
    SingleHardGoal,
    /// One goal per episode, uniformly from the list.
    GoalSet(Vec<Observation>),
}

impl GoalSource {
    pub fn pick<R: Rng + ?Sized>(&self, spec: &EnvSpec, rng: &mut R) -> Result<Observation> {
        match self {
            GoalSource::SingleHardGoal => Ok(spec.target_goal),
            GoalSource::GoalSet(goals) if goals.is_empty() => Err(Error::Config(
                "goal-set exploration needs at least one goal".into(),
            )),
            GoalSource::GoalSet(goals) => Ok(goals[rng.random_range(0..goals.len())]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Behavior<'a> {
    /// Uniform actions in `[-1, 1]²`, for the initial collection phase.
    Uniform,
    Policy(&'a Policy, ActMode),
}

/// Runs one full episode from a fresh reset.
pub fn collect_episode<R: Rng + ?Sized>(
    spec: &EnvSpec,
    behavior: Behavior<'_>,
    goals: &GoalSource,
    episode_id: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    let goal = goals.pick(spec, rng)?;
    let mut env = Env::from_state(spec, spec.reset_with(rng));
    let features = match behavior {
        Behavior::Policy(p, _) => p.goal_features(spec, &goal),
        Behavior::Uniform => Vec::new(),
    };
    let mut states = Vec::with_capacity(spec.episode_length + 1);
    let mut actions = Vec::with_capacity(spec.episode_length);
    states.push(env.observation());
    loop {
        let obs = env.observation();
        let action = match behavior {
            Behavior::Uniform => {
                ActionVec([rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
            }
            Behavior::Policy(p, mode) => p.act(obs.as_slice(), &features, mode, rng)?,
        };
        let (next, done) = env.step(action);
        actions.push(action);
        states.push(next);
        if done {
            break;
        }
    }
    Ok(Trajectory {
        episode_id,
        states,
        actions,
        commanded_goal: goal,
    })
}
