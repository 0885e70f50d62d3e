//! Trajectory replay with geometric future-state sampling.
//!
//! A trajectory of length `T` stores states `s_0 ..= s_T` and actions
//! `a_0 .. a_{T-1}`. Anchors are transitions `(s_t, a_t)` with `t < T`, drawn
//! uniformly over every stored transition. The positive future of an anchor is
//! `s_{min(t + Δ, T)}` with `Δ - 1 ~ Geometric(1 - γ)`, so `Δ ≥ 1` and the
//! positive always lies strictly after the anchor.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::envs::{ActionVec, EnvSpec, Observation, Point, ACTION_DIM};
use crate::{Error, Result};

/// One complete episode plus the goal it was collected under.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode_id: u64,
    pub states: Vec<Observation>,
    pub actions: Vec<ActionVec>,
    pub commanded_goal: Observation,
}

impl Trajectory {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn transition(&self, t: usize) -> Transition {
        Transition {
            state: self.states[t],
            action: self.actions[t],
            next_state: self.states[t + 1],
            step_index: t,
            episode_id: self.episode_id,
        }
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).map(|t| self.transition(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: ActionVec,
    pub next_state: Observation,
    pub step_index: usize,
    pub episode_id: u64,
}

/// Where a sampled row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub episode_id: u64,
    pub step: usize,
    pub future_step: usize,
    /// Offset drawn before clamping to the last state.
    pub delta: usize,
}

/// Row-aligned `(s, a, s_f)` triples; row `i`'s positive is every other row's negative.
#[derive(Debug, Clone)]
pub struct CriticBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub futures: Array2<f64>,
    pub index: Vec<SampleIndex>,
}

impl CriticBatch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// States and goals drawn independently of each other.
#[derive(Debug, Clone)]
pub struct ActorBatch {
    pub states: Array2<f64>,
    pub goals: Array2<f64>,
    pub state_index: Vec<SampleIndex>,
    pub goal_index: Vec<SampleIndex>,
}

/// Plain transitions with 2-D goals, for the SAC baselines.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
    pub goals: Array2<f64>,
    /// True where the goal was replaced by an achieved position.
    pub relabeled: Vec<bool>,
}

/// Hindsight-relabeled transition; `reward` is the sparse reward for `goal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabeledTransition {
    pub state: Observation,
    pub action: ActionVec,
    pub goal: Point,
    pub reward: f64,
    pub next_state: Observation,
}

/// FIFO of whole trajectories holding at most `capacity` transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    trajectories: VecDeque<Trajectory>,
    capacity: usize,
    episode_length: usize,
    stored: usize,
    total_inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, episode_length: usize) -> Result<Self> {
        if episode_length == 0 || capacity < episode_length {
            return Err(Error::Config(format!(
                "replay capacity {capacity} cannot hold one {episode_length}-step episode"
            )));
        }
        Ok(Self {
            trajectories: VecDeque::new(),
            capacity,
            episode_length,
            stored: 0,
            total_inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.stored
    }

    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    /// Transitions ever inserted, evicted or not.
    pub fn total_inserted(&self) -> u64 {
        self.total_inserted
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter()
    }

    pub fn insert(&mut self, trajectory: Trajectory) -> Result<()> {
        if trajectory.len() != self.episode_length
            || trajectory.states.len() != trajectory.len() + 1
        {
            return Err(Error::Validation(format!(
                "episode {} has {} actions and {} states, expected {} and {}",
                trajectory.episode_id,
                trajectory.len(),
                trajectory.states.len(),
                self.episode_length,
                self.episode_length + 1
            )));
        }
        while self.stored + trajectory.len() > self.capacity {
            let old = self
                .trajectories
                .pop_front()
                .expect("capacity holds one episode");
            self.stored -= old.len();
        }
        self.stored += trajectory.len();
        self.total_inserted += trajectory.len() as u64;
        self.trajectories.push_back(trajectory);
        Ok(())
    }

    fn require_data(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::Sampling("replay buffer is empty".into()))
        } else {
            Ok(())
        }
    }

    /// Uniform over every stored transition.
    fn sample_anchor<R: Rng + ?Sized>(&self, rng: &mut R) -> (&Trajectory, usize) {
        let k = rng.random_range(0..self.stored);
        (
            &self.trajectories[k / self.episode_length],
            k % self.episode_length,
        )
    }

    fn sample_future<R: Rng + ?Sized>(
        &self,
        geom: &Geometric,
        rng: &mut R,
    ) -> (&Trajectory, SampleIndex) {
        let (traj, t) = self.sample_anchor(rng);
        let delta = 1 + geom.sample(rng) as usize;
        let future_step = t.saturating_add(delta).min(traj.len());
        (
            traj,
            SampleIndex {
                episode_id: traj.episode_id,
                step: t,
                future_step,
                delta,
            },
        )
    }

    pub fn sample_critic_batch<R: Rng + ?Sized>(
        &self,
        n: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<CriticBatch> {
        self.require_data()?;
        let geom = future_offset_law(gamma)?;
        let obs_dim = self.obs_dim();
        let mut states = Array2::zeros((n, obs_dim));
        let mut actions = Array2::zeros((n, ACTION_DIM));
        let mut futures = Array2::zeros((n, obs_dim));
        let mut index = Vec::with_capacity(n);
        for i in 0..n {
            let (traj, idx) = self.sample_future(&geom, rng);
            fill_row(&mut states, i, traj.states[idx.step].as_slice());
            fill_row(&mut actions, i, &traj.actions[idx.step].0);
            fill_row(&mut futures, i, traj.states[idx.future_step].as_slice());
            index.push(idx);
        }
        Ok(CriticBatch {
            states,
            actions,
            futures,
            index,
        })
    }

    /// States as anchors; goals as positives of an independent second draw.
    pub fn sample_actor_batch<R: Rng + ?Sized>(
        &self,
        n: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<ActorBatch> {
        self.require_data()?;
        let geom = future_offset_law(gamma)?;
        let obs_dim = self.obs_dim();
        let mut states = Array2::zeros((n, obs_dim));
        let mut goals = Array2::zeros((n, obs_dim));
        let mut state_index = Vec::with_capacity(n);
        let mut goal_index = Vec::with_capacity(n);
        for i in 0..n {
            let (traj, idx) = self.sample_future(&geom, rng);
            fill_row(&mut states, i, traj.states[idx.step].as_slice());
            state_index.push(idx);
            let (traj, idx) = self.sample_future(&geom, rng);
            fill_row(&mut goals, i, traj.states[idx.future_step].as_slice());
            goal_index.push(idx);
        }
        Ok(ActorBatch {
            states,
            goals,
            state_index,
            goal_index,
        })
    }

    /// Uniform transitions with goal `object_xy(target_goal)`, each relabeled
    /// with probability `relabel_fraction` to an object position achieved later
    /// in the same episode.
    pub fn sample_transitions<R: Rng + ?Sized>(
        &self,
        spec: &EnvSpec,
        n: usize,
        relabel_fraction: f64,
        rng: &mut R,
    ) -> Result<TransitionBatch> {
        self.require_data()?;
        let obs_dim = self.obs_dim();
        let target = spec.object_xy(&spec.target_goal);
        let mut states = Array2::zeros((n, obs_dim));
        let mut actions = Array2::zeros((n, ACTION_DIM));
        let mut next_states = Array2::zeros((n, obs_dim));
        let mut goals = Array2::zeros((n, 2));
        let mut relabeled = Vec::with_capacity(n);
        for i in 0..n {
            let (traj, t) = self.sample_anchor(rng);
            let (goal, r) = relabel_goal(spec, traj, t, target, relabel_fraction, rng);
            fill_row(&mut states, i, traj.states[t].as_slice());
            fill_row(&mut actions, i, &traj.actions[t].0);
            fill_row(&mut next_states, i, traj.states[t + 1].as_slice());
            fill_row(&mut goals, i, &goal);
            relabeled.push(r);
        }
        Ok(TransitionBatch {
            states,
            actions,
            next_states,
            goals,
            relabeled,
        })
    }

    fn obs_dim(&self) -> usize {
        self.trajectories[0].states[0].dim()
    }
}

fn fill_row(m: &mut Array2<f64>, i: usize, values: &[f64]) {
    m.row_mut(i)
        .iter_mut()
        .zip(values)
        .for_each(|(dst, src)| *dst = *src);
}

/// Law of `Δ - 1`: failures before the first success with success probability `1 - γ`.
pub fn future_offset_law(gamma: f64) -> Result<Geometric> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma {gamma} outside [0, 1)")));
    }
    Geometric::new(1.0 - gamma).map_err(|e| Error::Config(format!("gamma {gamma}: {e}")))
}

/// One draw of the future offset `Δ ∈ {1, 2, ...}` with `P(Δ = k) = (1-γ) γ^(k-1)`.
pub fn sample_delta<R: Rng + ?Sized>(law: &Geometric, rng: &mut R) -> usize {
    1 + law.sample(rng) as usize
}

fn relabel_goal<R: Rng + ?Sized>(
    spec: &EnvSpec,
    traj: &Trajectory,
    t: usize,
    target: Point,
    fraction: f64,
    rng: &mut R,
) -> (Point, bool) {
    if fraction > 0.0 && rng.random_bool(fraction.min(1.0)) {
        let k = rng.random_range(t + 1..=traj.len());
        (spec.object_xy(&traj.states[k]), true)
    } else {
        (target, false)
    }
}

/// Hindsight relabeling of a whole trajectory with the "future" strategy.
pub fn her_relabel<R: Rng + ?Sized>(
    spec: &EnvSpec,
    trajectory: &Trajectory,
    rng: &mut R,
    relabel_fraction: f64,
) -> Vec<RelabeledTransition> {
    let target = spec.object_xy(&spec.target_goal);
    (0..trajectory.len())
        .map(|t| {
            let (goal, _) = relabel_goal(spec, trajectory, t, target, relabel_fraction, rng);
            let next_state = trajectory.states[t + 1];
            RelabeledTransition {
                state: trajectory.states[t],
                action: trajectory.actions[t],
                goal,
                reward: if spec.within(&next_state, goal) {
                    1.0
                } else {
                    0.0
                },
                next_state,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_trajectory(id: u64, len: usize) -> Trajectory {
        Trajectory {
            episode_id: id,
            states: (0..=len)
                .map(|t| Observation::maze(t as f64, id as f64))
                .collect(),
            actions: vec![ActionVec([0.5, 0.0]); len],
            commanded_goal: Observation::maze(0.0, 0.0),
        }
    }

    #[test]
    fn fifo_eviction_by_whole_trajectories() {
        let mut buf = ReplayBuffer::new(200, 100).unwrap();
        buf.insert(line_trajectory(0, 100)).unwrap();
        assert_eq!(buf.len(), 100);
        buf.insert(line_trajectory(1, 100)).unwrap();
        buf.insert(line_trajectory(2, 100)).unwrap();
        assert_eq!(buf.len(), 200);
        assert_eq!(buf.total_inserted(), 300);
        let ids: Vec<u64> = buf.trajectories().map(|t| t.episode_id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn partial_trajectory_is_rejected() {
        let mut buf = ReplayBuffer::new(200, 100).unwrap();
        let err = buf.insert(line_trajectory(0, 99)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(buf.is_empty());
    }

    #[test]
    fn empty_buffer_cannot_be_sampled() {
        let buf = ReplayBuffer::new(200, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            buf.sample_critic_batch(4, 0.9, &mut rng),
            Err(Error::Sampling(_))
        ));
        assert!(buf.sample_actor_batch(4, 0.9, &mut rng).is_err());
    }

    #[test]
    fn gamma_zero_gives_next_state() {
        let mut buf = ReplayBuffer::new(100, 10).unwrap();
        buf.insert(line_trajectory(0, 10)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = buf.sample_critic_batch(500, 0.0, &mut rng).unwrap();
        for (i, idx) in b.index.iter().enumerate() {
            assert_eq!(idx.delta, 1);
            assert_eq!(b.futures[[i, 0]], b.states[[i, 0]] + 1.0);
        }
    }

    #[test]
    fn single_transition_episode_clamps_to_final_state() {
        let mut buf = ReplayBuffer::new(10, 1).unwrap();
        buf.insert(line_trajectory(0, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = buf.sample_critic_batch(1000, 0.99, &mut rng).unwrap();
        assert!(b.futures.column(0).iter().all(|&x| x == 1.0));
        assert!(
            b.index.iter().any(|idx| idx.delta > 1),
            "overshoots were clamped"
        );
    }

    #[test]
    fn actor_goals_from_constant_trajectory() {
        let mut buf = ReplayBuffer::new(10, 5).unwrap();
        let traj = Trajectory {
            episode_id: 0,
            states: vec![Observation::maze(3.0, 4.0); 6],
            actions: vec![ActionVec([0.0, 0.0]); 5],
            commanded_goal: Observation::maze(3.0, 4.0),
        };
        buf.insert(traj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = buf.sample_actor_batch(16, 0.99, &mut rng).unwrap();
        assert!(b
            .goals
            .rows()
            .into_iter()
            .all(|r| r[0] == 3.0 && r[1] == 4.0));
        let one = buf.sample_actor_batch(1, 0.99, &mut rng).unwrap();
        assert_eq!(one.states.dim(), (1, 2));
        assert_eq!(one.goals.dim(), (1, 2));
    }

    #[test]
    fn her_reward_for_own_next_position() {
        let spec = EnvSpec::spiral_maze();
        let mut traj = line_trajectory(0, 3);
        traj.states = (0..=3)
            .map(|t| Observation::maze(0.5, 0.5 + t as f64))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let none = her_relabel(&spec, &traj, &mut rng, 0.0);
        let target = spec.object_xy(&spec.target_goal);
        assert!(none.iter().all(|r| r.goal == target && r.reward == 0.0));
        // The last transition can only relabel to its own next state.
        let all = her_relabel(&spec, &traj, &mut rng, 1.0);
        assert_eq!(all[2].goal, [0.5, 3.5]);
        assert_eq!(all[2].reward, 1.0);
    }

    #[test]
    fn her_on_a_still_trajectory_rewards_everything() {
        let spec = EnvSpec::spiral_maze();
        let traj = Trajectory {
            episode_id: 0,
            states: vec![Observation::maze(0.5, 0.5); 11],
            actions: vec![ActionVec([0.0, 0.0]); 10],
            commanded_goal: spec.target_goal,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = her_relabel(&spec, &traj, &mut rng, 1.0);
        assert!(out.iter().all(|r| r.reward == 1.0));
    }

    #[test]
    fn invalid_gamma_is_a_config_error() {
        assert!(future_offset_law(1.0).is_err());
        assert!(future_offset_law(-0.1).is_err());
    }
}
