use std::collections::HashMap;

use crl_core::replay::{future_offset_law, her_relabel, sample_delta};
use crl_core::{ActionVec, EnvSpec, Error, Observation, ReplayBuffer, Trajectory};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every state gets a unique (t, episode) coordinate so samples can be traced back.
fn line(id: u64, len: usize) -> Trajectory {
    Trajectory {
        episode_id: id,
        states: (0..=len)
            .map(|t| Observation::maze(t as f64, id as f64))
            .collect(),
        actions: vec![ActionVec([0.1, -0.1]); len],
        commanded_goal: Observation::maze(0.0, 0.0),
    }
}

fn buffer(episodes: u64, len: usize) -> ReplayBuffer {
    let mut b = ReplayBuffer::new(episodes as usize * len, len).unwrap();
    for id in 0..episodes {
        b.insert(line(id, len)).unwrap();
    }
    b
}

/// Largest gap between the empirical CDF and `1 - γ^k` on the support `k ≥ 1`.
fn ks_distance(draws: &[usize], gamma: f64) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &d in draws {
        *counts.entry(d).or_default() += 1;
    }
    let max = *draws.iter().max().unwrap();
    let n = draws.len() as f64;
    let mut cum = 0usize;
    let mut worst = 0.0f64;
    for k in 1..=max {
        cum += counts.get(&k).copied().unwrap_or(0);
        let exact = 1.0 - gamma.powi(k as i32);
        worst = worst.max((cum as f64 / n - exact).abs());
    }
    worst
}

/// Pearson statistic over cells with their expected counts.
fn chi_squared(
    observed: &HashMap<(usize, usize), f64>,
    expected: &HashMap<(usize, usize), f64>,
) -> f64 {
    expected
        .iter()
        .map(|(k, e)| {
            let o = observed.get(k).copied().unwrap_or(0.0);
            (o - e).powi(2) / e
        })
        .sum()
}

#[test]
fn offset_law_matches_shifted_geometric() {
    for (gamma, seed) in [(0.9, 1u64), (0.99, 2)] {
        let law = future_offset_law(gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<usize> = (0..100_000).map(|_| sample_delta(&law, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d >= 1));
        let ks = ks_distance(&draws, gamma);
        assert!(ks < 0.01, "gamma {gamma}: KS {ks}");
    }
}

#[test]
fn offset_mean_is_horizon() {
    let law = future_offset_law(0.99).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mean = (0..100_000)
        .map(|_| sample_delta(&law, &mut rng) as f64)
        .sum::<f64>()
        / 1e5;
    assert!((mean - 100.0).abs() / 100.0 < 0.02, "mean {mean}");
}

#[test]
fn offset_law_rejects_bad_gamma() {
    for g in [-0.1, 1.0, 1.5, f64::NAN] {
        assert!(matches!(future_offset_law(g), Err(Error::Config(_))));
    }
}

#[test]
fn anchors_are_uniform_over_transitions() {
    let (episodes, len) = (5u64, 10usize);
    let b = buffer(episodes, len);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut observed: HashMap<(usize, usize), f64> = HashMap::new();
    let draws = 200usize;
    for _ in 0..draws {
        let batch = b.sample_critic_batch(250, 0.9, &mut rng).unwrap();
        for idx in &batch.index {
            *observed
                .entry((idx.episode_id as usize, idx.step))
                .or_default() += 1.0;
        }
    }
    let total = (draws * 250) as f64;
    let cells = episodes as usize * len;
    let expected: HashMap<_, _> = (0..episodes as usize)
        .flat_map(|e| (0..len).map(move |t| ((e, t), total / cells as f64)))
        .collect();
    // 49 degrees of freedom; the 0.999 quantile is 85.35.
    let stat = chi_squared(&observed, &expected);
    assert!(stat < 85.35, "chi-squared {stat}");
}

#[test]
fn future_index_follows_truncated_law() {
    // One episode of length 6, γ = 0.7: P(f = t + k) = (1-γ)γ^(k-1) for t + k < 6,
    // and the remaining mass γ^(5-t) lands on the terminal state.
    let (len, gamma) = (6usize, 0.7f64);
    let b = buffer(1, len);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rounds = 400usize;
    let mut observed: HashMap<(usize, usize), f64> = HashMap::new();
    for _ in 0..rounds {
        let batch = b.sample_critic_batch(250, gamma, &mut rng).unwrap();
        for (i, idx) in batch.index.iter().enumerate() {
            assert_eq!(idx.future_step, (idx.step + idx.delta).min(len));
            assert_eq!(batch.futures[[i, 0]], idx.future_step as f64);
            assert_eq!(batch.states[[i, 0]], idx.step as f64);
            *observed.entry((idx.step, idx.future_step)).or_default() += 1.0;
        }
    }
    let total = (rounds * 250) as f64;
    let mut expected = HashMap::new();
    for t in 0..len {
        for f in t + 1..=len {
            let p = if f < len {
                (1.0 - gamma) * gamma.powi((f - t - 1) as i32)
            } else {
                gamma.powi((len - t - 1) as i32)
            };
            expected.insert((t, f), total * p / len as f64);
        }
    }
    assert!(expected.values().all(|&e| e >= 5.0));
    // 21 cells and 20 degrees of freedom; the 0.999 quantile is 45.31.
    let stat = chi_squared(&observed, &expected);
    assert!(stat < 45.31, "chi-squared {stat}");
}

#[test]
fn actor_goals_come_from_independent_draws() {
    let b = buffer(4, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = b.sample_actor_batch(4000, 0.9, &mut rng).unwrap();
    let same_episode = batch
        .state_index
        .iter()
        .zip(&batch.goal_index)
        .filter(|(s, g)| s.episode_id == g.episode_id)
        .count() as f64
        / 4000.0;
    // Independent episodes match with probability 1/4.
    assert!((same_episode - 0.25).abs() < 0.03, "{same_episode}");
    for (i, g) in batch.goal_index.iter().enumerate() {
        assert_eq!(batch.goals[[i, 0]], g.future_step as f64);
        assert_eq!(batch.goals[[i, 1]], g.episode_id as f64);
    }
}

#[test]
fn her_fraction_and_goal_provenance() {
    let spec = EnvSpec::spiral_maze();
    let b = buffer(3, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = b.sample_transitions(&spec, 20_000, 0.8, &mut rng).unwrap();
    let frac = batch.relabeled.iter().filter(|&&r| r).count() as f64 / 20_000.0;
    // Binomial sd is 0.0028; allow five.
    assert!((frac - 0.8).abs() < 0.015, "{frac}");
    let target = spec.object_xy(&spec.target_goal);
    for i in 0..20_000 {
        let (gx, gy) = (batch.goals[[i, 0]], batch.goals[[i, 1]]);
        if batch.relabeled[i] {
            // Same episode, strictly later state.
            assert_eq!(gy, batch.states[[i, 1]]);
            assert!(gx > batch.states[[i, 0]]);
        } else {
            assert_eq!([gx, gy], target);
        }
        assert_eq!(batch.next_states[[i, 0]], batch.states[[i, 0]] + 1.0);
    }
}

#[test]
fn her_relabel_rewards_reached_goals() {
    let spec = EnvSpec::spiral_maze();
    let traj = line(0, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let out = her_relabel(&spec, &traj, &mut rng, 1.0);
    assert_eq!(out.len(), 30);
    for (t, r) in out.iter().enumerate() {
        assert!(r.goal[0] > t as f64);
        let hit = (r.next_state.as_slice()[0] - r.goal[0]).abs() <= spec.success_radius;
        assert_eq!(r.reward, if hit { 1.0 } else { 0.0 });
    }
}

#[test]
fn empty_buffer_cannot_sample() {
    let b = ReplayBuffer::new(100, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert!(matches!(
        b.sample_critic_batch(4, 0.9, &mut rng),
        Err(Error::Sampling(_))
    ));
}

#[test]
fn partial_episodes_are_rejected() {
    let mut b = ReplayBuffer::new(100, 10).unwrap();
    assert!(matches!(b.insert(line(0, 9)), Err(Error::Validation(_))));
    assert!(b.is_empty());
}

proptest! {
    #[test]
    fn eviction_is_fifo_and_bounded(cap_eps in 1usize..6, inserts in 1u64..20, len in 1usize..8) {
        let mut b = ReplayBuffer::new(cap_eps * len, len).unwrap();
        for id in 0..inserts {
            b.insert(line(id, len)).unwrap();
            prop_assert!(b.len() <= cap_eps * len);
        }
        prop_assert_eq!(b.total_inserted(), inserts * len as u64);
        let kept: Vec<u64> = b.trajectories().map(|t| t.episode_id).collect();
        let first = inserts.saturating_sub(cap_eps as u64);
        prop_assert_eq!(kept, (first..inserts).collect::<Vec<_>>());
    }

    #[test]
    fn futures_never_precede_anchors(seed in any::<u64>(), gamma in 0.0f64..0.999, len in 1usize..15) {
        let b = buffer(3, len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = b.sample_critic_batch(64, gamma, &mut rng).unwrap();
        for (i, idx) in batch.index.iter().enumerate() {
            prop_assert!(idx.future_step > idx.step && idx.future_step <= len);
            prop_assert!(idx.delta >= 1);
            // Same episode: the y coordinate is the episode id.
            prop_assert_eq!(batch.futures[[i, 1]], batch.states[[i, 1]]);
        }
    }
}
