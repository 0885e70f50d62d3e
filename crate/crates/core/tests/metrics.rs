use std::cell::Cell;
use std::collections::HashSet;

use crl_core::crl::{ActMode, CriticArch, CriticParams, Policy, DEFAULT_MIN_STD};
use crl_core::metrics::{dump_rollouts, evaluate_with, norm_field, ExplorationCounter};
use crl_core::{ActionVec, EnvSpec, Mlp, Observation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plain-loop forward pass: ReLU between layers, linear output.
fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let w = &layer.weight;
        let mut next = vec![0.0; w.nrows()];
        for (o, out) in next.iter_mut().enumerate() {
            *out = layer.bias[o] + (0..w.ncols()).map(|i| w[[o, i]] * h[i]).sum::<f64>();
            if l < last {
                *out = out.max(0.0);
            }
        }
        h = next;
    }
    h
}

#[test]
fn norm_field_is_squared_goal_encoding() {
    for spec in [EnvSpec::spiral_maze(), EnvSpec::pusher_2d()] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let critic = CriticParams::init(
            CriticArch::InnerProduct,
            spec.obs_dim(),
            2,
            &[9],
            5,
            &mut rng,
        );
        let psi = critic.psi().unwrap();
        let field = norm_field(&critic, &spec, 7).unwrap();
        assert_eq!(field.len(), 49);
        let b = spec.geometry.bounds;
        for (k, &(x, y, n)) in field.iter().enumerate() {
            let (i, j) = (k % 7, k / 7);
            assert!((x - (b.x1 + (i as f64 + 0.5) * b.width() / 7.0)).abs() < 1e-12);
            assert!((y - (b.y1 + (j as f64 + 0.5) * b.height() / 7.0)).abs() < 1e-12);
            let input: Vec<f64> = (0..spec.obs_dim())
                .map(|c| if c % 2 == 0 { x } else { y })
                .collect();
            let want: f64 = naive_forward(psi, &input).iter().map(|v| v * v).sum();
            assert!((n - want).abs() <= 1e-10 * want.max(1.0));
        }
    }
}

#[test]
fn rollout_rows_follow_the_mean_policy() {
    let spec = EnvSpec::spiral_maze();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let policy = Policy::init(2, 2, &[16, 16], DEFAULT_MIN_STD, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    dump_rollouts(&policy, &spec, 3, 9, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * spec.episode_length);
    let goal = policy.goal_features(&spec, &spec.target_goal);
    let mut noise = ChaCha8Rng::seed_from_u64(0);
    for w in rows.windows(2) {
        assert_eq!(&w[0][4..6], spec.target_goal.as_slice());
        if w[0][0] != w[1][0] {
            assert_eq!(w[1][1], 0.0);
            continue;
        }
        let s = Observation::new(&w[0][2..4]);
        let a = policy
            .act(s.as_slice(), &goal, ActMode::Mean, &mut noise)
            .unwrap();
        assert_eq!(spec.transition(&s, a).as_slice(), &w[1][2..4]);
    }
}

#[test]
fn first_success_episode_and_rate() {
    let spec = EnvSpec::spiral_maze();
    // Succeeds on odd episodes only: oracle actions when odd, stand still when even.
    let episode = Cell::new(0usize);
    let progress = Cell::new(0usize);
    let report = evaluate_with(
        &spec,
        6,
        3,
        |_, obs| {
            Ok(if episode.get() % 2 == 1 {
                let mut p = progress.get();
                let a = spec.oracle_action(obs, &mut p);
                progress.set(p);
                a
            } else {
                ActionVec([0.0, 0.0])
            })
        },
        || {
            episode.set(episode.get() + 1);
            progress.set(0);
        },
    )
    .unwrap();
    // on_reset runs first, so episodes 0, 2 and 4 see odd counters.
    assert_eq!(report.successes, 3);
    assert_eq!(report.success_rate, 0.5);
    assert_eq!(report.first_success_episode, Some(0));
}

proptest! {
    #[test]
    fn counter_matches_set_oracle(points in proptest::collection::vec((0.0f64..11.0, 0.0f64..11.0), 1..200)) {
        let spec = EnvSpec::spiral_maze();
        let mut c = ExplorationCounter::for_spec(&spec);
        let mut seen = HashSet::new();
        for (step, &(x, y)) in points.iter().enumerate() {
            c.record_visit(step as u64, [x, y]);
            let cell = (((x / 0.55) as usize).min(19), ((y / 0.55) as usize).min(19));
            seen.insert(cell);
            prop_assert_eq!(c.unique(), seen.len());
            prop_assert_eq!(c.unique_at(step as u64), seen.len());
        }
        let h = c.history();
        prop_assert!(h.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 + 1 == w[1].1));
        prop_assert!(c.unique() <= c.total_cells());
    }
}
