use cloudedge::agent::{select_action, DqnAgent, Hyperparams, ReplayBuffer, Transition};
use cloudedge::harness::experiment::oracle_action;
use cloudedge::harness::metrics::action_accuracy;
use cloudedge::plant::{Boiler, PlantConfig, NUM_ACTIONS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn full_exploration_is_uniform() {
    let n = 100_000;
    let values = [0.0, 5.0, 1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.125];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0usize; NUM_ACTIONS];
    for _ in 0..n {
        counts[select_action(&values, 1.0, &mut rng)] += 1;
    }
    let p = 1.0 / NUM_ACTIONS as f64;
    let expected = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in &counts {
        assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 8 degrees of freedom: mean 8, sd 4.
    assert!(chi2 < 8.0 + 3.0 * 4.0, "chi-square {chi2}");
}

#[test]
fn random_actions_agree_with_oracle_one_time_in_nine() {
    let boiler = Boiler::new(PlantConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let mut agent = Vec::with_capacity(n);
    let mut oracle = Vec::with_capacity(n);
    for i in 0..n {
        let state = boiler.reset(i as u64);
        oracle.push(oracle_action(&boiler, &state, 0.95));
        agent.push(rng.random_range(0..NUM_ACTIONS));
    }
    let acc = action_accuracy(&agent, &oracle).unwrap();
    let p = 1.0 / 9.0;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((acc - p).abs() < 3.0 * sigma, "accuracy {acc}");
}

fn tagged(i: usize) -> Transition {
    Transition::new(vec![i as f64], i % NUM_ACTIONS, 0.0, vec![0.0], false).unwrap()
}

proptest! {
    #[test]
    fn replay_keeps_the_latest_capacity_items(capacity in 1usize..200, extra in 0usize..400) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            buf.push(tagged(i));
            prop_assert!(buf.len() <= capacity);
        }
        let kept: Vec<usize> = buf.iter().map(|t| t.obs[0] as usize).collect();
        let want: Vec<usize> = (extra..capacity + extra).collect();
        prop_assert_eq!(kept, want);
    }
}

#[test]
fn replay_stays_bounded_under_random_inserts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut buf = ReplayBuffer::new(5000);
    for i in 0..20_000 {
        buf.push(Transition::new(vec![i as f64], rng.random_range(0..9), rng.random(), vec![0.0], false).unwrap());
        assert!(buf.len() <= 5000);
    }
    let first = buf.iter().next().unwrap().obs[0];
    assert_eq!(first, 15_000.0);
}

#[test]
fn target_syncs_every_100_steps_and_is_frozen_between() {
    let hp = Hyperparams {
        hidden_layers: vec![8],
        ..Hyperparams::default()
    };
    let mut agent = DqnAgent::new(4, hp, 1, 1000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..64 {
        let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let next: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        agent.remember(Transition::new(obs, rng.random_range(0..9), rng.random_range(-1.0..0.0), next, false).unwrap());
    }
    let mut frozen = agent.target().params();
    for step in 1..=300u64 {
        agent.train().unwrap();
        assert_eq!(agent.train_steps(), step);
        if step % 100 == 0 {
            assert_eq!(agent.target().params(), agent.policy().params());
            assert_eq!(agent.syncs(), step / 100);
            frozen = agent.target().params();
        } else {
            assert_eq!(agent.target().params(), frozen, "target moved at step {step}");
            assert_ne!(agent.policy().params(), frozen);
        }
    }
}
