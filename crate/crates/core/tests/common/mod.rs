//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use cloudedge::agent::{td_loss, td_loss_gradients, Mlp, Transition};
use cloudedge::allocator::{affinity, AffinityWeights, ControlModule, EdgeResource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random instance with 1..=3 resources and 0..=3 modules.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<ControlModule>, Vec<EdgeResource>) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(0..=3);
    let resources = (0..n)
        .map(|i| {
            let capacity = rng.random_range(0.0..10.0);
            EdgeResource {
                id: i as u32 + 10,
                capacity,
                current_load: capacity * rng.random_range(0.0..0.5),
                bandwidth: rng.random_range(1.0..100.0),
                compute_rating: rng.random_range(0.05..=1.0),
            }
        })
        .collect();
    let modules = (0..m)
        .map(|j| ControlModule {
            id: j as u32,
            load: rng.random_range(0.5..5.0),
            intensity: rng.random_range(0.05..=1.0),
        })
        .collect();
    (modules, resources)
}

/// Exhaustive search over every (n+1)^m assignment, written without reference
/// to the solver's internals. Returns the best objective.
pub fn brute_force(modules: &[ControlModule], resources: &[EdgeResource], w: &AffinityWeights) -> f64 {
    let n = resources.len();
    let max_bw = resources.iter().map(|r| r.bandwidth).fold(0.0, f64::max);
    let mut best = 0.0;
    for code in 0..(n + 1).pow(modules.len() as u32) {
        let mut c = code;
        let mut used = vec![0.0; n];
        let mut obj = 0.0;
        for module in modules {
            let choice = c % (n + 1);
            c /= n + 1;
            if choice < n {
                used[choice] += module.load;
                obj += affinity(module, &resources[choice], w, max_bw);
            }
        }
        let feasible = resources
            .iter()
            .zip(&used)
            .all(|(r, u)| r.current_load + u <= r.capacity + 1e-9);
        if feasible && obj > best {
            best = obj;
        }
    }
    best
}

/// Worst relative error between the analytic TD-loss gradient and central
/// differences with step `h`, over `draws` random 4-8-9 networks and batches
/// of 16. Relative error is |a − n| / max(|a|, |n|, 1e-6); the floor keeps
/// dead-unit zeros from dividing by nothing.
pub fn gradient_check(seed: u64, draws: usize, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let mlp = Mlp::new(&[4, 8, 9], &mut rng).unwrap();
        let batch: Vec<Transition> = (0..16)
            .map(|_| {
                let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                Transition::new(obs.clone(), rng.random_range(0..9), 0.0, obs, false).unwrap()
            })
            .collect();
        let targets: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let mut grads = mlp.zeros_like();
        td_loss_gradients(&mlp, &refs, &targets, &mut grads).unwrap();
        let analytic = grads.params();
        let base = mlp.params();
        let mut probe = mlp.clone();
        let mut p = base.clone();
        for k in 0..base.len() {
            p[k] = base[k] + h;
            probe.set_params(&p).unwrap();
            let up = td_loss(&probe, &refs, &targets).unwrap();
            p[k] = base[k] - h;
            probe.set_params(&p).unwrap();
            let down = td_loss(&probe, &refs, &targets).unwrap();
            p[k] = base[k];
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

/// Writes a one-hour, minute-sampled CSV trace and returns each sensor's values.
pub fn write_hour_trace(path: &std::path::Path, sensors: &[(&str, &str)], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("timestamp,sensor_id,value,unit\n");
    let mut values = vec![Vec::new(); sensors.len()];
    for minute in 0..60u64 {
        for (k, (id, unit)) in sensors.iter().enumerate() {
            let v: f64 = (rng.random_range(0.0..100.0f64) * 100.0).round() / 100.0;
            values[k].push(v);
            text.push_str(&format!("{},{id},{v},{unit}\n", 1_700_000_000 + minute * 60));
        }
    }
    std::fs::write(path, text).unwrap();
    values
}

/// Slice-repeat expansion: every value repeated `factor` times.
pub fn repeat_expand(values: &[f64], factor: usize) -> Vec<f64> {
    values.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect()
}
