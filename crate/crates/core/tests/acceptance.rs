//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p cloudedge --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cloudedge::agent::{DqnAgent, Hyperparams, ReplayBuffer, Transition};
use cloudedge::allocator::{solve_exact, solve_greedy, validate, AffinityWeights};
use cloudedge::harness::config::{ControllerKind, ExperimentConfig, Scenario};
use cloudedge::harness::experiment::{run_experiment, run_seed, write_outputs, SeedOutcome, SeedStatus};
use cloudedge::harness::metrics::{MetricsRecord, Phase};
use cloudedge::harness::trace::{channel, ingest_trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const LATENCY_TOLERANCE: f64 = 0.05;
const GRADIENT_TOLERANCE: f64 = 1e-4;
const LEARNING_WINDOW: usize = 50;

type Check = Result<String, String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn record(&mut self, id: u32, name: &str, limit: Duration, elapsed: Duration, result: Check) {
        let over = elapsed > limit;
        let (tag, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over time budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            self.failed += 1;
        }
        println!(
            "{tag} [{id}] {name}: {detail} ({:.1}s of {}s)",
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }

    fn run(&mut self, id: u32, name: &str, limit_s: u64, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = f();
        self.record(id, name, Duration::from_secs(limit_s), start.elapsed(), result);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn completed(o: SeedOutcome) -> Result<SeedOutcome, String> {
    match &o.status {
        SeedStatus::Completed => Ok(o),
        SeedStatus::Failed(e) => Err(format!("seed {} failed: {e}", o.seed)),
    }
}

fn latency_config(scenario: Scenario, jitter: f64, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        scenario,
        controller: ControllerKind::Pid,
        episodes: 1,
        eval_episodes: 0,
        max_steps: steps,
        ..ExperimentConfig::default()
    };
    cfg.latency.jitter = Some(jitter);
    cfg
}

fn latency() -> Check {
    let mut notes = Vec::new();
    for (scenario, nominal) in [(Scenario::CloudOnly, 1500u64), (Scenario::EdgeCollab, 300)] {
        let o = completed(run_seed(&latency_config(scenario, 0.0, 200), 1, None))?;
        for r in &o.records {
            ensure(
                r.latency_min_ms == Some(nominal) && r.latency_max_ms == Some(nominal),
                || format!("{}: zero jitter gave {:?}..{:?}", scenario.as_str(), r.latency_min_ms, r.latency_max_ms),
            )?;
        }

        let o = completed(run_seed(&latency_config(scenario, 0.1, 1200), 1, None))?;
        let loops: usize = o.records.iter().map(|r| r.steps).sum();
        let total: f64 = o
            .records
            .iter()
            .map(|r| r.latency_mean_ms.unwrap_or(f64::NAN) * r.steps as f64)
            .sum();
        let mean = total / loops as f64;
        let rel = (mean - nominal as f64).abs() / nominal as f64;
        ensure(loops >= 1000, || format!("{}: only {loops} loops", scenario.as_str()))?;
        ensure(rel <= LATENCY_TOLERANCE, || {
            format!("{}: jittered mean {mean:.1} ms off by {:.2}%", scenario.as_str(), rel * 100.0)
        })?;
        notes.push(format!("{} {nominal} ms exact, jittered mean {mean:.1} ms over {loops} loops", scenario.as_str()));
    }
    Ok(notes.join("; "))
}

fn allocator() -> Check {
    let w = AffinityWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ties = 0;
    for k in 0..200 {
        let (modules, resources) = common::random_instance(&mut rng);
        let exact = solve_exact(&modules, &resources, &w).map_err(|e| e.to_string())?;
        let greedy = solve_greedy(&modules, &resources, &w).map_err(|e| e.to_string())?;
        let oracle = common::brute_force(&modules, &resources, &w);
        ensure((exact.objective - oracle).abs() < 1e-9, || {
            format!("instance {k}: exact {} vs brute force {oracle}", exact.objective)
        })?;
        ensure(validate(&greedy, &modules, &resources).is_empty(), || format!("instance {k}: greedy infeasible"))?;
        ensure(greedy.objective <= exact.objective + 1e-9, || format!("instance {k}: greedy beats exact"))?;
        if (greedy.objective - exact.objective).abs() < 1e-9 {
            ties += 1;
        }
    }
    Ok(format!("200 instances match brute force, greedy optimal on {ties}"))
}

fn gradient() -> Check {
    let worst = common::gradient_check(31, 100, 1e-5);
    ensure(worst < GRADIENT_TOLERANCE, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.3e} over 100 draws"))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn rewards(o: &SeedOutcome, phase: Phase) -> Vec<f64> {
    o.records_in(phase).map(|r: &MetricsRecord| r.cumulative_reward).collect()
}

fn learning(dqn: &[SeedOutcome]) -> Check {
    let mut deltas = Vec::new();
    for o in dqn {
        let train = rewards(o, Phase::Train);
        ensure(train.len() >= 2 * LEARNING_WINDOW, || format!("seed {}: {} episodes", o.seed, train.len()))?;
        let first = mean(train[..LEARNING_WINDOW].iter().copied());
        let last = mean(train[train.len() - LEARNING_WINDOW..].iter().copied());
        ensure(last > first, || format!("seed {}: last {last:.1} <= first {first:.1}", o.seed))?;
        deltas.push(format!("{:+.0}", last - first));
    }
    Ok(format!("last-50 minus first-50 per seed: {}", deltas.join(" ")))
}

fn drl_vs_pid(dqn: &[SeedOutcome], pid: &[SeedOutcome]) -> Check {
    let eval_mean = |runs: &[SeedOutcome]| mean(runs.iter().flat_map(|o| rewards(o, Phase::Eval)));
    let failures =
        |runs: &[SeedOutcome]| -> u32 { runs.iter().flat_map(|o| o.records_in(Phase::Eval)).map(|r| r.failures).sum() };
    let (a, b) = (eval_mean(dqn), eval_mean(pid));
    let (fa, fb) = (failures(dqn), failures(pid));
    let detail = format!("DQN eval mean {a:.2} ({fa} failures) vs PID {b:.2} ({fb} failures)");
    ensure(a > b && fa <= fb, || detail.clone())?;
    Ok(detail)
}

fn replay_and_sync() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut buf = ReplayBuffer::new(5000);
    for i in 0..20_000 {
        let t = Transition::new(vec![i as f64], rng.random_range(0..9), rng.random(), vec![0.0], false)
            .map_err(|e| e.to_string())?;
        buf.push(t);
        ensure(buf.len() <= 5000, || format!("{} entries after {} inserts", buf.len(), i + 1))?;
    }
    let kept: Vec<f64> = buf.iter().map(|t| t.obs[0]).collect();
    let want: Vec<f64> = (15_000..20_000).map(f64::from).collect();
    ensure(kept == want, || "eviction is not FIFO".into())?;

    let hp = Hyperparams {
        hidden_layers: vec![8],
        ..Hyperparams::default()
    };
    let mut agent = DqnAgent::new(4, hp, 1, 1000).map_err(|e| e.to_string())?;
    for _ in 0..64 {
        let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let next: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = Transition::new(obs, rng.random_range(0..9), rng.random_range(-1.0..0.0), next, false)
            .map_err(|e| e.to_string())?;
        agent.remember(t);
    }
    let mut frozen = agent.target().params();
    for step in 1..=300u64 {
        agent.train().map_err(|e| e.to_string())?;
        if step % 100 == 0 {
            ensure(agent.target().params() == agent.policy().params(), || format!("no sync at step {step}"))?;
            frozen = agent.target().params();
        } else {
            ensure(agent.target().params() == frozen, || format!("target moved at step {step}"))?;
        }
    }
    Ok(format!("5000 kept of 20000, FIFO; {} syncs in 300 train steps", agent.syncs()))
}

fn reproducible() -> Check {
    let mut cfg = ExperimentConfig {
        seeds: vec![1, 2],
        episodes: 4,
        eval_episodes: 2,
        max_steps: 60,
        ..ExperimentConfig::default()
    };
    cfg.latency.jitter = Some(0.1);
    cfg.agent.batch_size = 4;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let outcomes = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let paths = write_outputs(&cfg, &outcomes, &dir.path().join(name)).map_err(|e| e.to_string())?;
        let files: Vec<(String, Vec<u8>)> = paths
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        runs.push(files);
    }
    ensure(runs[0] == runs[1], || "metrics files differ between runs".into())?;
    let bytes: usize = runs[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", runs[0].len()))
}

fn trace_expansion() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("hour.csv");
    let sensors = [("temp", "C"), ("press", "bar"), ("level", "m")];
    let values = common::write_hour_trace(&path, &sensors, 3);
    let rows = ingest_trace(&path, 60, 5).map_err(|e| e.to_string())?;
    for (k, (id, _)) in sensors.iter().enumerate() {
        let got = channel(&rows, id);
        ensure(got.len() == 12 * values[k].len(), || format!("{id}: {} rows", got.len()))?;
        ensure(got == common::repeat_expand(&values[k], 12), || format!("{id}: values differ from repeat oracle"))?;
    }
    Ok(format!("{} sensors x 60 rows -> {} rows", sensors.len(), rows.len()))
}

fn training_runs(controller: ControllerKind) -> Result<Vec<SeedOutcome>, String> {
    let cfg = ExperimentConfig {
        controller,
        seeds: SEEDS.to_vec(),
        ..ExperimentConfig::default()
    };
    SEEDS.iter().map(|&s| completed(run_seed(&cfg, s, None))).collect()
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    suite.run(1, "latency model", 10, latency);
    suite.run(2, "allocator exact vs brute force", 60, allocator);
    suite.run(3, "gradient check", 30, gradient);

    let start = Instant::now();
    let dqn = training_runs(ControllerKind::Dqn);
    let dqn_time = start.elapsed();
    suite.record(
        4,
        "learning progress",
        Duration::from_secs(600),
        dqn_time,
        dqn.as_ref().map_err(Clone::clone).and_then(|d| learning(d)),
    );
    let pid = training_runs(ControllerKind::Pid);
    let result = match (&dqn, &pid) {
        (Ok(d), Ok(p)) => drl_vs_pid(d, p),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    suite.record(5, "DRL vs PID", Duration::from_secs(900), start.elapsed(), result);

    suite.run(6, "replay bound and target sync", 30, replay_and_sync);
    suite.run(7, "byte-identical metrics", 60, reproducible);
    suite.run(8, "trace resampling", 10, trace_expansion);

    if suite.failed == 0 {
        println!("all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} of 8 criteria failed", suite.failed);
        ExitCode::FAILURE
    }
}
