//! Event-driven experiment runs.
//!
//! Every episode builds a fresh kernel whose clock starts at zero. The
//! sensor samples the plant every control period and sends a reading to the
//! decision node: the cloud in cloud-only runs, otherwise the edge server
//! hosting the policy module. The decision node computes an action and sends
//! it back; the plant runs the old command until the new one arrives.
//! Edge servers report background load to the cloud, which periodically
//! re-solves the module placement and tells the sensor where to send readings.
//!
//! The agent, the PID state and the allocator registry persist across the
//! episodes of one seed.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ControllerKind, ExperimentConfig, Scenario};
use super::metrics::{latency_summary, write_jsonl, MetricsError, MetricsRecord, Phase};
use super::trace::{channel, ingest_trace, TraceError, CELSIUS_UNITS};
use crate::agent::{AgentError, DqnAgent, Transition};
use crate::allocator::{
    self, AllocError, AssignmentPlan, EdgeResource, DEFAULT_ENUMERATION_LIMIT,
};
use crate::latency::LatencyPreset;
use crate::pid::BoilerPid;
use crate::plant::{
    ActuatorCommand, Boiler, BoilerState, Disturbance, DisturbanceProcess, CONTROL_PERIOD_MS,
    CONTROL_PERIOD_S, NUM_ACTIONS,
};
use crate::sim::{Event, Handler, Kernel, LinkLatency, LinkTable, NodeId, NodeKind, Outbox, SimError, SimTime, Topology};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("trace sensor {0:?}: {1}")]
    TraceSensor(String, String),
    #[error("event queue drained before the episode ended")]
    Stalled,
}

/// Mixes `(base, stream, index)` into an independent 64-bit seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(base ^ mix(stream)) ^ index)
}

const STREAM_AGENT: u64 = 1;
const STREAM_RESET: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_LINKS: u64 = 4;
const STREAM_WORLD: u64 = 5;

/// Action maximizing immediate reward plus `gamma` times the best
/// follow-up reward, both under the noise-free plant over one period.
pub fn oracle_action(boiler: &Boiler, state: &BoilerState, gamma: f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..NUM_ACTIONS {
        let cmd = ActuatorCommand::from_index(a).expect("index in range");
        let first = boiler.step(state, cmd, CONTROL_PERIOD_S, &Disturbance::NONE);
        let mut value = first.reward;
        if !first.failed {
            let follow = (0..NUM_ACTIONS)
                .map(|b| {
                    let c = ActuatorCommand::from_index(b).expect("index in range");
                    boiler
                        .step(&first.state, c, CONTROL_PERIOD_S, &Disturbance::NONE)
                        .reward
                })
                .fold(f64::NEG_INFINITY, f64::max);
            value += gamma * follow;
        }
        if value > best.1 {
            best = (a, value);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub step: usize,
    pub emitted: SimTime,
    pub state: BoilerState,
    /// Reward earned over the period that just ended (0 for the first reading).
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Msg {
    /// Sensor timer: close the current period and emit a reading.
    Sample,
    Reading(Reading),
    /// Decision node timer: compute finished for this reading.
    Compute(Reading),
    Command {
        step: usize,
        emitted: SimTime,
        action: usize,
    },
    /// Edge timer: report background load to the cloud.
    Report,
    StateReport {
        resource: u32,
        load: f64,
    },
    /// Cloud timer: re-solve the placement.
    Rebalance,
    AllocationUpdate {
        policy_host: Option<u32>,
    },
}

enum Controller {
    Dqn(Box<DqnAgent>),
    Pid(BoilerPid),
}

struct AllocState {
    plan: AssignmentPlan,
    /// The cloud's view of each edge's background load.
    registry: Vec<EdgeResource>,
    /// Actual background load on each edge.
    actual_load: Vec<f64>,
}

/// Per-seed state that outlives single episodes.
struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    boiler: Boiler,
    latency: LatencyPreset,
    controller: Controller,
    alloc: AllocState,
    inlet: Option<&'a [f64]>,
}

#[derive(Default)]
struct Tally {
    reward: f64,
    periods: usize,
    uninterrupted: usize,
    loss_sum: f64,
    latencies: Vec<u64>,
    hits: usize,
    decisions: usize,
    edge_busy_ms: u64,
    train_losses: Vec<f64>,
    rebalances: u32,
    violations: u32,
}

struct Episode<'r, 'a> {
    run: &'r mut SeedRun<'a>,
    phase: Phase,
    cloud: NodeId,
    edges: Vec<NodeId>,
    sensor: NodeId,
    route: NodeId,
    rng: ChaCha8Rng,
    noise: DisturbanceProcess,
    inlet_offset: usize,

    state: BoilerState,
    cmd: ActuatorCommand,
    last_cmd_step: Option<usize>,
    segment_start: SimTime,
    travel: f64,

    history: VecDeque<(BoilerState, f64)>,
    prev: Option<(Vec<f64>, usize)>,

    tally: Tally,
    done: bool,
    error: Option<RunError>,
}

impl Episode<'_, '_> {
    fn inlet_at(&self, period: usize) -> Option<f64> {
        self.run
            .inlet
            .filter(|s| !s.is_empty())
            .map(|s| s[(self.inlet_offset + period) % s.len()])
    }

    fn jittered(&mut self, base_ms: u64) -> u64 {
        LinkLatency::with_jitter(base_ms, self.run.latency.jitter).sample(&mut self.rng)
    }

    /// Integrates the plant from the segment start to `now` under the current command.
    fn advance_to(&mut self, now: SimTime) {
        if now <= self.segment_start || self.state.failed {
            self.segment_start = self.segment_start.max(now);
            return;
        }
        let dt_s = (now.as_millis() - self.segment_start.as_millis()) as f64 / 1000.0;
        let mut dist = self.noise.sample(dt_s);
        dist.inlet_temp = self.inlet_at(self.tally.periods);
        let out = self.run.boiler.step(&self.state, self.cmd, dt_s, &dist);
        self.state = out.state;
        self.segment_start = now;
    }

    fn host_node(&self, host: Option<u32>) -> NodeId {
        host.and_then(|rid| {
            self.run
                .alloc
                .registry
                .iter()
                .position(|r| r.id == rid)
                .map(|i| self.edges[i])
        })
        .unwrap_or(self.cloud)
    }

    fn on_sample(&mut self, now: SimTime, out: &mut Outbox<Msg>) {
        let mut reward = 0.0;
        if now > SimTime::ZERO {
            self.advance_to(now);
            let boiler = &self.run.boiler;
            let w = &boiler.config().reward;
            reward = -boiler.deviation_cost(&self.state) - w.actuation * self.travel;
            if self.state.failed {
                reward -= w.failure_penalty;
            } else {
                self.tally.uninterrupted += 1;
            }
            self.travel = 0.0;
            self.tally.reward += reward;
            self.tally.loss_sum += boiler.control_loss(&self.state);
            self.tally.periods += 1;
        }
        let terminal = self.state.failed || self.tally.periods >= self.run.cfg.max_steps;
        let reading = Reading {
            step: self.tally.periods,
            emitted: now,
            state: self.state,
            reward,
            terminal,
        };
        out.send(self.sensor, self.route, Msg::Reading(reading));
        if !terminal {
            out.timer(self.sensor, CONTROL_PERIOD_MS, Msg::Sample);
        }
    }

    fn on_reading(&mut self, node: NodeId, reading: Reading, out: &mut Outbox<Msg>) {
        let base = if node == self.cloud {
            self.run.latency.cloud_compute_ms
        } else {
            self.run.latency.edge_compute_ms
        };
        let delay = self.jittered(base);
        if node != self.cloud {
            self.tally.edge_busy_ms += delay;
        }
        out.timer(node, delay, Msg::Compute(reading));
    }

    fn decide(&mut self, reading: &Reading) -> Result<Option<usize>, RunError> {
        let obs = {
            let hist = self.history.make_contiguous();
            self.run.boiler.observe(&reading.state, hist)
        };
        let training = self.phase == Phase::Train;
        let action = match &mut self.run.controller {
            Controller::Dqn(agent) => {
                if let Some((prev_obs, prev_action)) = self.prev.take() {
                    if training {
                        let done = reading.terminal && reading.state.failed;
                        agent.remember(Transition::new(
                            prev_obs,
                            prev_action,
                            reading.reward,
                            obs.clone(),
                            done,
                        )?);
                        if let Some(loss) = agent.train()? {
                            self.tally.train_losses.push(loss);
                        }
                    }
                }
                if reading.terminal {
                    return Ok(None);
                }
                if training {
                    agent.act(&obs)?
                } else {
                    agent.act_greedy(&obs)?
                }
            }
            Controller::Pid(pid) => {
                if reading.terminal {
                    return Ok(None);
                }
                pid.decide(&reading.state, CONTROL_PERIOD_S).index()
            }
        };
        let gamma = self.run.cfg.agent.gamma;
        if action == oracle_action(&self.run.boiler, &reading.state, gamma) {
            self.tally.hits += 1;
        }
        self.tally.decisions += 1;
        self.history.push_back((reading.state, reading.reward));
        while self.history.len() > self.run.boiler.config().history_len {
            self.history.pop_front();
        }
        self.prev = Some((obs, action));
        Ok(Some(action))
    }

    fn on_compute(&mut self, node: NodeId, reading: Reading, out: &mut Outbox<Msg>) {
        match self.decide(&reading) {
            Ok(Some(action)) => out.send(
                node,
                self.sensor,
                Msg::Command {
                    step: reading.step,
                    emitted: reading.emitted,
                    action,
                },
            ),
            Ok(None) => self.done = true,
            Err(e) => self.error = Some(e),
        }
    }

    fn on_command(&mut self, now: SimTime, step: usize, emitted: SimTime, action: usize) {
        self.tally
            .latencies
            .push(now.as_millis() - emitted.as_millis());
        if self.last_cmd_step.is_some_and(|s| s >= step) {
            return;
        }
        self.last_cmd_step = Some(step);
        self.advance_to(now);
        let next = ActuatorCommand::from_index(action).expect("controller emits valid actions");
        self.travel += (next.pump_value() - self.cmd.pump_value()).abs()
            + (next.valve_value() - self.cmd.valve_value()).abs();
        self.cmd = next;
    }

    fn on_report(&mut self, node: NodeId, out: &mut Outbox<Msg>) {
        let a = &self.run.cfg.allocator;
        let i = self.edges.iter().position(|&e| e == node).expect("report from an edge");
        let cap = self.run.alloc.registry[i].capacity;
        let drift = Normal::new(0.0, a.load_drift_std)
            .expect("validated std")
            .sample(&mut self.rng);
        let load = (self.run.alloc.actual_load[i] + drift).clamp(0.0, a.max_background_fraction * cap);
        self.run.alloc.actual_load[i] = load;
        out.send(
            node,
            self.cloud,
            Msg::StateReport {
                resource: self.run.alloc.registry[i].id,
                load,
            },
        );
        out.timer(node, a.report_interval_s * 1000, Msg::Report);
    }

    fn on_rebalance(&mut self, out: &mut Outbox<Msg>) {
        let a = &self.run.cfg.allocator;
        let alloc = &mut self.run.alloc;
        let plan = match allocator::rebalance(
            &alloc.plan,
            &a.modules,
            &alloc.registry,
            &a.weights,
            a.mode,
            DEFAULT_ENUMERATION_LIMIT,
        ) {
            Ok(p) => p,
            Err(e) => {
                self.error = Some(e.into());
                return;
            }
        };
        self.tally.violations += allocator::validate(&plan, &a.modules, &alloc.registry).len() as u32;
        self.tally.rebalances += 1;
        let host = plan.host_of(a.policy_module);
        alloc.plan = plan;
        out.send(self.cloud, self.sensor, Msg::AllocationUpdate { policy_host: host });
        for &e in &self.edges {
            out.send(self.cloud, e, Msg::AllocationUpdate { policy_host: host });
        }
        out.timer(self.cloud, a.rebalance_interval_s * 1000, Msg::Rebalance);
    }
}

impl Handler<Msg> for Episode<'_, '_> {
    fn handle(&mut self, ev: Event<Msg>, out: &mut Outbox<Msg>) {
        if self.done || self.error.is_some() {
            return;
        }
        let node = ev.target;
        match ev.payload {
            Msg::Sample => self.on_sample(ev.time, out),
            Msg::Reading(r) => self.on_reading(node, r, out),
            Msg::Compute(r) => self.on_compute(node, r, out),
            Msg::Command {
                step,
                emitted,
                action,
            } => self.on_command(ev.time, step, emitted, action),
            Msg::Report => self.on_report(node, out),
            Msg::StateReport { resource, load } => {
                if let Some(r) = self.run.alloc.registry.iter_mut().find(|r| r.id == resource) {
                    r.current_load = load;
                }
            }
            Msg::Rebalance => self.on_rebalance(out),
            Msg::AllocationUpdate { policy_host } => {
                if node == self.sensor {
                    self.route = self.host_node(policy_host);
                }
            }
        }
    }
}

impl<'a> SeedRun<'a> {
    fn new(cfg: &'a ExperimentConfig, seed: u64, inlet: Option<&'a [f64]>) -> Result<Self, RunError> {
        let boiler = Boiler::new(cfg.plant.clone());
        let controller = match cfg.controller {
            ControllerKind::Dqn => Controller::Dqn(Box::new(DqnAgent::new(
                boiler.observation_len(),
                cfg.agent.clone(),
                derive_seed(seed, STREAM_AGENT, 0),
                (cfg.episodes * cfg.max_steps) as u64,
            )?)),
            ControllerKind::Pid => Controller::Pid(BoilerPid::new(cfg.pid, cfg.plant.setpoint)),
        };
        let a = &cfg.allocator;
        let plan = match a.mode {
            allocator::SolverMode::Exact => allocator::solve_exact(&a.modules, &a.resources, &a.weights)?,
            allocator::SolverMode::Greedy => allocator::solve_greedy(&a.modules, &a.resources, &a.weights)?,
        };
        Ok(Self {
            cfg,
            seed,
            latency: cfg.latency.resolve(),
            boiler,
            controller,
            alloc: AllocState {
                plan,
                registry: a.resources.clone(),
                actual_load: a.resources.iter().map(|r| r.current_load).collect(),
            },
            inlet,
        })
    }

    fn build_kernel(&self, index: u64) -> Result<(Kernel<Msg>, NodeId, Vec<NodeId>, NodeId), RunError> {
        let lat = &self.latency;
        let j = lat.jitter;
        let mut topo = Topology::new();
        let cloud = topo.add_cloud();
        let edges: Vec<NodeId> = self.alloc.registry.iter().map(|_| topo.add_edge()).collect();
        let sensor = topo.add_sensor(edges[0]);
        let mut links = LinkTable::new();
        links.set(sensor, cloud, LinkLatency::with_jitter(lat.cloud_uplink_ms, j))?;
        links.set(cloud, sensor, LinkLatency::with_jitter(lat.cloud_downlink_ms, j))?;
        for &e in &edges {
            links.set(sensor, e, LinkLatency::with_jitter(lat.edge_uplink_ms, j))?;
            links.set(e, sensor, LinkLatency::with_jitter(lat.edge_downlink_ms, j))?;
            links.set_pair(e, cloud, LinkLatency::with_jitter(lat.backhaul_ms, j))?;
        }
        let kernel = Kernel::new(topo, links, derive_seed(self.seed, STREAM_LINKS, index))?;
        Ok((kernel, cloud, edges, sensor))
    }

    fn run_episode(&mut self, phase: Phase, index: usize) -> Result<MetricsRecord, RunError> {
        let idx = index as u64;
        let cfg = self.cfg;
        let (mut kernel, cloud, edges, sensor) = self.build_kernel(idx)?;
        let edge_mode = cfg.scenario == Scenario::EdgeCollab;

        let mut state = self.boiler.reset(derive_seed(self.seed, STREAM_RESET, idx));
        if let Some(series) = self.inlet.filter(|s| !s.is_empty()) {
            state.inlet_temp = series[(index * cfg.max_steps) % series.len()];
        }
        if let Controller::Pid(pid) = &mut self.controller {
            pid.reset();
        }
        kernel.schedule(SimTime::ZERO, sensor, sensor, Msg::Sample)?;
        if edge_mode {
            for &e in &edges {
                kernel.schedule(
                    SimTime::from_secs(cfg.allocator.report_interval_s),
                    e,
                    e,
                    Msg::Report,
                )?;
            }
            kernel.schedule(
                SimTime::from_secs(cfg.allocator.rebalance_interval_s),
                cloud,
                cloud,
                Msg::Rebalance,
            )?;
        }

        let mut ep = Episode {
            phase,
            cloud,
            sensor,
            route: cloud,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(self.seed, STREAM_WORLD, idx)),
            noise: DisturbanceProcess::new(
                cfg.plant.noise.clone(),
                derive_seed(self.seed, STREAM_NOISE, idx),
            ),
            inlet_offset: index * cfg.max_steps,
            state,
            cmd: ActuatorCommand::HOLD,
            last_cmd_step: None,
            segment_start: SimTime::ZERO,
            travel: 0.0,
            history: VecDeque::with_capacity(cfg.plant.history_len + 1),
            prev: None,
            tally: Tally::default(),
            done: false,
            error: None,
            edges,
            run: self,
        };
        if edge_mode {
            ep.route = ep.host_node(ep.run.alloc.plan.host_of(cfg.allocator.policy_module));
        }
        while !ep.done {
            if kernel.pending() == 0 {
                return Err(RunError::Stalled);
            }
            kernel.dispatch(&mut ep)?;
            if let Some(e) = ep.error.take() {
                return Err(e);
            }
        }

        let t = ep.tally;
        let (mean, p50, p95, min, max) = latency_summary(&t.latencies);
        let span_ms = (t.periods as u64).max(1) * CONTROL_PERIOD_MS * ep.edges.len() as u64;
        let epsilon = match &self.controller {
            Controller::Dqn(agent) => Some(if phase == Phase::Train { agent.epsilon() } else { 0.0 }),
            Controller::Pid(_) => None,
        };
        Ok(MetricsRecord {
            seed: self.seed,
            scenario: cfg.scenario.as_str().to_string(),
            controller: cfg.controller.as_str().to_string(),
            phase,
            episode: index,
            steps: t.periods,
            cumulative_reward: t.reward,
            latency_mean_ms: mean,
            latency_p50_ms: p50,
            latency_p95_ms: p95,
            latency_min_ms: min,
            latency_max_ms: max,
            failures: u32::from(t.uninterrupted < t.periods),
            uninterrupted_steps: t.uninterrupted,
            control_loss: if t.periods == 0 { 0.0 } else { t.loss_sum / t.periods as f64 },
            action_accuracy: if t.decisions == 0 {
                0.0
            } else {
                t.hits as f64 / t.decisions as f64
            },
            edge_utilization: (t.edge_busy_ms as f64 / span_ms as f64).min(1.0),
            train_loss_mean: (!t.train_losses.is_empty())
                .then(|| t.train_losses.iter().sum::<f64>() / t.train_losses.len() as f64),
            epsilon,
            rebalances: t.rebalances,
            allocation_violations: t.violations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "reason")]
pub enum SeedStatus {
    Completed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub status: SeedStatus,
    /// Episodes finished before any failure.
    pub records: Vec<MetricsRecord>,
}

impl SeedOutcome {
    pub fn records_in(&self, phase: Phase) -> impl Iterator<Item = &MetricsRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }
}

/// Loads the configured inlet-temperature channel, if any.
pub fn load_inlet_series(cfg: &ExperimentConfig) -> Result<Option<Vec<f64>>, RunError> {
    let Some(tc) = &cfg.trace else {
        return Ok(None);
    };
    let rows = ingest_trace(&tc.path, tc.source_period_s, CONTROL_PERIOD_MS / 1000)?;
    if let Some(bad) = rows
        .iter()
        .find(|r| r.sensor_id == tc.sensor && !CELSIUS_UNITS.contains(&r.unit.as_str()))
    {
        return Err(RunError::TraceSensor(
            tc.sensor.clone(),
            format!("unit {:?} is not a Celsius temperature", bad.unit),
        ));
    }
    let series = channel(&rows, &tc.sensor);
    if series.is_empty() {
        return Err(RunError::TraceSensor(tc.sensor.clone(), "no rows in trace".into()));
    }
    Ok(Some(series))
}

/// Trains (or, for PID, just runs) `episodes` episodes and then
/// `eval_episodes` greedy ones for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, inlet: Option<&[f64]>) -> SeedOutcome {
    let mut records = Vec::with_capacity(cfg.episodes + cfg.eval_episodes);
    let status = (|| -> Result<(), RunError> {
        let mut run = SeedRun::new(cfg, seed, inlet)?;
        for e in 0..cfg.episodes {
            records.push(run.run_episode(Phase::Train, e)?);
        }
        for e in 0..cfg.eval_episodes {
            records.push(run.run_episode(Phase::Eval, cfg.episodes + e)?);
        }
        Ok(())
    })();
    SeedOutcome {
        seed,
        status: match status {
            Ok(()) => SeedStatus::Completed,
            Err(e) => SeedStatus::Failed(e.to_string()),
        },
        records,
    }
}

/// Runs every seed. A failing seed is reported in its outcome and the
/// remaining seeds still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>, RunError> {
    let inlet = load_inlet_series(cfg)?;
    let inlet = inlet.as_deref();
    if cfg.parallel && cfg.seeds.len() > 1 {
        Ok(std::thread::scope(|s| {
            let handles: Vec<_> = cfg
                .seeds
                .iter()
                .map(|&seed| s.spawn(move || run_seed(cfg, seed, inlet)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed thread panicked"))
                .collect()
        }))
    } else {
        Ok(cfg.seeds.iter().map(|&seed| run_seed(cfg, seed, inlet)).collect())
    }
}

pub fn metrics_file_name(cfg: &ExperimentConfig, seed: u64) -> String {
    format!(
        "{}-{}-seed{}.jsonl",
        cfg.scenario.as_str(),
        cfg.controller.as_str(),
        seed
    )
}

pub fn summary_file_name(cfg: &ExperimentConfig) -> String {
    format!("{}-{}-summary.csv", cfg.scenario.as_str(), cfg.controller.as_str())
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in vals {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes one JSON-lines file per seed and a summary CSV; returns the paths.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcomes: &[SeedOutcome],
    dir: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let io = |e: std::io::Error| {
        RunError::Metrics(MetricsError::Io {
            path: dir.display().to_string(),
            source: e,
        })
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut paths = Vec::new();
    for o in outcomes {
        let path = dir.join(metrics_file_name(cfg, o.seed));
        write_jsonl(&path, &o.records)?;
        paths.push(path);
    }
    let summary = dir.join(summary_file_name(cfg));
    let mut wtr = csv::Writer::from_path(&summary).map_err(|e| io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| io(std::io::Error::other(e));
    wtr.write_record([
        "seed",
        "status",
        "phase",
        "episodes",
        "mean_reward",
        "mean_latency_ms",
        "failures",
        "mean_uninterrupted_steps",
        "mean_control_loss",
        "mean_action_accuracy",
        "mean_edge_utilization",
        "error",
    ])
    .map_err(csv_err)?;
    for o in outcomes {
        let (status, reason) = match &o.status {
            SeedStatus::Completed => ("completed", String::new()),
            SeedStatus::Failed(r) => ("failed", r.clone()),
        };
        for phase in [Phase::Train, Phase::Eval] {
            let recs: Vec<&MetricsRecord> = o.records_in(phase).collect();
            if recs.is_empty() && !(phase == Phase::Train && o.records.is_empty()) {
                continue;
            }
            wtr.write_record([
                o.seed.to_string(),
                status.to_string(),
                match phase {
                    Phase::Train => "train",
                    Phase::Eval => "eval",
                }
                .to_string(),
                recs.len().to_string(),
                opt(mean(recs.iter().map(|r| r.cumulative_reward))),
                opt(mean(recs.iter().filter_map(|r| r.latency_mean_ms))),
                recs.iter().map(|r| r.failures as u64).sum::<u64>().to_string(),
                opt(mean(recs.iter().map(|r| r.uninterrupted_steps as f64))),
                opt(mean(recs.iter().map(|r| r.control_loss))),
                opt(mean(recs.iter().map(|r| r.action_accuracy))),
                opt(mean(recs.iter().map(|r| r.edge_utilization))),
                reason.clone(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(io)?;
    paths.push(summary);
    Ok(paths)
}

/// Node kinds in the topology built for every episode, for inspection.
pub fn episode_topology(cfg: &ExperimentConfig) -> Vec<NodeKind> {
    let mut kinds = vec![NodeKind::CloudCenter];
    kinds.extend(cfg.allocator.resources.iter().map(|_| NodeKind::EdgeServer));
    kinds.push(NodeKind::Sensor);
    kinds
}
