//! Deterministic discrete-event kernel.
//!
//! Nodes (sensors, edge servers and one cloud center) exchange payloads over
//! latency-bearing links. Time is an integer millisecond counter and events
//! are totally ordered by `(time, seq)`, where `seq` is issued at scheduling
//! time. Node behaviour lives in a [`Handler`], which sees one event at a time
//! and returns its effects through an [`Outbox`]; the kernel applies them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: u64) -> Self {
        SimTime(secs * 1000)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn after(self, delay_ms: u64) -> Self {
        SimTime(self.0 + delay_ms)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Sensor,
    EdgeServer,
    CloudCenter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Gateway edge server; set for sensors only.
    pub attached_edge: Option<NodeId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event at {event} is earlier than the clock ({clock})")]
    StaleEvent { event: SimTime, clock: SimTime },
    #[error("simulation drained: no pending events")]
    Drained,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no link configured from {from} to {to}")]
    MissingLink { from: NodeId, to: NodeId },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid link {from}->{to}: {reason}")]
    InvalidLink {
        from: NodeId,
        to: NodeId,
        reason: String,
    },
}

/// Sensor, edge and cloud layers. Build with the `add_*` methods, then
/// [`Topology::validate`].
#[derive(Debug, Clone, Default)]
pub struct Topology {
    nodes: Vec<Node>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: NodeKind, attached_edge: Option<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            kind,
            attached_edge,
        });
        id
    }

    pub fn add_cloud(&mut self) -> NodeId {
        self.push(NodeKind::CloudCenter, None)
    }

    pub fn add_edge(&mut self) -> NodeId {
        self.push(NodeKind::EdgeServer, None)
    }

    pub fn add_sensor(&mut self, edge: NodeId) -> NodeId {
        self.push(NodeKind::Sensor, Some(edge))
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.kind == kind)
            .map(|n| n.id)
    }

    pub fn cloud(&self) -> Option<NodeId> {
        self.of_kind(NodeKind::CloudCenter).next()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let clouds = self.of_kind(NodeKind::CloudCenter).count();
        if clouds != 1 {
            return Err(SimError::InvalidTopology(format!(
                "expected exactly one cloud center, found {clouds}"
            )));
        }
        for node in &self.nodes {
            match (node.kind, node.attached_edge) {
                (NodeKind::Sensor, Some(edge)) => {
                    let ok = self
                        .node(edge)
                        .is_some_and(|e| e.kind == NodeKind::EdgeServer);
                    if !ok {
                        return Err(SimError::InvalidTopology(format!(
                            "sensor {} is attached to {edge}, which is not an edge server",
                            node.id
                        )));
                    }
                }
                (NodeKind::Sensor, None) => {
                    return Err(SimError::InvalidTopology(format!(
                        "sensor {} has no edge server",
                        node.id
                    )))
                }
                (_, Some(_)) => {
                    return Err(SimError::InvalidTopology(format!(
                        "only sensors attach to edge servers ({})",
                        node.id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Delay of one directed link. Delivered delays fall in
/// `[base·(1−jitter), base·(1+jitter)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLatency {
    pub base_ms: u64,
    #[serde(default)]
    pub jitter: f64,
}

impl LinkLatency {
    pub fn fixed(base_ms: u64) -> Self {
        Self {
            base_ms,
            jitter: 0.0,
        }
    }

    pub fn with_jitter(base_ms: u64, jitter: f64) -> Self {
        Self { base_ms, jitter }
    }

    /// Smallest delay this link can deliver.
    pub fn min_delay(&self) -> u64 {
        let lo = (self.base_ms as f64 * (1.0 - self.jitter)).ceil() as u64;
        lo.max(1).min(self.base_ms)
    }

    pub fn max_delay(&self) -> u64 {
        let hi = (self.base_ms as f64 * (1.0 + self.jitter)).floor() as u64;
        hi.max(self.base_ms)
    }

    /// With zero jitter no random number is drawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.jitter == 0.0 {
            return self.base_ms;
        }
        let u: f64 = rng.random_range(-1.0..=1.0);
        let raw = (self.base_ms as f64 * (1.0 + self.jitter * u)).round() as u64;
        raw.clamp(self.min_delay(), self.max_delay())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinkTable {
    links: BTreeMap<(NodeId, NodeId), LinkLatency>,
}

impl LinkTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, latency: LinkLatency) -> Result<(), SimError> {
        if from != to && latency.base_ms == 0 {
            return Err(SimError::InvalidLink {
                from,
                to,
                reason: "base delay must be positive between distinct nodes".into(),
            });
        }
        if !(0.0..1.0).contains(&latency.jitter) {
            return Err(SimError::InvalidLink {
                from,
                to,
                reason: format!("jitter {} outside [0,1)", latency.jitter),
            });
        }
        self.links.insert((from, to), latency);
        Ok(())
    }

    /// Sets both directions.
    pub fn set_pair(&mut self, a: NodeId, b: NodeId, latency: LinkLatency) -> Result<(), SimError> {
        self.set(a, b, latency)?;
        self.set(b, a, latency)
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Option<&LinkLatency> {
        self.links.get(&(from, to))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub source: NodeId,
    pub target: NodeId,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; reverse so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Effects produced by a handler for one event.
#[derive(Debug)]
pub struct Outbox<P> {
    sends: Vec<(NodeId, NodeId, P)>,
    timers: Vec<(NodeId, u64, P)>,
}

impl<P> Default for Outbox<P> {
    fn default() -> Self {
        Self {
            sends: Vec::new(),
            timers: Vec::new(),
        }
    }
}

impl<P> Outbox<P> {
    /// Deliver `payload` over the `from -> to` link.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: P) {
        self.sends.push((from, to, payload));
    }

    /// Local event at `node` after `delay_ms`; no link involved.
    pub fn timer(&mut self, node: NodeId, delay_ms: u64, payload: P) {
        self.timers.push((node, delay_ms, payload));
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty() && self.timers.is_empty()
    }
}

pub trait Handler<P> {
    fn handle(&mut self, event: Event<P>, out: &mut Outbox<P>);
}

impl<P, F: FnMut(Event<P>, &mut Outbox<P>)> Handler<P> for F {
    fn handle(&mut self, event: Event<P>, out: &mut Outbox<P>) {
        self(event, out)
    }
}

/// One line per processed event; compared across runs for determinism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub time: SimTime,
    pub seq: u64,
    pub source: NodeId,
    pub target: NodeId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
}

pub struct Kernel<P> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    topology: Topology,
    links: LinkTable,
    rng: ChaCha8Rng,
    trace: Option<Vec<TraceEntry>>,
    stats: LinkStats,
}

impl<P> Kernel<P> {
    pub fn new(topology: Topology, links: LinkTable, seed: u64) -> Result<Self, SimError> {
        topology.validate()?;
        Ok(Self {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            topology,
            links,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
            stats: LinkStats::default(),
        })
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn links(&self) -> &LinkTable {
        &self.links
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceEntry] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Enqueue a payload for `target` at absolute `time`; returns the issued
    /// sequence number.
    pub fn schedule(
        &mut self,
        time: SimTime,
        source: NodeId,
        target: NodeId,
        payload: P,
    ) -> Result<u64, SimError> {
        if time < self.clock {
            return Err(SimError::StaleEvent {
                event: time,
                clock: self.clock,
            });
        }
        if !self.topology.contains(target) {
            return Err(SimError::UnknownNode(target));
        }
        if !self.topology.contains(source) {
            return Err(SimError::UnknownNode(source));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            time,
            seq,
            source,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Schedules delivery at `now + sampled link delay`; returns the delivery time.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: P) -> Result<SimTime, SimError> {
        for id in [from, to] {
            if !self.topology.contains(id) {
                return Err(SimError::UnknownNode(id));
            }
        }
        let delay = if from == to {
            match self.links.get(from, to) {
                Some(link) => link.sample(&mut self.rng),
                None => 0,
            }
        } else {
            let link = self
                .links
                .get(from, to)
                .ok_or(SimError::MissingLink { from, to })?;
            link.sample(&mut self.rng)
        };
        let at = self.clock.after(delay);
        self.schedule(at, from, to, payload)?;
        self.stats.sent += 1;
        Ok(at)
    }

    /// Pops the next event and advances the clock to it.
    pub fn step(&mut self) -> Result<Event<P>, SimError> {
        let Queued(event) = self.queue.pop().ok_or(SimError::Drained)?;
        debug_assert!(event.time >= self.clock);
        self.clock = event.time;
        if event.source != event.target {
            self.stats.delivered += 1;
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                time: event.time,
                seq: event.seq,
                source: event.source,
                target: event.target,
            });
        }
        Ok(event)
    }

    /// Pops the next event, hands it to `handler`, and applies the effects.
    pub fn dispatch<H: Handler<P>>(&mut self, handler: &mut H) -> Result<SimTime, SimError> {
        let event = self.step()?;
        let at = event.time;
        let mut out = Outbox::default();
        handler.handle(event, &mut out);
        self.apply(out)?;
        Ok(at)
    }

    fn apply(&mut self, out: Outbox<P>) -> Result<(), SimError> {
        for (from, to, payload) in out.sends {
            self.send(from, to, payload)?;
        }
        for (node, delay, payload) in out.timers {
            let at = self.clock.after(delay);
            self.schedule(at, node, node, payload)?;
        }
        Ok(())
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|q| q.0.time)
    }

    /// Processes every event with `time <= until`; returns how many ran.
    pub fn run_until<H: Handler<P>>(
        &mut self,
        until: SimTime,
        handler: &mut H,
    ) -> Result<usize, SimError> {
        let mut count = 0;
        while self.peek_time().is_some_and(|t| t <= until) {
            self.dispatch(handler)?;
            count += 1;
        }
        Ok(count)
    }
}
