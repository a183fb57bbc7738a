use std::collections::HashMap;

use cloudedge::sim::{Event, Kernel, LinkLatency, LinkTable, NodeId, Outbox, SimError, SimTime, Topology};
use proptest::prelude::*;

#[derive(Debug, Clone, PartialEq)]
struct Packet {
    id: u64,
    sent_at: SimTime,
    hops_left: u32,
}

struct Net {
    kernel: Kernel<Packet>,
    nodes: Vec<NodeId>,
}

fn net(seed: u64, jitter: f64) -> Net {
    let mut topo = Topology::new();
    let cloud = topo.add_cloud();
    let e1 = topo.add_edge();
    let e2 = topo.add_edge();
    let s1 = topo.add_sensor(e1);
    let s2 = topo.add_sensor(e2);
    let nodes = vec![cloud, e1, e2, s1, s2];
    let mut links = LinkTable::new();
    for (i, &a) in nodes.iter().enumerate() {
        for (j, &b) in nodes.iter().enumerate() {
            if i != j {
                let base = 50 + 37 * ((i * 5 + j) as u64 % 11);
                links.set(a, b, LinkLatency::with_jitter(base, jitter)).unwrap();
            }
        }
    }
    Net {
        kernel: Kernel::new(topo, links, seed).unwrap(),
        nodes,
    }
}

/// Bounces packets between nodes in a fixed rotation; returns the
/// processing trace and every delivery as (id, send time, arrival, from, to).
fn run(seed: u64, jitter: f64, packets: u64) -> (Vec<(u64, u64)>, Vec<(u64, u64, u64, NodeId, NodeId)>, (u64, u64)) {
    let mut n = net(seed, jitter);
    n.kernel.record_trace();
    let nodes = n.nodes.clone();
    for id in 0..packets {
        let from = nodes[(id % 5) as usize];
        let to = nodes[((id + 1 + id / 5) % 5) as usize];
        let to = if to == from { nodes[((id + 2) % 5) as usize] } else { to };
        n.kernel
            .send(from, to, Packet { id, sent_at: SimTime::ZERO, hops_left: (id % 4) as u32 })
            .unwrap();
    }
    let mut deliveries = Vec::new();
    let mut handler = |ev: Event<Packet>, out: &mut Outbox<Packet>| {
        deliveries.push((ev.payload.id, ev.payload.sent_at.as_millis(), ev.time.as_millis(), ev.source, ev.target));
        if ev.payload.hops_left > 0 {
            let next = nodes[(nodes.iter().position(|&x| x == ev.target).unwrap() + 1) % nodes.len()];
            out.send(
                ev.target,
                next,
                Packet { id: ev.payload.id, sent_at: ev.time, hops_left: ev.payload.hops_left - 1 },
            );
        }
    };
    loop {
        match n.kernel.dispatch(&mut handler) {
            Ok(_) => {}
            Err(SimError::Drained) => break,
            Err(e) => panic!("{e}"),
        }
    }
    let trace = n.kernel.trace().iter().map(|t| (t.time.as_millis(), t.seq)).collect();
    let stats = n.kernel.stats();
    (trace, deliveries, (stats.sent, stats.delivered))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_invariants(seed in any::<u64>(), jitter in prop::sample::select(vec![0.0, 0.1, 0.5, 0.9]), packets in 1u64..80) {
        let (trace, deliveries, (sent, delivered)) = run(seed, jitter, packets);

        // Total order.
        prop_assert!(trace.windows(2).all(|w| w[0] <= w[1]));

        // Causality: never faster than the link's minimum delay.
        let n = net(0, jitter);
        for &(_, sent_at, arrived, from, to) in &deliveries {
            let min = n.kernel.links().get(from, to).unwrap().min_delay();
            prop_assert!(arrived >= sent_at + min);
        }

        // Conservation: every hop sent is delivered exactly once.
        let mut per_id: HashMap<u64, usize> = HashMap::new();
        for &(id, ..) in &deliveries {
            *per_id.entry(id).or_default() += 1;
        }
        for id in 0..packets {
            prop_assert_eq!(per_id[&id], (id % 4) as usize + 1);
        }
        prop_assert_eq!(deliveries.len() as u64, sent);
        prop_assert_eq!(delivered, sent);

        // Determinism.
        let again = run(seed, jitter, packets);
        prop_assert_eq!(trace, again.0);
        prop_assert_eq!(deliveries, again.1);
    }
}

#[test]
fn thousand_events_drain_to_the_last_time() {
    let mut n = net(1, 0.0);
    let node = n.nodes[0];
    let mut max = 0;
    for i in 0..1000u64 {
        let t = (i * 7919) % 10_007;
        max = max.max(t);
        n.kernel
            .schedule(SimTime(t), node, node, Packet { id: i, sent_at: SimTime(t), hops_left: 0 })
            .unwrap();
    }
    for _ in 0..1000 {
        n.kernel.step().unwrap();
    }
    assert_eq!(n.kernel.pending(), 0);
    assert_eq!(n.kernel.now(), SimTime(max));
    assert!(matches!(n.kernel.step(), Err(SimError::Drained)));
}

#[test]
fn zero_jitter_round_trips_match_the_default_preset() {
    use cloudedge::latency::LatencyPreset;
    let p = LatencyPreset::default();
    assert_eq!(p.cloud_uplink_ms + p.cloud_compute_ms + p.cloud_downlink_ms, 1500);
    assert_eq!(p.edge_uplink_ms + p.edge_compute_ms + p.edge_downlink_ms, 300);

    let mut topo = Topology::new();
    let cloud = topo.add_cloud();
    let edge = topo.add_edge();
    let sensor = topo.add_sensor(edge);
    let mut links = LinkTable::new();
    links.set(edge, sensor, LinkLatency::fixed(150)).unwrap();
    links.set(sensor, cloud, LinkLatency::fixed(p.cloud_uplink_ms)).unwrap();
    let mut k: Kernel<u8> = Kernel::new(topo, links, 0).unwrap();
    assert_eq!(k.send(edge, sensor, 0).unwrap(), SimTime(150));
    assert_eq!(k.send(sensor, cloud, 0).unwrap(), SimTime(700));
}
