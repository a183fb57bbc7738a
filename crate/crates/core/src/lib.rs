//! Cloud-edge industrial control simulator.
//!
//! A deterministic discrete-event kernel ([`sim`]) carries sensor readings and
//! actuator commands between a boiler ([`plant`]), edge servers and a cloud
//! center. Decisions come from a small DQN agent ([`agent`]) or a PID
//! baseline ([`pid`]); control modules are placed on edge servers by
//! [`allocator`]. [`harness`] wires everything into reproducible experiments.

pub mod agent;
pub mod allocator;
pub mod harness;
pub mod latency;
pub mod pid;
pub mod plant;
pub mod sim;
