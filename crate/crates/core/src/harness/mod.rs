pub mod config;
pub mod experiment;
pub mod metrics;
pub mod trace;
