//! Control-path latency presets.
//!
//! Only round-trip totals are fixed (1500 ms via the cloud, 300 ms at the
//! edge); the split into uplink, compute and downlink is configurable.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    /// 700 + 100 + 700 ms cloud loop, 100 + 100 + 100 ms edge loop.
    Default,
    /// Cloud loop stretched to one minute.
    CloudMinute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyPreset {
    pub edge_uplink_ms: u64,
    pub edge_compute_ms: u64,
    pub edge_downlink_ms: u64,
    pub cloud_uplink_ms: u64,
    pub cloud_compute_ms: u64,
    pub cloud_downlink_ms: u64,
    /// Edge <-> cloud link used for state reports and allocation updates.
    pub backhaul_ms: u64,
    /// Uniform jitter fraction applied to every link.
    pub jitter: f64,
}

impl LatencyPreset {
    pub fn named(name: PresetName) -> Self {
        match name {
            PresetName::Default => Self {
                edge_uplink_ms: 100,
                edge_compute_ms: 100,
                edge_downlink_ms: 100,
                cloud_uplink_ms: 700,
                cloud_compute_ms: 100,
                cloud_downlink_ms: 700,
                backhaul_ms: 600,
                jitter: 0.0,
            },
            PresetName::CloudMinute => Self {
                cloud_uplink_ms: 29_950,
                cloud_compute_ms: 100,
                cloud_downlink_ms: 29_950,
                ..Self::named(PresetName::Default)
            },
        }
    }

    pub fn edge_round_trip_ms(&self) -> u64 {
        self.edge_uplink_ms + self.edge_compute_ms + self.edge_downlink_ms
    }

    pub fn cloud_round_trip_ms(&self) -> u64 {
        self.cloud_uplink_ms + self.cloud_compute_ms + self.cloud_downlink_ms
    }
}

impl Default for LatencyPreset {
    fn default() -> Self {
        Self::named(PresetName::Default)
    }
}
