//! Experiment configuration (TOML).
//!
//! Every key is optional; omitted keys take the defaults below. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Hyperparams;
use crate::allocator::{AffinityWeights, ControlModule, EdgeResource, SolverMode};
use crate::latency::{LatencyPreset, PresetName};
use crate::pid::PidConfig;
use crate::plant::PlantConfig;

/// Env var consulted for the output directory when neither the config nor
/// the command line sets one.
pub const OUTPUT_DIR_ENV: &str = "CLOUDEDGE_OUT_DIR";

/// One simulated day of 5-second periods.
pub const EPISODE_STEPS_DAY: usize = 17_280;
/// Short desk-scale episode.
pub const EPISODE_STEPS_DESK: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Every decision travels sensor -> cloud -> actuator.
    CloudOnly,
    /// Decisions run on the edge server hosting the policy module.
    EdgeCollab,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::CloudOnly => "cloud-only",
            Scenario::EdgeCollab => "edge-collab",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cloud-only" => Ok(Scenario::CloudOnly),
            "edge-collab" => Ok(Scenario::EdgeCollab),
            other => Err(format!("unknown scenario {other:?} (cloud-only|edge-collab)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Dqn,
    Pid,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Dqn => "dqn",
            ControllerKind::Pid => "pid",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dqn" => Ok(ControllerKind::Dqn),
            "pid" => Ok(ControllerKind::Pid),
            other => Err(format!("unknown controller {other:?} (dqn|pid)")),
        }
    }
}

/// A named preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyConfig {
    pub preset: PresetName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_uplink_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_compute_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_downlink_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud_uplink_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud_compute_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud_downlink_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backhaul_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            preset: PresetName::Default,
            edge_uplink_ms: None,
            edge_compute_ms: None,
            edge_downlink_ms: None,
            cloud_uplink_ms: None,
            cloud_compute_ms: None,
            cloud_downlink_ms: None,
            backhaul_ms: None,
            jitter: None,
        }
    }
}

impl LatencyConfig {
    pub fn resolve(&self) -> LatencyPreset {
        let base = LatencyPreset::named(self.preset);
        LatencyPreset {
            edge_uplink_ms: self.edge_uplink_ms.unwrap_or(base.edge_uplink_ms),
            edge_compute_ms: self.edge_compute_ms.unwrap_or(base.edge_compute_ms),
            edge_downlink_ms: self.edge_downlink_ms.unwrap_or(base.edge_downlink_ms),
            cloud_uplink_ms: self.cloud_uplink_ms.unwrap_or(base.cloud_uplink_ms),
            cloud_compute_ms: self.cloud_compute_ms.unwrap_or(base.cloud_compute_ms),
            cloud_downlink_ms: self.cloud_downlink_ms.unwrap_or(base.cloud_downlink_ms),
            backhaul_ms: self.backhaul_ms.unwrap_or(base.backhaul_ms),
            jitter: self.jitter.unwrap_or(base.jitter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocatorConfig {
    pub mode: SolverMode,
    pub weights: AffinityWeights,
    pub rebalance_interval_s: u64,
    /// How often edge servers report their background load.
    pub report_interval_s: u64,
    /// Std-dev of the per-report random walk on background load.
    pub load_drift_std: f64,
    /// Background load never exceeds this share of capacity.
    pub max_background_fraction: f64,
    /// Module whose host executes the control decisions.
    pub policy_module: u32,
    /// One edge server is created per resource, in order.
    pub resources: Vec<EdgeResource>,
    pub modules: Vec<ControlModule>,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Exact,
            weights: AffinityWeights::default(),
            rebalance_interval_s: 60,
            report_interval_s: 30,
            load_drift_std: 0.5,
            max_background_fraction: 0.4,
            policy_module: 0,
            resources: vec![
                EdgeResource {
                    id: 0,
                    capacity: 20.0,
                    current_load: 4.0,
                    bandwidth: 100.0,
                    compute_rating: 1.0,
                },
                EdgeResource {
                    id: 1,
                    capacity: 16.0,
                    current_load: 3.0,
                    bandwidth: 50.0,
                    compute_rating: 0.6,
                },
                EdgeResource {
                    id: 2,
                    capacity: 12.0,
                    current_load: 2.0,
                    bandwidth: 80.0,
                    compute_rating: 0.4,
                },
            ],
            modules: vec![
                ControlModule {
                    id: 0,
                    load: 4.0,
                    intensity: 1.0,
                },
                ControlModule {
                    id: 1,
                    load: 2.0,
                    intensity: 0.5,
                },
                ControlModule {
                    id: 2,
                    load: 2.0,
                    intensity: 0.5,
                },
                ControlModule {
                    id: 3,
                    load: 6.0,
                    intensity: 0.9,
                },
            ],
        }
    }
}

/// Optional sensor trace feeding the boiler's inlet temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub path: PathBuf,
    /// `sensor_id` whose readings drive the inlet temperature.
    pub sensor: String,
    #[serde(default = "default_source_period")]
    pub source_period_s: u64,
}

fn default_source_period() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub controller: ControllerKind,
    pub seeds: Vec<u64>,
    /// Training episodes (plain control episodes for PID).
    pub episodes: usize,
    pub max_steps: usize,
    /// Greedy evaluation episodes after training.
    pub eval_episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Run seeds on separate threads.
    pub parallel: bool,
    pub latency: LatencyConfig,
    pub plant: PlantConfig,
    pub agent: Hyperparams,
    pub pid: PidConfig,
    pub allocator: AllocatorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::EdgeCollab,
            controller: ControllerKind::Dqn,
            seeds: vec![1],
            episodes: 300,
            max_steps: EPISODE_STEPS_DESK,
            eval_episodes: 20,
            output_dir: None,
            parallel: false,
            latency: LatencyConfig::default(),
            plant: PlantConfig::default(),
            agent: Hyperparams::default(),
            pid: PidConfig::default(),
            allocator: AllocatorConfig::default(),
            trace: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for \"{key}\": {reason}")]
    Range { key: String, reason: String },
    #[error("\"{key}\" refers to missing file {path}")]
    MissingFile { key: String, path: PathBuf },
}

fn range(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(range("seeds", "at least one seed is required"));
        }
        if self.episodes == 0 {
            return Err(range("episodes", "must be at least 1"));
        }
        if self.max_steps == 0 {
            return Err(range("max_steps", "must be at least 1"));
        }
        self.plant.validate().map_err(|r| {
            let key = r.split_whitespace().next().unwrap_or("plant");
            range(&format!("plant.{key}"), r.clone())
        })?;
        if self.plant.history_len == 0 {
            return Err(range("plant.history_len", "must be at least 1"));
        }
        self.agent.validate().map_err(|e| match e {
            crate::agent::AgentError::Hyperparam { key, reason } => {
                // Table-free name so "gamma" reads as "gamma".
                ConfigError::Range {
                    key: key.to_string(),
                    reason,
                }
            }
            other => range("agent", other.to_string()),
        })?;
        self.pid
            .level
            .validate()
            .map_err(|r| range("pid.level", r))?;
        self.pid
            .pressure
            .validate()
            .map_err(|r| range("pid.pressure", r))?;
        let lat = self.latency.resolve();
        if !(0.0..1.0).contains(&lat.jitter) {
            return Err(range("latency.jitter", "must lie in [0,1)"));
        }
        for (key, v) in [
            ("latency.edge_uplink_ms", lat.edge_uplink_ms),
            ("latency.edge_downlink_ms", lat.edge_downlink_ms),
            ("latency.cloud_uplink_ms", lat.cloud_uplink_ms),
            ("latency.cloud_downlink_ms", lat.cloud_downlink_ms),
            ("latency.backhaul_ms", lat.backhaul_ms),
        ] {
            if v == 0 {
                return Err(range(key, "link delays must be positive"));
            }
        }
        let a = &self.allocator;
        a.weights
            .validate()
            .map_err(|e| range("allocator.weights", e.to_string()))?;
        if a.resources.is_empty() {
            return Err(range("allocator.resources", "at least one edge resource is required"));
        }
        if !a.modules.iter().any(|m| m.id == a.policy_module) {
            return Err(range(
                "allocator.policy_module",
                format!("no module with id {}", a.policy_module),
            ));
        }
        if a.rebalance_interval_s == 0 {
            return Err(range("allocator.rebalance_interval_s", "must be positive"));
        }
        if a.report_interval_s == 0 {
            return Err(range("allocator.report_interval_s", "must be positive"));
        }
        if !(a.load_drift_std >= 0.0) {
            return Err(range("allocator.load_drift_std", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&a.max_background_fraction) {
            return Err(range("allocator.max_background_fraction", "must lie in [0,1]"));
        }
        if let Some(trace) = &self.trace {
            if !trace.path.exists() {
                return Err(ConfigError::MissingFile {
                    key: "trace.path".into(),
                    path: trace.path.clone(),
                });
            }
            if trace.source_period_s == 0 {
                return Err(range("trace.source_period_s", "must be positive"));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text)
}
