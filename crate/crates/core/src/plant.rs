//! Synthetic drum boiler.
//!
//! Level, pressure and outlet temperature evolve by first-order difference
//! equations (all terms evaluated on the pre-step state):
//!
//! ```text
//! level'    = level + (fill·pump − drain·valve·√(pressure/p_sp))·dt
//! T*        = inlet + heat_rise − level_heat_coupling·(level − level_sp) + d_heat
//! outlet'   = outlet + (dt/τ_T)·(T* − outlet)
//! P*        = p_sp·(1 + pressure_temp_gain·(outlet − T_sp)/T_sp
//!                    − pressure_valve_gain·(valve − 0.5)) + d_pressure
//! pressure' = pressure + (dt/τ_P)·(P* − pressure)
//! ```
//!
//! With the default coefficients the setpoint is an equilibrium at half pump
//! and half valve, and a full pump against a closed valve reaches the upper
//! level bound in 40 control periods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Control period in milliseconds.
pub const CONTROL_PERIOD_MS: u64 = 5_000;
/// Control period in seconds.
pub const CONTROL_PERIOD_S: f64 = 5.0;
/// Size of the joint pump/valve action grid.
pub const NUM_ACTIONS: usize = 9;
/// Numeric features per boiler state in an observation.
pub const STATE_FEATURES: usize = 6;
/// Bound on each observation feature.
pub const FEATURE_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoilerState {
    /// °C
    pub inlet_temp: f64,
    /// °C
    pub outlet_temp: f64,
    /// Fraction of drum capacity.
    pub water_level: f64,
    /// kPa
    pub pressure: f64,
    pub pump_pos: f64,
    pub valve_pos: f64,
    /// Set once the safety envelope is violated; the state is then frozen.
    pub failed: bool,
}

/// Discrete actuator setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActuatorLevel {
    Off,
    Half,
    Full,
}

impl ActuatorLevel {
    pub const ALL: [ActuatorLevel; 3] = [ActuatorLevel::Off, ActuatorLevel::Half, ActuatorLevel::Full];

    pub fn value(self) -> f64 {
        match self {
            ActuatorLevel::Off => 0.0,
            ActuatorLevel::Half => 0.5,
            ActuatorLevel::Full => 1.0,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Nearest level; exact midpoints (0.25, 0.75) round down.
    pub fn quantize(x: f64) -> Self {
        if x <= 0.25 {
            ActuatorLevel::Off
        } else if x <= 0.75 {
            ActuatorLevel::Half
        } else {
            ActuatorLevel::Full
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub pump: ActuatorLevel,
    pub valve: ActuatorLevel,
}

impl ActuatorCommand {
    pub const HOLD: ActuatorCommand = ActuatorCommand {
        pump: ActuatorLevel::Half,
        valve: ActuatorLevel::Half,
    };

    /// `index = 3·pump + valve`, levels ordered off, half, full.
    pub fn from_index(index: usize) -> Option<Self> {
        if index >= NUM_ACTIONS {
            return None;
        }
        Some(Self {
            pump: ActuatorLevel::ALL[index / 3],
            valve: ActuatorLevel::ALL[index % 3],
        })
    }

    pub fn index(self) -> usize {
        self.pump.index() * 3 + self.valve.index()
    }

    pub fn pump_value(self) -> f64 {
        self.pump.value()
    }

    pub fn valve_value(self) -> f64 {
        self.valve.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Setpoint {
    pub water_level: f64,
    pub pressure: f64,
    pub outlet_temp: f64,
}

impl Default for Setpoint {
    fn default() -> Self {
        Self {
            water_level: 0.5,
            pressure: 1000.0,
            outlet_temp: 180.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyEnvelope {
    pub min_level: f64,
    pub max_level: f64,
    pub max_pressure: f64,
    pub max_outlet_temp: f64,
}

impl Default for SafetyEnvelope {
    fn default() -> Self {
        let sp = Setpoint::default();
        Self {
            min_level: 0.15,
            max_level: 0.95,
            max_pressure: 1.6 * sp.pressure,
            max_outlet_temp: 1.4 * sp.outlet_temp,
        }
    }
}

impl SafetyEnvelope {
    pub fn contains(&self, s: &BoilerState) -> bool {
        s.water_level >= self.min_level
            && s.water_level <= self.max_level
            && s.pressure <= self.max_pressure
            && s.outlet_temp <= self.max_outlet_temp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub level: f64,
    pub pressure: f64,
    pub outlet_temp: f64,
    /// Cost per unit of actuator travel.
    pub actuation: f64,
    pub failure_penalty: f64,
    /// Deviations are divided by these before squaring.
    pub level_scale: f64,
    pub pressure_scale: f64,
    pub temp_scale: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            level: 1.0,
            pressure: 0.5,
            outlet_temp: 0.5,
            actuation: 0.05,
            failure_penalty: 500.0,
            level_scale: 0.1,
            pressure_scale: 100.0,
            temp_scale: 20.0,
        }
    }
}

/// Exogenous noise and surge settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Std-dev of the heat-input disturbance (°C) per control period.
    pub heat_std: f64,
    /// Std-dev of the pressure disturbance (kPa) per control period.
    pub pressure_std: f64,
    /// Chance that a heat surge starts in a control period.
    pub surge_probability: f64,
    /// Peak surge size in °C; the sign is random.
    pub surge_magnitude: f64,
    pub surge_duration_s: f64,
    /// Half-width of the uniform perturbation applied on reset, as a fraction
    /// of the distance from setpoint to the envelope.
    pub reset_spread: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            heat_std: 3.0,
            pressure_std: 10.0,
            surge_probability: 0.01,
            surge_magnitude: 40.0,
            surge_duration_s: 150.0,
            reset_spread: 0.3,
        }
    }
}

impl NoiseConfig {
    pub fn quiet() -> Self {
        Self {
            heat_std: 0.0,
            pressure_std: 0.0,
            surge_probability: 0.0,
            surge_magnitude: 0.0,
            surge_duration_s: 0.0,
            reset_spread: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub setpoint: Setpoint,
    pub inlet_temp_nominal: f64,
    /// Level rise per second at full pump.
    pub fill_rate: f64,
    /// Level drop per second at full valve and setpoint pressure.
    pub drain_rate: f64,
    pub heat_rise: f64,
    /// °C of heating target lost per unit of level above setpoint.
    pub level_heat_coupling: f64,
    pub temp_time_constant_s: f64,
    pub pressure_temp_gain: f64,
    pub pressure_valve_gain: f64,
    pub pressure_time_constant_s: f64,
    /// Hard physical ceiling on pressure, as a multiple of the setpoint.
    pub pressure_ceiling: f64,
    pub envelope: SafetyEnvelope,
    pub reward: RewardWeights,
    pub noise: NoiseConfig,
    /// Previous (state, reward) pairs carried in an observation.
    pub history_len: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            setpoint: Setpoint::default(),
            inlet_temp_nominal: 60.0,
            fill_rate: 0.00225,
            drain_rate: 0.00225,
            heat_rise: 120.0,
            level_heat_coupling: 200.0,
            temp_time_constant_s: 60.0,
            pressure_temp_gain: 2.0,
            pressure_valve_gain: 0.4,
            pressure_time_constant_s: 30.0,
            pressure_ceiling: 4.0,
            envelope: SafetyEnvelope::default(),
            reward: RewardWeights::default(),
            noise: NoiseConfig::default(),
            history_len: 10,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), String> {
        let e = &self.envelope;
        if !(e.min_level < e.max_level) {
            return Err("envelope.min_level must be below envelope.max_level".into());
        }
        if !(0.0..=1.0).contains(&e.min_level) || !(0.0..=1.0).contains(&e.max_level) {
            return Err("envelope level bounds must lie in [0,1]".into());
        }
        if !(e.max_pressure > 0.0) {
            return Err("envelope.max_pressure must be positive".into());
        }
        if !(e.max_outlet_temp > 0.0 && e.max_outlet_temp <= 600.0) {
            return Err("envelope.max_outlet_temp must lie in (0,600]".into());
        }
        let sp = &self.setpoint;
        let nominal = BoilerState {
            inlet_temp: self.inlet_temp_nominal,
            outlet_temp: sp.outlet_temp,
            water_level: sp.water_level,
            pressure: sp.pressure,
            pump_pos: 0.5,
            valve_pos: 0.5,
            failed: false,
        };
        if !e.contains(&nominal) {
            return Err("setpoint lies outside the safety envelope".into());
        }
        for (name, v) in [
            ("temp_time_constant_s", self.temp_time_constant_s),
            ("pressure_time_constant_s", self.pressure_time_constant_s),
            ("setpoint.pressure", sp.pressure),
            ("setpoint.outlet_temp", sp.outlet_temp),
            ("reward.level_scale", self.reward.level_scale),
            ("reward.pressure_scale", self.reward.pressure_scale),
            ("reward.temp_scale", self.reward.temp_scale),
            ("pressure_ceiling", self.pressure_ceiling),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("fill_rate", self.fill_rate),
            ("drain_rate", self.drain_rate),
            ("reward.level", self.reward.level),
            ("reward.pressure", self.reward.pressure),
            ("reward.outlet_temp", self.reward.outlet_temp),
            ("reward.actuation", self.reward.actuation),
            ("reward.failure_penalty", self.reward.failure_penalty),
            ("noise.heat_std", self.noise.heat_std),
            ("noise.pressure_std", self.noise.pressure_std),
            ("noise.surge_magnitude", self.noise.surge_magnitude),
            ("noise.surge_duration_s", self.noise.surge_duration_s),
        ] {
            if !(v >= 0.0) {
                return Err(format!("{name} must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise.surge_probability) {
            return Err("noise.surge_probability must lie in [0,1]".into());
        }
        if !(0.0..1.0).contains(&self.noise.reset_spread) {
            return Err("noise.reset_spread must lie in [0,1)".into());
        }
        Ok(())
    }
}

/// Exogenous inputs for one integration step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Disturbance {
    /// Added to the heating target (°C).
    pub heat: f64,
    /// Added to the pressure target (kPa).
    pub pressure: f64,
    /// Replaces the inlet temperature when set (e.g. from a sensor trace).
    pub inlet_temp: Option<f64>,
}

impl Disturbance {
    pub const NONE: Disturbance = Disturbance {
        heat: 0.0,
        pressure: 0.0,
        inlet_temp: None,
    };
}

/// Seeded generator of [`Disturbance`]s: Gaussian noise plus occasional
/// heat surges that decay linearly.
#[derive(Debug, Clone)]
pub struct DisturbanceProcess {
    cfg: NoiseConfig,
    rng: ChaCha8Rng,
    surge_peak: f64,
    surge_remaining_s: f64,
}

impl DisturbanceProcess {
    pub fn new(cfg: NoiseConfig, seed: u64) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            surge_peak: 0.0,
            surge_remaining_s: 0.0,
        }
    }

    /// Draws the disturbance for an integration step of `dt_s` seconds.
    pub fn sample(&mut self, dt_s: f64) -> Disturbance {
        let frac = dt_s / CONTROL_PERIOD_S;
        let scale = frac.sqrt();
        let n1: f64 = StandardNormal.sample(&mut self.rng);
        let n2: f64 = StandardNormal.sample(&mut self.rng);
        let start: f64 = self.rng.random();
        if self.surge_remaining_s <= 0.0
            && self.cfg.surge_duration_s > 0.0
            && start < self.cfg.surge_probability * frac
        {
            let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            self.surge_peak = sign * self.cfg.surge_magnitude;
            self.surge_remaining_s = self.cfg.surge_duration_s;
        }
        let surge = if self.surge_remaining_s > 0.0 {
            let v = self.surge_peak * self.surge_remaining_s / self.cfg.surge_duration_s;
            self.surge_remaining_s -= dt_s;
            v
        } else {
            0.0
        };
        Disturbance {
            heat: self.cfg.heat_std * scale * n1 + surge,
            pressure: self.cfg.pressure_std * scale * n2,
            inlet_temp: None,
        }
    }

    pub fn surge_active(&self) -> bool {
        self.surge_remaining_s > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: BoilerState,
    pub reward: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boiler {
    cfg: PlantConfig,
}

impl Boiler {
    pub fn new(cfg: PlantConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn nominal(&self) -> BoilerState {
        let sp = &self.cfg.setpoint;
        BoilerState {
            inlet_temp: self.cfg.inlet_temp_nominal,
            outlet_temp: sp.outlet_temp,
            water_level: sp.water_level,
            pressure: sp.pressure,
            pump_pos: 0.5,
            valve_pos: 0.5,
            failed: false,
        }
    }

    /// Nominal state perturbed uniformly by up to `reset_spread` of the gap
    /// between setpoint and envelope, so resets never start failed.
    pub fn reset(&self, seed: u64) -> BoilerState {
        let mut s = self.nominal();
        let spread = self.cfg.noise.reset_spread;
        if spread == 0.0 {
            return s;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = &self.cfg.envelope;
        let sp = &self.cfg.setpoint;
        let level_gap = (sp.water_level - env.min_level).min(env.max_level - sp.water_level);
        let pressure_gap = env.max_pressure - sp.pressure;
        let temp_gap = env.max_outlet_temp - sp.outlet_temp;
        let mut jitter = |gap: f64| spread * gap * rng.random_range(-1.0..=1.0);
        s.water_level += jitter(level_gap);
        s.pressure += jitter(pressure_gap);
        s.outlet_temp += jitter(temp_gap);
        s
    }

    /// Advances `dt_s` seconds under `cmd`.
    pub fn step(
        &self,
        state: &BoilerState,
        cmd: ActuatorCommand,
        dt_s: f64,
        dist: &Disturbance,
    ) -> StepOutcome {
        let penalty = self.cfg.reward.failure_penalty;
        if state.failed {
            return StepOutcome {
                state: *state,
                reward: -penalty,
                failed: true,
            };
        }
        let c = &self.cfg;
        let sp = &c.setpoint;
        let pump = cmd.pump_value();
        let valve = cmd.valve_value();

        let inflow = c.fill_rate * pump;
        let outflow = c.drain_rate * valve * (state.pressure.max(0.0) / sp.pressure).sqrt();
        let level = (state.water_level + (inflow - outflow) * dt_s).clamp(0.0, 1.0);

        let inlet = dist.inlet_temp.unwrap_or(state.inlet_temp);
        let heat_target = inlet + c.heat_rise
            - c.level_heat_coupling * (state.water_level - sp.water_level)
            + dist.heat;
        let a_t = (dt_s / c.temp_time_constant_s).min(1.0);
        let outlet = (state.outlet_temp + a_t * (heat_target - state.outlet_temp)).clamp(0.0, 600.0);

        let pressure_target = sp.pressure
            * (1.0 + c.pressure_temp_gain * (state.outlet_temp - sp.outlet_temp) / sp.outlet_temp
                - c.pressure_valve_gain * (valve - 0.5))
            + dist.pressure;
        let a_p = (dt_s / c.pressure_time_constant_s).min(1.0);
        let pressure = (state.pressure + a_p * (pressure_target - state.pressure))
            .clamp(0.0, c.pressure_ceiling * sp.pressure);

        let mut next = BoilerState {
            inlet_temp: inlet.clamp(0.0, 600.0),
            outlet_temp: outlet,
            water_level: level,
            pressure,
            pump_pos: pump,
            valve_pos: valve,
            failed: false,
        };
        // Process terms come from the new state, actuator travel from the old one.
        let scored = BoilerState {
            pump_pos: state.pump_pos,
            valve_pos: state.valve_pos,
            ..next
        };
        let mut reward = self.reward(&scored, cmd);
        let failed = !c.envelope.contains(&next);
        if failed {
            next.failed = true;
            reward -= penalty;
        }
        StepOutcome {
            state: next,
            reward,
            failed,
        }
    }

    /// Negative weighted squared deviation from setpoint minus the cost of
    /// moving the actuators from `state`'s positions to `cmd`. Zero at the
    /// setpoint with no actuator travel.
    pub fn reward(&self, state: &BoilerState, cmd: ActuatorCommand) -> f64 {
        let w = &self.cfg.reward;
        let travel =
            (cmd.pump_value() - state.pump_pos).abs() + (cmd.valve_value() - state.valve_pos).abs();
        -self.deviation_cost(state) - w.actuation * travel
    }

    /// Weighted squared setpoint deviation (non-negative).
    pub fn deviation_cost(&self, state: &BoilerState) -> f64 {
        let w = &self.cfg.reward;
        let (dl, dp, dt) = self.normalized_deviation(state);
        w.level * dl * dl + w.pressure * dp * dp + w.outlet_temp * dt * dt
    }

    /// Unweighted mean of squared normalized deviations; the control-loss metric.
    pub fn control_loss(&self, state: &BoilerState) -> f64 {
        let (dl, dp, dt) = self.normalized_deviation(state);
        (dl * dl + dp * dp + dt * dt) / 3.0
    }

    fn normalized_deviation(&self, s: &BoilerState) -> (f64, f64, f64) {
        let sp = &self.cfg.setpoint;
        let w = &self.cfg.reward;
        (
            (s.water_level - sp.water_level) / w.level_scale,
            (s.pressure - sp.pressure) / w.pressure_scale,
            (s.outlet_temp - sp.outlet_temp) / w.temp_scale,
        )
    }

    /// Largest magnitude a single non-failure reward can take.
    pub fn reward_bound(&self) -> f64 {
        let sp = &self.cfg.setpoint;
        let w = &self.cfg.reward;
        let ceiling = self.cfg.pressure_ceiling * sp.pressure;
        let dl = sp.water_level.max(1.0 - sp.water_level) / w.level_scale;
        let dp = sp.pressure.max(ceiling - sp.pressure) / w.pressure_scale;
        let dt = sp.outlet_temp.max(600.0 - sp.outlet_temp) / w.temp_scale;
        w.level * dl * dl + w.pressure * dp * dp + w.outlet_temp * dt * dt + 2.0 * w.actuation
    }

    /// Normalized state features used by observations, each limited to
    /// `±FEATURE_LIMIT` so far-off states cannot blow up network inputs.
    pub fn features(&self, s: &BoilerState) -> [f64; STATE_FEATURES] {
        let (dl, dp, dt) = self.normalized_deviation(s);
        let lim = |v: f64| v.clamp(-FEATURE_LIMIT, FEATURE_LIMIT);
        [
            lim(dl),
            lim(dp),
            lim(dt),
            lim((s.inlet_temp - self.cfg.inlet_temp_nominal) / 10.0),
            s.pump_pos,
            s.valve_pos,
        ]
    }

    pub fn observation_len(&self) -> usize {
        STATE_FEATURES + self.cfg.history_len * (STATE_FEATURES + 1)
    }

    /// Flattens the current state and the most recent `history_len`
    /// (state, reward) pairs, newest first. `history` is in arrival order
    /// (oldest first); missing entries are zero.
    pub fn observe(&self, current: &BoilerState, history: &[(BoilerState, f64)]) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_len());
        obs.extend_from_slice(&self.features(current));
        for (state, reward) in history.iter().rev().take(self.cfg.history_len) {
            obs.extend_from_slice(&self.features(state));
            obs.push((reward / 10.0).clamp(-FEATURE_LIMIT, FEATURE_LIMIT));
        }
        obs.resize(self.observation_len(), 0.0);
        obs
    }
}
