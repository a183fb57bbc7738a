//! PID baseline.
//!
//! Two independent loops drive the boiler: the pump follows the level error
//! and the valve follows the pressure error (reverse acting: high pressure
//! opens the valve). Continuous outputs are quantized onto the actuator grid.

use serde::{Deserialize, Serialize};

use crate::plant::{ActuatorCommand, ActuatorLevel, BoilerState, Setpoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub out_lo: f64,
    pub out_hi: f64,
    /// Anti-windup bound on the integral accumulator (error·seconds).
    pub integral_clamp: f64,
    /// Constant added to the output before clamping.
    #[serde(default)]
    pub bias: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a non-negative finite number"));
            }
        }
        if !(self.out_lo < self.out_hi) {
            return Err("out_lo must be below out_hi".into());
        }
        if !(self.integral_clamp > 0.0) {
            return Err("integral_clamp must be positive".into());
        }
        if !self.bias.is_finite() {
            return Err("bias must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub initialized: bool,
}

/// One controller update. The derivative term is zero on the first call and
/// the integral is clamped to `±integral_clamp`.
pub fn pid_step(
    gains: &PidGains,
    state: &PidState,
    setpoint: f64,
    measurement: f64,
    dt_s: f64,
) -> (f64, PidState) {
    debug_assert!(dt_s > 0.0);
    let error = setpoint - measurement;
    let integral =
        (state.integral + error * dt_s).clamp(-gains.integral_clamp, gains.integral_clamp);
    let derivative = if state.initialized {
        (error - state.prev_error) / dt_s
    } else {
        0.0
    };
    let raw = gains.bias + gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let output = raw.clamp(gains.out_lo, gains.out_hi);
    (
        output,
        PidState {
            integral,
            prev_error: error,
            initialized: true,
        },
    )
}

pub fn pid_to_command(pump_output: f64, valve_output: f64) -> ActuatorCommand {
    ActuatorCommand {
        pump: ActuatorLevel::quantize(pump_output),
        valve: ActuatorLevel::quantize(valve_output),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidConfig {
    pub level: PidGains,
    pub pressure: PidGains,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            level: PidGains {
                kp: 40.0,
                ki: 0.005,
                kd: 0.0,
                out_lo: 0.0,
                out_hi: 1.0,
                integral_clamp: 10.0,
                bias: 0.5,
            },
            pressure: PidGains {
                kp: 0.004,
                ki: 0.00002,
                kd: 0.0,
                out_lo: 0.0,
                out_hi: 1.0,
                integral_clamp: 5000.0,
                bias: 0.5,
            },
        }
    }
}

/// Level and pressure loops bundled for the boiler.
#[derive(Debug, Clone)]
pub struct BoilerPid {
    cfg: PidConfig,
    setpoint: Setpoint,
    level: PidState,
    pressure: PidState,
}

impl BoilerPid {
    pub fn new(cfg: PidConfig, setpoint: Setpoint) -> Self {
        Self {
            cfg,
            setpoint,
            level: PidState::default(),
            pressure: PidState::default(),
        }
    }

    pub fn reset(&mut self) {
        self.level = PidState::default();
        self.pressure = PidState::default();
    }

    pub fn set_level_setpoint(&mut self, level: f64) {
        self.setpoint.water_level = level;
    }

    pub fn decide(&mut self, state: &BoilerState, dt_s: f64) -> ActuatorCommand {
        let (pump, level) = pid_step(
            &self.cfg.level,
            &self.level,
            self.setpoint.water_level,
            state.water_level,
            dt_s,
        );
        // Reverse acting: feed (measurement, setpoint) so excess pressure opens the valve.
        let (valve, pressure) = pid_step(
            &self.cfg.pressure,
            &self.pressure,
            state.pressure,
            self.setpoint.pressure,
            dt_s,
        );
        self.level = level;
        self.pressure = pressure;
        pid_to_command(pump, valve)
    }
}
