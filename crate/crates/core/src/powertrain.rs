//! Quasi-static power-split HEV environment.
//!
//! The state is `(t, SOC, reference speed, cumulative fuel)`. Each step the
//! controller picks a normalized engine power; the battery covers the rest of
//! the wheel demand within the motor limit. The reward is the negative fuel
//! mass burned during the step and the cost is the distance of the new SOC
//! from a time-varying corridor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drivecycle::DriveCycle;

pub const GRAVITY: f64 = 9.81;

/// Speed used to normalize the velocity observation into `[0, 1]`.
pub const VELOCITY_SCALE_MPS: f64 = 34.0;

#[derive(Debug, Error, PartialEq)]
pub enum PowertrainError {
    #[error("step index {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("engine power {power} W outside [0, {max}] W")]
    PowerOutOfBounds { power: f64, max: f64 },
    #[error("episode already finished at t = {0}")]
    StepAfterDone(usize),
    #[error("initial SOC {0} outside [0, 1]")]
    InvalidSoc(f64),
    #[error("action {0} outside [0, 1]")]
    InvalidAction(f64),
    #[error("invalid vehicle parameter `{0}`")]
    InvalidParams(&'static str),
    #[error("invalid SOC envelope: {0}")]
    InvalidEnvelope(String),
    #[error("envelope horizon {envelope} does not match cycle horizon {cycle}")]
    HorizonMismatch { envelope: usize, cycle: usize },
}

/// Vehicle, battery and engine constants. Defaults are Prius-like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub drag_coeff: f64,
    pub frontal_area_m2: f64,
    pub rolling_resist: f64,
    pub air_density_kgpm3: f64,
    pub driveline_eff: f64,
    pub battery_capacity_ah: f64,
    pub battery_voltage_v: f64,
    pub engine_power_max_w: f64,
    pub engine_idle_fuel_gps: f64,
    pub engine_eff: f64,
    pub fuel_lhv_jpg: f64,
    pub motor_power_max_w: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass_kg: 1500.0,
            drag_coeff: 0.26,
            frontal_area_m2: 2.0,
            rolling_resist: 0.01,
            air_density_kgpm3: 1.2,
            driveline_eff: 0.9,
            battery_capacity_ah: 6.5,
            battery_voltage_v: 202.0,
            engine_power_max_w: 56_000.0,
            engine_idle_fuel_gps: 0.15,
            engine_eff: 0.36,
            fuel_lhv_jpg: 43_000.0,
            motor_power_max_w: 50_000.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), PowertrainError> {
        let positive = [
            (self.mass_kg, "mass_kg"),
            (self.drag_coeff, "drag_coeff"),
            (self.frontal_area_m2, "frontal_area_m2"),
            (self.rolling_resist, "rolling_resist"),
            (self.air_density_kgpm3, "air_density_kgpm3"),
            (self.battery_capacity_ah, "battery_capacity_ah"),
            (self.battery_voltage_v, "battery_voltage_v"),
            (self.engine_power_max_w, "engine_power_max_w"),
            (self.engine_idle_fuel_gps, "engine_idle_fuel_gps"),
            (self.fuel_lhv_jpg, "fuel_lhv_jpg"),
            (self.motor_power_max_w, "motor_power_max_w"),
        ];
        for (value, name) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PowertrainError::InvalidParams(name));
            }
        }
        for (value, name) in [
            (self.driveline_eff, "driveline_eff"),
            (self.engine_eff, "engine_eff"),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(PowertrainError::InvalidParams(name));
            }
        }
        Ok(())
    }

    /// Battery energy content in joules.
    pub fn battery_energy_j(&self) -> f64 {
        self.battery_capacity_ah * 3600.0 * self.battery_voltage_v
    }
}

/// Traction power demand in watts at speed `v` (m/s) and acceleration `a`
/// (m/s²). Negative while braking.
pub fn demand_power(params: &VehicleParams, v: f64, a: f64) -> f64 {
    let inertial = params.mass_kg * a * v;
    let aero = 0.5 * params.air_density_kgpm3 * params.drag_coeff * params.frontal_area_m2 * v.powi(3);
    let rolling = params.mass_kg * GRAVITY * params.rolling_resist * v;
    (inertial + aero + rolling) / params.driveline_eff
}

/// Willans-line fuel rate in g/s. The engine is off (no idle fuel) only at
/// exactly zero power.
pub fn fuel_rate(params: &VehicleParams, engine_power: f64) -> Result<f64, PowertrainError> {
    if !(0.0..=params.engine_power_max_w).contains(&engine_power) {
        return Err(PowertrainError::PowerOutOfBounds {
            power: engine_power,
            max: params.engine_power_max_w,
        });
    }
    if engine_power == 0.0 {
        return Ok(0.0);
    }
    Ok(params.engine_idle_fuel_gps + engine_power / (params.engine_eff * params.fuel_lhv_jpg))
}

/// Piecewise-linear SOC corridor: both limits start and end at the balance
/// point `b`, opening to `[l, h]` between steps `bl` and `br`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocEnvelope {
    pub h: f64,
    pub l: f64,
    pub b: f64,
    pub bl: usize,
    pub br: usize,
    pub ts: usize,
}

impl SocEnvelope {
    pub fn new(h: f64, l: f64, b: f64, bl: usize, br: usize, ts: usize) -> Result<Self, PowertrainError> {
        let env = Self { h, l, b, bl, br, ts };
        env.validate()?;
        Ok(env)
    }

    /// Default corridor `B = 0.6`, `[0.5, 0.7]`, ramps over the first and last
    /// tenth of the horizon.
    pub fn for_horizon(ts: usize) -> Result<Self, PowertrainError> {
        Self::with_levels(0.7, 0.5, 0.6, ts)
    }

    pub fn with_levels(h: f64, l: f64, b: f64, ts: usize) -> Result<Self, PowertrainError> {
        let bl = (ts as f64 * 0.1).ceil() as usize;
        let br = (ts as f64 * 0.9).floor() as usize;
        Self::new(h, l, b, bl, br, ts)
    }

    pub fn validate(&self) -> Result<(), PowertrainError> {
        if !(0.0 < self.l && self.l < self.b && self.b < self.h && self.h < 1.0) {
            return Err(PowertrainError::InvalidEnvelope(format!(
                "need 0 < L < B < H < 1, got L={} B={} H={}",
                self.l, self.b, self.h
            )));
        }
        if !(0 < self.bl && self.bl < self.br && self.br < self.ts) {
            return Err(PowertrainError::InvalidEnvelope(format!(
                "need 0 < bl < br < Ts, got bl={} br={} Ts={}",
                self.bl, self.br, self.ts
            )));
        }
        Ok(())
    }

    fn limit(&self, level: f64, t: usize) -> Result<f64, PowertrainError> {
        if t > self.ts {
            return Err(PowertrainError::TimeOutOfRange { t, horizon: self.ts });
        }
        let t_f = t as f64;
        Ok(if t <= self.bl {
            (level - self.b) / self.bl as f64 * t_f + self.b
        } else if t > self.br {
            (level - self.b) / (self.br as f64 - self.ts as f64) * (t_f - self.ts as f64) + self.b
        } else {
            level
        })
    }

    pub fn upper_limit(&self, t: usize) -> Result<f64, PowertrainError> {
        self.limit(self.h, t)
    }

    pub fn lower_limit(&self, t: usize) -> Result<f64, PowertrainError> {
        self.limit(self.l, t)
    }

    /// Largest per-step change of either limit.
    pub fn max_slope(&self) -> f64 {
        let up = self.bl as f64;
        let down = (self.ts - self.br) as f64;
        [
            (self.h - self.b) / up,
            (self.b - self.l) / up,
            (self.h - self.b) / down,
            (self.b - self.l) / down,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn soc_upper_limit(env: &SocEnvelope, t: usize) -> Result<f64, PowertrainError> {
    env.upper_limit(t)
}

pub fn soc_lower_limit(env: &SocEnvelope, t: usize) -> Result<f64, PowertrainError> {
    env.lower_limit(t)
}

/// Linear SOC-violation cost; zero inside the corridor.
pub fn step_cost(soc: f64, env: &SocEnvelope, t: usize) -> Result<f64, PowertrainError> {
    let upper = env.upper_limit(t)?;
    let lower = env.lower_limit(t)?;
    Ok((soc - upper).max(0.0) + (lower - soc).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub t: usize,
    pub soc: f64,
    pub velocity_mps: f64,
    pub fuel_g_cum: f64,
}

/// What the controller sees: SOC and normalized speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub soc_norm: f64,
    pub vel_norm: f64,
}

impl Observation {
    pub const DIM: usize = 2;

    pub fn of(state: &EnvState) -> Self {
        Self {
            soc_norm: state.soc,
            vel_norm: state.velocity_mps / VELOCITY_SCALE_MPS,
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.soc_norm, self.vel_norm]
    }
}

impl From<[f64; 2]> for Observation {
    fn from(v: [f64; 2]) -> Self {
        Self {
            soc_norm: v[0],
            vel_norm: v[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionTuple {
    pub s: Observation,
    pub a: f64,
    pub s_next: Observation,
    pub r: f64,
    pub c: f64,
    pub done: bool,
}

/// A cycle, a vehicle and an envelope: everything needed to step the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct HevEnv {
    pub cycle: DriveCycle,
    pub params: VehicleParams,
    pub envelope: SocEnvelope,
}

impl HevEnv {
    pub fn new(cycle: DriveCycle, params: VehicleParams, envelope: SocEnvelope) -> Result<Self, PowertrainError> {
        params.validate()?;
        envelope.validate()?;
        if envelope.ts != cycle.horizon() {
            return Err(PowertrainError::HorizonMismatch {
                envelope: envelope.ts,
                cycle: cycle.horizon(),
            });
        }
        Ok(Self {
            cycle,
            params,
            envelope,
        })
    }

    /// Default vehicle and default envelope sized to the cycle.
    pub fn with_defaults(cycle: DriveCycle) -> Result<Self, PowertrainError> {
        let envelope = SocEnvelope::for_horizon(cycle.horizon())?;
        Self::new(cycle, VehicleParams::default(), envelope)
    }

    pub fn horizon(&self) -> usize {
        self.cycle.horizon()
    }

    pub fn reset(&self, initial_soc: Option<f64>) -> Result<EnvState, PowertrainError> {
        reset(&self.cycle, &self.envelope, initial_soc)
    }

    pub fn step(&self, state: &EnvState, action: f64) -> Result<(EnvState, TransitionTuple), PowertrainError> {
        env_step(state, action, &self.cycle, &self.params, &self.envelope)
    }
}

pub fn reset(
    cycle: &DriveCycle,
    env: &SocEnvelope,
    initial_soc: Option<f64>,
) -> Result<EnvState, PowertrainError> {
    let soc = initial_soc.unwrap_or(env.b);
    if !(0.0..=1.0).contains(&soc) {
        return Err(PowertrainError::InvalidSoc(soc));
    }
    Ok(EnvState {
        t: 0,
        soc,
        velocity_mps: cycle.speed(0),
        fuel_g_cum: 0.0,
    })
}

/// One plant transition. Demand uses the mean speed and the finite-difference
/// acceleration between consecutive cycle samples.
pub fn env_step(
    state: &EnvState,
    action: f64,
    cycle: &DriveCycle,
    params: &VehicleParams,
    env: &SocEnvelope,
) -> Result<(EnvState, TransitionTuple), PowertrainError> {
    let horizon = cycle.horizon();
    if state.t >= horizon {
        return Err(PowertrainError::StepAfterDone(state.t));
    }
    if !(0.0..=1.0).contains(&action) {
        return Err(PowertrainError::InvalidAction(action));
    }
    let dt = cycle.timestep_s();
    let v0 = cycle.speed(state.t);
    let v1 = cycle.speed(state.t + 1);
    let demand = demand_power(params, 0.5 * (v0 + v1), (v1 - v0) / dt);

    let engine_power = action * params.engine_power_max_w;
    let battery_power = (demand - engine_power).clamp(-params.motor_power_max_w, params.motor_power_max_w);
    let soc = (state.soc - battery_power * dt / params.battery_energy_j()).clamp(0.0, 1.0);
    let fuel = fuel_rate(params, engine_power)? * dt;

    let t = state.t + 1;
    let next = EnvState {
        t,
        soc,
        velocity_mps: v1,
        fuel_g_cum: state.fuel_g_cum + fuel,
    };
    let transition = TransitionTuple {
        s: Observation::of(state),
        a: action,
        s_next: Observation::of(&next),
        r: -fuel,
        c: step_cost(soc, env, t)?,
        done: t == horizon,
    };
    Ok((next, transition))
}
