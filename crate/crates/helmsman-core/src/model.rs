//! Quantity types and validated system configuration.
//!
//! Everything downstream works in SI units: watts, watts per second, seconds,
//! volts. Battery charge is carried in ampere-hours because the fade law and
//! the charge-balance constraint are stated that way; the conversion constant
//! is 3600 J per (Ah·V).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds per hour; converts Ah·V (watt-hours) into joules.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Role a dispatchable device plays on the bus. Generators may not absorb
/// power, so their lower limit must be non-negative; storage may swing both
/// ways.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    Generator,
    Storage,
}

/// Power envelope of one dispatchable device.
///
/// All fields are SI: `rated_power`, `lower_limit`, `upper_limit` in watts,
/// `ramp_rate` in watts per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceRating {
    pub rated_power: f64,
    pub ramp_rate: f64,
    pub lower_limit: f64,
    pub upper_limit: f64,
}

impl DeviceRating {
    /// Clamp a power command into the device's static box.
    pub fn clamp(&self, power: f64) -> f64 {
        power.clamp(self.lower_limit, self.upper_limit)
    }

    /// Largest magnitude the device can source or sink.
    pub fn peak_magnitude(&self) -> f64 {
        self.lower_limit.abs().max(self.upper_limit.abs())
    }

    fn check(&self, kind: DeviceKind, device: &str, out: &mut Vec<ConfigViolation>) {
        let mut bad = |detail: String| {
            out.push(ConfigViolation::InvalidRating {
                device: device.to_string(),
                detail,
            })
        };
        if !(self.rated_power > 0.0) {
            bad(format!("rated_power must be positive, got {}", self.rated_power));
        }
        if !(self.ramp_rate > 0.0) {
            bad(format!("ramp_rate must be positive, got {}", self.ramp_rate));
        }
        if !(self.lower_limit <= self.upper_limit) {
            bad(format!(
                "lower_limit {} exceeds upper_limit {}",
                self.lower_limit, self.upper_limit
            ));
        }
        if !(self.upper_limit <= self.rated_power) {
            bad(format!(
                "upper_limit {} exceeds rated_power {}",
                self.upper_limit, self.rated_power
            ));
        }
        if kind == DeviceKind::Generator && !(self.lower_limit >= 0.0) {
            bad(format!(
                "generator lower_limit must be non-negative, got {}",
                self.lower_limit
            ));
        }
        for (name, v) in [
            ("rated_power", self.rated_power),
            ("ramp_rate", self.ramp_rate),
            ("lower_limit", self.lower_limit),
            ("upper_limit", self.upper_limit),
        ] {
            if !v.is_finite() {
                bad(format!("{name} must be finite"));
            }
        }
    }
}

/// Battery pack electrical description. `capacity_total` and
/// `initial_charge` in ampere-hours, `bus_voltage` in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub capacity_total: f64,
    pub initial_charge: f64,
    pub bus_voltage: f64,
}

impl BatterySpec {
    /// State of charge implied by the initial charge, in [0, 1].
    pub fn initial_soc(&self) -> f64 {
        self.initial_charge / self.capacity_total
    }

    /// Joules stored per unit of state of charge: 3600 · Q_T · v_b.
    pub fn charge_scale(&self) -> f64 {
        SECONDS_PER_HOUR * self.capacity_total * self.bus_voltage
    }

    fn check(&self, out: &mut Vec<ConfigViolation>) {
        let mut bad = |detail: String| out.push(ConfigViolation::InvalidBattery { detail });
        if !(self.capacity_total > 0.0) {
            bad(format!(
                "capacity_total must be positive, got {}",
                self.capacity_total
            ));
        }
        if !(self.initial_charge > 0.0 && self.initial_charge <= self.capacity_total) {
            bad(format!(
                "initial_charge must lie in (0, capacity_total]; got {} of {}",
                self.initial_charge, self.capacity_total
            ));
        }
        if !(self.bus_voltage > 0.0) {
            bad(format!("bus_voltage must be positive, got {}", self.bus_voltage));
        }
    }
}

/// Controller timing, horizon, and objective knobs.
///
/// * `horizon` — number of prediction steps per solve (≥ 2).
/// * `step_time` — prediction step length in seconds.
/// * `cost_weight` — weight on device operating cost against tracking error.
/// * `target_soc` — long-run state-of-charge set point in [0, 1].
/// * `plant_dt` — plant integration step, seconds; must tile `ems_period`.
/// * `ems_period` — wall time between controller solves, seconds.
/// * `accel_factor` — multiplies degradation accumulation only, never plant
///   dynamics, so that component wear becomes visible in short runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmsConfig {
    pub horizon: usize,
    pub step_time: f64,
    pub cost_weight: f64,
    pub target_soc: f64,
    pub plant_dt: f64,
    pub ems_period: f64,
    pub accel_factor: f64,
}

impl Default for EmsConfig {
    fn default() -> Self {
        EmsConfig {
            horizon: 10,
            step_time: 1e-3,
            cost_weight: 0.0,
            target_soc: 0.77,
            plant_dt: 1e-4,
            ems_period: 1e-3,
            accel_factor: 1e6,
        }
    }
}

impl EmsConfig {
    /// Number of plant sub-steps per controller period. Valid only after
    /// [`validate_config`] has accepted the configuration.
    pub fn substeps(&self) -> usize {
        (self.ems_period / self.plant_dt).round() as usize
    }

    fn check(&self, out: &mut Vec<ConfigViolation>) {
        if self.horizon < 2 {
            out.push(ConfigViolation::InvalidHorizon {
                detail: format!("horizon must be at least 2, got {}", self.horizon),
            });
        }
        if !(self.step_time > 0.0) {
            out.push(ConfigViolation::InvalidTiming {
                detail: format!("step_time must be positive, got {}", self.step_time),
            });
        }
        if !(0.0..=1.0).contains(&self.target_soc) {
            out.push(ConfigViolation::InvalidSoc {
                detail: format!("target_soc must lie in [0, 1], got {}", self.target_soc),
            });
        }
        if !(self.cost_weight >= 0.0) {
            out.push(ConfigViolation::InvalidTiming {
                detail: format!("cost_weight must be non-negative, got {}", self.cost_weight),
            });
        }
        if !(self.plant_dt > 0.0 && self.ems_period > 0.0) {
            out.push(ConfigViolation::InvalidTiming {
                detail: format!(
                    "plant_dt {} and ems_period {} must both be positive",
                    self.plant_dt, self.ems_period
                ),
            });
        } else {
            if self.plant_dt > self.ems_period {
                out.push(ConfigViolation::InvalidTiming {
                    detail: format!(
                        "plant_dt {} must not exceed ems_period {}",
                        self.plant_dt, self.ems_period
                    ),
                });
            }
            let ratio = self.ems_period / self.plant_dt;
            if (ratio - ratio.round()).abs() > 1e-6 {
                out.push(ConfigViolation::InvalidTiming {
                    detail: format!(
                        "ems_period must be an integer multiple of plant_dt, ratio {ratio}"
                    ),
                });
            }
        }
        if !(self.accel_factor > 0.0) {
            out.push(ConfigViolation::InvalidTiming {
                detail: format!("accel_factor must be positive, got {}", self.accel_factor),
            });
        }
    }
}

/// A per-step series over the prediction horizon (forecast watts, demand
/// watts, ...). Values are finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonProfile(Vec<f64>);

impl HorizonProfile {
    /// Wrap a series, rejecting NaN/inf entries.
    pub fn new(values: Vec<f64>) -> Result<Self, ConfigViolation> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ConfigViolation::InvalidTiming {
                detail: format!("horizon profile contains non-finite value {bad}"),
            });
        }
        Ok(HorizonProfile(values))
    }

    /// Constant profile of `len` copies of `value`.
    pub fn constant(value: f64, len: usize) -> Self {
        HorizonProfile(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for HorizonProfile {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One named violation of a configuration invariant.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigViolation {
    #[error("invalid rating for {device}: {detail}")]
    InvalidRating { device: String, detail: String },
    #[error("invalid horizon: {detail}")]
    InvalidHorizon { detail: String },
    #[error("invalid state of charge: {detail}")]
    InvalidSoc { detail: String },
    #[error("invalid battery spec: {detail}")]
    InvalidBattery { detail: String },
    #[error("invalid timing/weight: {detail}")]
    InvalidTiming { detail: String },
}

/// All violations found in one validation pass.
#[derive(Debug, Clone, Error)]
#[error("configuration rejected: {}", self.describe())]
pub struct ConfigErrors(pub Vec<ConfigViolation>);

impl ConfigErrors {
    fn describe(&self) -> String {
        self.0
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// A configuration that passed every invariant check. Downstream
/// constructors (QP assembly, plant, closed loop) accept this type and are
/// total on it: no further validation failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedSystem {
    pub ems: EmsConfig,
    pub generator: DeviceRating,
    pub storage: DeviceRating,
    pub battery: BatterySpec,
}

/// Check every configuration invariant and either return the validated
/// bundle or the full list of violations (never just the first).
pub fn validate_config(
    ems: EmsConfig,
    generator: DeviceRating,
    storage: DeviceRating,
    battery: BatterySpec,
) -> Result<ValidatedSystem, ConfigErrors> {
    let mut violations = Vec::new();
    generator.check(DeviceKind::Generator, "generator", &mut violations);
    storage.check(DeviceKind::Storage, "storage", &mut violations);
    battery.check(&mut violations);
    ems.check(&mut violations);
    if battery.capacity_total > 0.0 {
        let soc0 = battery.initial_soc();
        if !(0.0..=1.0).contains(&soc0) {
            violations.push(ConfigViolation::InvalidSoc {
                detail: format!("initial state of charge {soc0} outside [0, 1]"),
            });
        }
    }
    if violations.is_empty() {
        Ok(ValidatedSystem {
            ems,
            generator,
            storage,
            battery,
        })
    } else {
        Err(ConfigErrors(violations))
    }
}

/// Shipboard reference ratings used throughout the test suites and as CLI
/// defaults: a 29 MW generation module (2.9 MW/s ramp, 0.29–27.5 MW window)
/// and a 30 MW storage converter (10 MW/s ramp, ±10.64 MW window).
pub mod reference {
    use super::*;

    pub fn generator() -> DeviceRating {
        DeviceRating {
            rated_power: 29.0e6,
            ramp_rate: 2.9e6,
            lower_limit: 0.29e6,
            upper_limit: 27.5e6,
        }
    }

    pub fn storage() -> DeviceRating {
        DeviceRating {
            rated_power: 30.0e6,
            ramp_rate: 10.0e6,
            lower_limit: -10.64e6,
            upper_limit: 10.64e6,
        }
    }

    pub fn load_rating() -> DeviceRating {
        DeviceRating {
            rated_power: 30.0e6,
            ramp_rate: 10.0e6,
            lower_limit: 0.0,
            upper_limit: 30.0e6,
        }
    }

    pub fn battery() -> BatterySpec {
        BatterySpec {
            capacity_total: 100.0,
            initial_charge: 80.0,
            bus_voltage: 12.0e3,
        }
    }
}
