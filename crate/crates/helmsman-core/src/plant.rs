//! Continuous plant: rate- and box-limited first-order actuator dynamics for
//! the generator and storage branches, charge bookkeeping for the battery,
//! and wear accumulation, integrated with an explicit fixed-step scheme.
//!
//! The controller sees this plant only through measurements; the plant in
//! turn applies whatever commands it is given, subject to its own physics.

use crate::degradation::{generator_aging, GenAgingParams};
use crate::model::{BatterySpec, DeviceRating, SECONDS_PER_HOUR};

/// Actuator time constants, acceleration, and aging law for one plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Generator first-order lag time constant, seconds. Zero or negative
    /// means the branch tracks its command within one integration step
    /// (still subject to the ramp limit).
    pub tau_g: f64,
    /// Storage converter lag time constant, seconds.
    pub tau_b: f64,
    /// Wear acceleration factor; multiplies wear accumulation only, never
    /// the electrical dynamics.
    pub accel: f64,
    /// Generator life-consumption law.
    pub aging: GenAgingParams,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            tau_g: 0.1,
            tau_b: 0.01,
            accel: 1.0,
            aging: GenAgingParams::default(),
        }
    }
}

/// Full plant state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Generator electrical output, watts.
    pub p_g: f64,
    /// Storage discharge power, watts (negative while charging).
    pub p_b: f64,
    /// Battery state of charge in [0, 1].
    pub soc: f64,
    /// Accumulated ampere-hour throughput, scaled by the acceleration factor.
    pub ah_throughput: f64,
    /// Accumulated generator life fraction consumed.
    pub gen_life_consumed: f64,
    /// Simulation time, seconds.
    pub t: f64,
    /// Number of integration steps on which the state of charge had to be
    /// clamped at 0 or 1. Never silent: each clamp is also logged.
    pub soc_clamp_events: u64,
}

impl PlantState {
    /// State at the moment the system is brought online: generator idling at
    /// the bottom of its operating box, converter at zero, battery at its
    /// initial charge.
    pub fn startup(generator: &DeviceRating, batt: &BatterySpec) -> Self {
        PlantState {
            p_g: generator.clamp(0.0),
            p_b: 0.0,
            soc: batt.initial_soc(),
            ah_throughput: 0.0,
            gen_life_consumed: 0.0,
            t: 0.0,
            soc_clamp_events: 0,
        }
    }

    /// Mean C-rate realized so far: accelerated throughput is converted back
    /// to physical ampere-hours, averaged over elapsed time, and normalized
    /// by the cell capacity. Zero before any time has elapsed.
    pub fn mean_c_rate(&self, batt: &BatterySpec, accel: f64) -> f64 {
        if self.t <= 0.0 {
            return 0.0;
        }
        let physical_ah = self.ah_throughput / accel;
        physical_ah * SECONDS_PER_HOUR / (self.t * batt.capacity_total)
    }
}

/// One branch update: drive `power` toward `cmd` through a first-order lag
/// with time constant `tau`, never faster than the ramp limit, and keep the
/// result inside the operating box.
fn branch_step(power: f64, cmd: f64, tau: f64, dt: f64, rating: &DeviceRating) -> f64 {
    let desired_rate = if tau > 0.0 {
        (cmd - power) / tau
    } else {
        (cmd - power) / dt
    };
    let rate = desired_rate.clamp(-rating.ramp_rate, rating.ramp_rate);
    rating.clamp(power + rate * dt)
}

/// Advance the plant one integration step of length `dt` under generator
/// command `cmd_g`, storage command `cmd_b`, and bus load `load` (all watts).
///
/// Returns the new state and the bus power mismatch `p_g + p_b − load` at
/// the end of the step. Charge and throughput integrals use the trapezoidal
/// rule over the step so that the charge ledger matches the power trajectory
/// exactly.
pub fn plant_step(
    state: &PlantState,
    cmd_g: f64,
    cmd_b: f64,
    load: f64,
    dt: f64,
    generator: &DeviceRating,
    storage: &DeviceRating,
    batt: &BatterySpec,
    params: &PlantParams,
) -> (PlantState, f64) {
    assert!(dt > 0.0, "integration step must be positive, got {dt}");
    let p_g = branch_step(state.p_g, cmd_g, params.tau_g, dt, generator);
    let p_b = branch_step(state.p_b, cmd_b, params.tau_b, dt, storage);

    // Discharge power drains charge: d(soc)/dt = -p_b / (3600 · Q_T · v_b).
    let drained = 0.5 * (state.p_b + p_b) * dt / batt.charge_scale();
    let mut soc = state.soc - drained;
    let mut soc_clamp_events = state.soc_clamp_events;
    if soc < 0.0 || soc > 1.0 {
        let clamped = soc.clamp(0.0, 1.0);
        log::warn!(
            "state of charge clamped from {soc:.6} to {clamped} at t = {:.4} s",
            state.t + dt
        );
        soc = clamped;
        soc_clamp_events += 1;
    }

    let amp_hours =
        0.5 * (state.p_b.abs() + p_b.abs()) / batt.bus_voltage * dt / SECONDS_PER_HOUR;
    let ah_throughput = state.ah_throughput + amp_hours * params.accel;

    let sop = (p_g / generator.rated_power).clamp(0.0, 1.0);
    let gen_life_consumed =
        state.gen_life_consumed + generator_aging(sop, dt, &params.aging, params.accel);

    let next = PlantState {
        p_g,
        p_b,
        soc,
        ah_throughput,
        gen_life_consumed,
        t: state.t + dt,
        soc_clamp_events,
    };
    let mismatch = p_g + p_b - load;
    (next, mismatch)
}
