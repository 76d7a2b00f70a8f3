//! Receding-horizon orchestration: measure the plant, build a noisy forecast
//! window, solve for the horizon (centralized or consensus), dispatch the
//! first-step commands, advance the plant, accumulate wear — then repeat.
//!
//! The controller sees the forecast; the plant consumes the true load. On a
//! failed solve the previous commands are held for one period and the
//! failure is counted — the loop never stops mid-run.

use std::time::Instant;

use crate::admm::{distributed_from_instance, AdmmDriver};
use crate::degradation::{battery_capacity_loss, BatteryFadeParams};
use crate::forecast::{LoadSource, NoiseSpec, NoiseStream};
use crate::model::{
    validate_config, BatterySpec, ConfigErrors, DeviceKind, DeviceRating, EmsConfig,
    HorizonProfile,
};
use crate::plant::{plant_step, PlantParams, PlantState};
use crate::qp::{
    approach_target, build_qp, ActiveSetSolver, MpcDevice, MpcInstance, QuadCost,
    SolveStatus, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which optimizer runs inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// One condensed QP over all devices per period.
    Centralized,
    /// Consensus iteration between per-device nodes per period.
    Admm,
}

/// Consensus-loop knobs used when [`SolverKind::Admm`] is selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmSettings {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 1.0,
            tol: 1e-6,
            max_iter: 5000,
        }
    }
}

/// Everything one closed-loop run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub ems: EmsConfig,
    pub generator: DeviceRating,
    pub storage: DeviceRating,
    pub battery: BatterySpec,
    /// Operating cost attached to the generator, weighted by `ems.cost_weight`.
    pub gen_cost: QuadCost,
    /// Operating cost attached to the storage branch.
    pub storage_cost: QuadCost,
    /// True bus load over time.
    pub load: LoadSource,
    /// Simulated run length, seconds.
    pub total_time: f64,
    pub noise: NoiseSpec,
    pub solver: SolverKind,
    pub admm: AdmmSettings,
    /// Actuator lags and aging law. The wear acceleration inside is
    /// overridden by `ems.accel_factor` for the run, so there is a single
    /// source of truth for acceleration.
    pub plant: PlantParams,
    pub fade: BatteryFadeParams,
    /// Override the initial branch powers `(p_g, p_b)`; `None` starts with
    /// the generator idling at the bottom of its box. An override outside
    /// the boxes models closing the breaker on a dead bus.
    pub initial_power: Option<(f64, f64)>,
}

impl Scenario {
    /// The reference single-generator/single-storage system: a 5 MW hotel
    /// baseline hit by repeated 20 MW pulses over a 10 s window, 10%
    /// forecast uncertainty, charge set point 0.77.
    pub fn reference(solver: SolverKind) -> Scenario {
        use crate::forecast::{LoadProfileSpec, Pulse};
        use crate::model::reference;
        let pulse = |start: f64| Pulse {
            start,
            duration: 0.5,
            height: 20e6,
        };
        Scenario {
            ems: EmsConfig::default(),
            generator: reference::generator(),
            storage: reference::storage(),
            battery: reference::battery(),
            gen_cost: QuadCost::ZERO,
            storage_cost: QuadCost::ZERO,
            load: LoadSource::Synthetic(LoadProfileSpec {
                baseline: 5e6,
                pulses: vec![pulse(1.0), pulse(3.0), pulse(5.5), pulse(7.5)],
                total_time: 10.0,
            }),
            total_time: 10.0,
            noise: NoiseSpec {
                percent: 10.0,
                seed: 42,
            },
            solver,
            admm: AdmmSettings::default(),
            plant: PlantParams::default(),
            fade: BatteryFadeParams::default(),
            initial_power: None,
        }
    }
}

/// How one controller period ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    /// Fresh commands dispatched from a converged solve.
    Optimal,
    /// Solver ran out of iterations; previous commands held.
    MaxIter,
    /// Problem reported infeasible; previous commands held.
    Infeasible,
    /// Consensus loop did not converge in its budget; commands held.
    Stalled,
    /// The instance could not even be assembled; commands held.
    Rejected,
}

impl StepOutcome {
    pub fn is_failure(self) -> bool {
        self != StepOutcome::Optimal
    }

    /// Fixed lower-case token used in trace files.
    pub fn token(self) -> &'static str {
        match self {
            StepOutcome::Optimal => "optimal",
            StepOutcome::MaxIter => "max_iter",
            StepOutcome::Infeasible => "infeasible",
            StepOutcome::Stalled => "stalled",
            StepOutcome::Rejected => "rejected",
        }
    }
}

/// One controller period as logged: the measurement that entered the solve,
/// the first-step forecast it saw, and how the solve went.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Solve instant, seconds.
    pub t: f64,
    /// Generator power measured at the solve instant, watts.
    pub p_g: f64,
    /// Storage power measured at the solve instant, watts.
    pub p_b: f64,
    /// True load at the solve instant, watts.
    pub load: f64,
    /// Noisy first-step forecast the optimizer saw, watts.
    pub forecast: f64,
    /// State of charge entering the solve.
    pub soc: f64,
    /// Supply-demand mismatch `p_g + p_b − load` at the solve instant, watts.
    pub mismatch: f64,
    pub outcome: StepOutcome,
    /// Wall-clock solve duration, seconds. Excluded from determinism
    /// comparisons — everything else in the record is seed-reproducible.
    pub solve_time: f64,
}

/// Output of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub steps: Vec<StepRecord>,
    /// Battery capacity loss at the end of the run, percent.
    pub capacity_loss: f64,
    /// Generator life consumed at the end of the run, percent.
    pub gen_life: f64,
    /// Mean realized C-rate (acceleration divided back out).
    pub mean_c_rate: f64,
    /// Exact count of ramp/box audit breaches, commands and plant alike.
    pub violations: u64,
    /// Periods that fell back to holding the previous commands.
    pub failures: u64,
    /// Integration steps on which the state of charge hit 0 or 1.
    pub soc_clamp_events: u64,
    pub final_state: PlantState,
}

/// Why a run could not start.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("total_time must be positive, got {0}")]
    BadTotalTime(f64),
}

/// Absolute watt slack granted to the audits: covers solver tolerance and
/// accumulated floating-point round-off at reference power scale.
fn audit_slack(rating: &DeviceRating) -> f64 {
    1e-6 * rating.peak_magnitude().max(1.0)
}

/// Audit one dispatched command against its device box and the per-step ramp
/// bound from the clamped measurement. Returns the number of breaches (0–2).
fn audit_command(cmd: f64, measured: f64, rating: &DeviceRating, step_time: f64) -> u64 {
    let slack = audit_slack(rating);
    let mut breaches = 0;
    if cmd < rating.lower_limit - slack || cmd > rating.upper_limit + slack {
        breaches += 1;
    }
    if (cmd - rating.clamp(measured)).abs() > rating.ramp_rate * step_time + slack {
        breaches += 1;
    }
    breaches
}

/// Audit one plant integration step. The ramp bound applies to motion that
/// starts inside the box; the initial snap from an out-of-box start (breaker
/// close) is physical and exempt.
fn audit_plant_step(prev: f64, now: f64, rating: &DeviceRating, dt: f64) -> u64 {
    let slack = audit_slack(rating);
    let mut breaches = 0;
    if now < rating.lower_limit - slack || now > rating.upper_limit + slack {
        breaches += 1;
    }
    let was_inside =
        prev >= rating.lower_limit - slack && prev <= rating.upper_limit + slack;
    if was_inside && (now - prev).abs() > rating.ramp_rate * dt + slack {
        breaches += 1;
    }
    breaches
}

/// Run the receding-horizon loop for `scenario.total_time` seconds and
/// return the full trace plus terminal wear figures.
pub fn run_closed_loop(scenario: &Scenario) -> Result<RunResult, RunError> {
    let system = validate_config(
        scenario.ems,
        scenario.generator,
        scenario.storage,
        scenario.battery,
    )?;
    if !(scenario.total_time > 0.0) {
        return Err(RunError::BadTotalTime(scenario.total_time));
    }
    let ems = system.ems;
    let generator = system.generator;
    let storage = system.storage;
    let battery = system.battery;
    let h = ems.horizon;
    let substeps = ems.substeps();
    let periods = (scenario.total_time / ems.ems_period).round().max(1.0) as usize;
    let params = PlantParams {
        accel: ems.accel_factor,
        ..scenario.plant
    };

    let mut state = match scenario.initial_power {
        Some((p_g, p_b)) => PlantState {
            p_g,
            p_b,
            soc: battery.initial_soc(),
            ah_throughput: 0.0,
            gen_life_consumed: 0.0,
            t: 0.0,
            soc_clamp_events: 0,
        },
        None => PlantState::startup(&generator, &battery),
    };
    let mut noise = NoiseStream::new(&scenario.noise);
    let mut solver = ActiveSetSolver::new();
    let mut driver = AdmmDriver::new();
    let mut cmd_g = generator.clamp(state.p_g);
    let mut cmd_b = storage.clamp(state.p_b);
    let mut steps = Vec::with_capacity(periods);
    let mut violations: u64 = 0;
    let mut failures: u64 = 0;

    for k in 0..periods {
        let t = k as f64 * ems.ems_period;

        // One uncertainty draw per solve, shared by the whole window.
        let factor = noise.factor();
        let window: Vec<f64> = (0..h)
            .map(|i| {
                (scenario.load.power_at(t + i as f64 * ems.step_time) * factor).max(0.0)
            })
            .collect();
        let forecast_now = window[0];
        let load_now = scenario.load.power_at(t);

        // Terminal charge set point for this horizon, reachable by
        // construction from the measured storage power.
        let q0 = state.soc;
        let q_h = approach_target(
            q0,
            ems.target_soc,
            &[(storage, state.p_b)],
            battery.charge_scale(),
            ems.step_time,
            h,
        );
        let instance = MpcInstance {
            devices: vec![
                MpcDevice {
                    kind: DeviceKind::Generator,
                    rating: generator,
                    cost: scenario.gen_cost,
                    measured: state.p_g,
                },
                MpcDevice {
                    kind: DeviceKind::Storage,
                    rating: storage,
                    cost: scenario.storage_cost,
                    measured: state.p_b,
                },
            ],
            forecast: HorizonProfile::new(window).expect("forecast window is finite"),
            horizon: h,
            step_time: ems.step_time,
            cost_weight: ems.cost_weight,
            charge_scale: battery.charge_scale(),
            soc: q0,
            soc_target: q_h,
        };

        let started = Instant::now();
        let (outcome, fresh) = match scenario.solver {
            SolverKind::Centralized => match build_qp(&instance) {
                Err(_) => (StepOutcome::Rejected, None),
                Ok(qp) => {
                    let tol = DEFAULT_TOL * (1.0 + qp.linear.amax());
                    let sol = solver.solve(&qp, tol, DEFAULT_MAX_ITER);
                    match sol.status {
                        SolveStatus::Optimal => {
                            (StepOutcome::Optimal, Some((sol.x[0], sol.x[h])))
                        }
                        SolveStatus::MaxIter => (StepOutcome::MaxIter, None),
                        SolveStatus::Infeasible => (StepOutcome::Infeasible, None),
                    }
                }
            },
            SolverKind::Admm => match distributed_from_instance(&instance) {
                Err(_) => (StepOutcome::Rejected, None),
                Ok(reduced) => {
                    match driver.run(
                        &reduced,
                        scenario.admm.rho,
                        scenario.admm.tol,
                        scenario.admm.max_iter,
                    ) {
                        Err(_) => (StepOutcome::Rejected, None),
                        Ok(out) if out.converged => (
                            StepOutcome::Optimal,
                            Some((out.profiles[0][0], out.profiles[1][0])),
                        ),
                        Ok(_) => (StepOutcome::Stalled, None),
                    }
                }
            },
        };
        let solve_time = started.elapsed().as_secs_f64();

        if let Some((g, b)) = fresh {
            cmd_g = g;
            cmd_b = b;
        } else {
            failures += 1;
        }
        violations += audit_command(cmd_g, state.p_g, &generator, ems.step_time);
        violations += audit_command(cmd_b, state.p_b, &storage, ems.step_time);

        steps.push(StepRecord {
            t,
            p_g: state.p_g,
            p_b: state.p_b,
            load: load_now,
            forecast: forecast_now,
            soc: q0,
            mismatch: state.p_g + state.p_b - load_now,
            outcome,
            solve_time,
        });

        // Zero-order-hold the commands across the period; the plant runs on
        // the true load.
        for s in 0..substeps {
            let t_plant = t + s as f64 * ems.plant_dt;
            let true_load = scenario.load.power_at(t_plant);
            let prev = state;
            let (next, _) = plant_step(
                &state,
                cmd_g,
                cmd_b,
                true_load,
                ems.plant_dt,
                &generator,
                &storage,
                &battery,
                &params,
            );
            violations += audit_plant_step(prev.p_g, next.p_g, &generator, ems.plant_dt);
            violations += audit_plant_step(prev.p_b, next.p_b, &storage, ems.plant_dt);
            state = next;
        }
    }

    let mean_c_rate = state.mean_c_rate(&battery, params.accel);
    let capacity_loss = battery_capacity_loss(state.ah_throughput, mean_c_rate, &scenario.fade);
    Ok(RunResult {
        steps,
        capacity_loss,
        gen_life: state.gen_life_consumed * 100.0,
        mean_c_rate,
        violations,
        failures,
        soc_clamp_events: state.soc_clamp_events,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::LoadProfileSpec;

    /// Bench-scale battery: same 0.8 initial state of charge, but three
    /// hundredths of charge are worth megajoules rather than gigajoules, so
    /// set-point moves complete within seconds.
    fn bench_battery() -> BatterySpec {
        BatterySpec {
            capacity_total: 10.0,
            initial_charge: 8.0,
            bus_voltage: 1200.0,
        }
    }

    fn quiet_scenario(solver: SolverKind) -> Scenario {
        // Zero noise, constant 5 MW hotel load, bench-scale battery, and
        // actuators that settle within one controller period — the plant
        // then realizes exactly the per-period ramp the optimizer plans
        // with, so convergence-rate assertions are meaningful.
        let mut s = Scenario::reference(solver);
        s.noise = NoiseSpec {
            percent: 0.0,
            seed: 1,
        };
        s.load = LoadSource::Synthetic(LoadProfileSpec {
            baseline: 5e6,
            pulses: vec![],
            total_time: 10.0,
        });
        s.battery = bench_battery();
        s.plant.tau_g = 0.0;
        s.plant.tau_b = 0.0;
        s
    }

    #[test]
    fn steady_load_is_tracked_after_the_transient() {
        // Generous limits and a battery already at its set point: the only
        // transient is the generator picking up the hotel load.
        let mut s = quiet_scenario(SolverKind::Centralized);
        s.generator = DeviceRating {
            rated_power: 40e6,
            ramp_rate: 50e6,
            lower_limit: 0.0,
            upper_limit: 38e6,
        };
        s.storage = DeviceRating {
            rated_power: 30e6,
            ramp_rate: 50e6,
            lower_limit: -25e6,
            upper_limit: 25e6,
        };
        s.battery.initial_charge = 7.7; // start at the 0.77 set point
        s.total_time = 2.0;
        let out = run_closed_loop(&s).unwrap();
        assert_eq!(out.violations, 0);
        assert_eq!(out.failures, 0);
        let tracked = out
            .steps
            .iter()
            .filter(|r| r.mismatch.abs() <= 0.01 * r.load)
            .count();
        assert!(
            tracked as f64 >= 0.95 * out.steps.len() as f64,
            "only {tracked}/{} periods within 1%",
            out.steps.len()
        );
    }

    #[test]
    fn soc_walks_monotonically_to_the_set_point() {
        let mut s = quiet_scenario(SolverKind::Centralized);
        s.total_time = 10.0;
        let out = run_closed_loop(&s).unwrap();
        let socs: Vec<f64> = out.steps.iter().map(|r| r.soc).collect();
        // 0.80 start, 0.77 set point: drains, never rises on the way down,
        // then holds the band
        let tol = 1e-9;
        let mut reached_at = None;
        for (i, pair) in socs.windows(2).enumerate() {
            if reached_at.is_none() && (pair[0] - 0.77).abs() < 5e-3 {
                reached_at = Some(i);
            }
            if reached_at.is_none() {
                assert!(
                    pair[1] <= pair[0] + tol,
                    "soc rose before reaching the set point: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
        let reached_at = reached_at.unwrap_or_else(|| {
            panic!("soc never approached 0.77: final {}", socs.last().unwrap())
        });
        for (i, soc) in socs.iter().enumerate().skip(reached_at) {
            assert!(
                (soc - 0.77).abs() < 5e-3,
                "soc left the band at step {i}: {soc}"
            );
        }
    }

    #[test]
    fn cold_start_converges_within_the_ramp_limited_time() {
        // Dead bus against a steady 12 MW demand: supply must close the gap
        // no slower than 1.25x the combined-ramp minimum time. The step is
        // sized so neither device hits its box before the gap is closed.
        let mut s = Scenario::reference(SolverKind::Centralized);
        s.noise = NoiseSpec {
            percent: 0.0,
            seed: 1,
        };
        s.load = LoadSource::Synthetic(LoadProfileSpec {
            baseline: 12e6,
            pulses: vec![],
            total_time: 10.0,
        });
        s.total_time = 2.0;
        s.initial_power = Some((0.0, 0.0));
        s.plant.tau_g = 0.0;
        s.plant.tau_b = 0.0;
        let out = run_closed_loop(&s).unwrap();
        let first = &out.steps[0];
        assert!(
            first.mismatch.abs() > 11e6,
            "run must begin infeasible, mismatch {}",
            first.mismatch
        );
        let ramp_limited = 12e6 / (s.generator.ramp_rate + s.storage.ramp_rate);
        let deadline = 1.25 * ramp_limited;
        let settled = out
            .steps
            .iter()
            .find(|r| r.mismatch.abs() <= 0.05 * r.load)
            .map(|r| r.t);
        match settled {
            Some(t) => assert!(
                t <= deadline,
                "gap closed at {t:.3} s, deadline {deadline:.3} s"
            ),
            None => panic!("mismatch never fell below 5%"),
        }
    }

    #[test]
    fn consensus_loop_matches_the_centralized_loop() {
        let mut central = quiet_scenario(SolverKind::Centralized);
        central.total_time = 0.25;
        let mut admm = central.clone();
        admm.solver = SolverKind::Admm;
        let a = run_closed_loop(&central).unwrap();
        let b = run_closed_loop(&admm).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        assert_eq!(b.failures, 0, "consensus must converge every period");
        for (x, y) in a.steps.iter().zip(&b.steps) {
            let scale = x.load.abs().max(1e6);
            assert!(
                (x.p_g - y.p_g).abs() / scale < 1e-3,
                "t={}: generator {} vs {}",
                x.t,
                x.p_g,
                y.p_g
            );
            assert!(
                (x.p_b - y.p_b).abs() / scale < 1e-3,
                "t={}: storage {} vs {}",
                x.t,
                x.p_b,
                y.p_b
            );
        }
    }

    #[test]
    fn replaying_a_seed_reproduces_the_run_exactly() {
        let mut s = Scenario::reference(SolverKind::Centralized);
        s.total_time = 0.5;
        let a = run_closed_loop(&s).unwrap();
        let b = run_closed_loop(&s).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            // bit-identical apart from wall-clock solve time
            assert_eq!(x.t, y.t);
            assert_eq!(x.p_g, y.p_g);
            assert_eq!(x.p_b, y.p_b);
            assert_eq!(x.load, y.load);
            assert_eq!(x.forecast, y.forecast);
            assert_eq!(x.soc, y.soc);
            assert_eq!(x.mismatch, y.mismatch);
            assert_eq!(x.outcome, y.outcome);
        }
        assert_eq!(a.capacity_loss, b.capacity_loss);
        assert_eq!(a.violations, b.violations);
    }

    #[test]
    fn noisy_pulsed_run_dispatches_clean_commands() {
        let mut s = Scenario::reference(SolverKind::Centralized);
        s.total_time = 1.5; // covers the first pulse
        let out = run_closed_loop(&s).unwrap();
        assert_eq!(out.violations, 0, "audited breaches in dispatch or plant");
        assert_eq!(out.failures, 0);
        assert!(out.capacity_loss > 0.0, "accelerated wear must be visible");
        assert!(out.gen_life > 0.0);
        // wear accounting is consistent with an actually-cycled battery
        assert!(out.mean_c_rate > 0.0);
        assert!(out.final_state.t > 1.49);
    }

    #[test]
    fn total_time_must_be_positive() {
        let mut s = quiet_scenario(SolverKind::Centralized);
        s.total_time = 0.0;
        assert!(matches!(
            run_closed_loop(&s),
            Err(RunError::BadTotalTime(_))
        ));
    }

    #[test]
    fn invalid_ratings_are_rejected_with_details() {
        let mut s = quiet_scenario(SolverKind::Centralized);
        s.generator.ramp_rate = -1.0;
        match run_closed_loop(&s) {
            Err(RunError::Config(errors)) => {
                assert!(errors.to_string().contains("ramp"));
            }
            other => panic!("expected a config rejection, got {other:?}"),
        }
    }
}
