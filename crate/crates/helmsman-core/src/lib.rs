//! Energy management for a shipboard DC microgrid.
//!
//! The library dispatches a gas-turbine generation module and a battery
//! storage module against a pulsed propulsion load. Every control period it
//! forecasts the load over a short horizon, condenses the tracking problem
//! into a strictly convex quadratic program, solves it (either centrally or
//! by consensus splitting across device nodes), applies the first-step
//! commands to a rate-limited plant model, and accounts for the battery and
//! generator wear that the dispatch causes.
//!
//! Modules mirror that pipeline:
//!
//! * [`model`] — quantity types, device ratings, validated configuration
//! * [`forecast`] — load profiles and multiplicative forecast noise
//! * [`qp`] — condensed QP assembly, the active-set solver, and a
//!   brute-force reference solver used by the test suites
//! * [`admm`] — consensus splitting of the tracking problem across device
//!   nodes with a demand aggregator
//! * [`plant`] — rate- and box-limited device dynamics plus state of charge
//! * [`degradation`] — battery capacity fade and generator aging laws
//! * [`closed_loop`] — the receding-horizon simulation loop
//! * [`sweep`] — seeded Monte-Carlo grids over noise level and SoC target
//! * [`report`] — deterministic CSV/JSON serialization of run artifacts

pub mod admm;
pub mod closed_loop;
pub mod config;
pub mod degradation;
pub mod forecast;
pub mod model;
pub mod plant;
pub mod qp;
pub mod report;
pub mod sweep;

pub use closed_loop::{run_closed_loop, RunResult, Scenario, SolverKind};

pub use model::{validate_config, BatterySpec, DeviceRating, EmsConfig, HorizonProfile};
