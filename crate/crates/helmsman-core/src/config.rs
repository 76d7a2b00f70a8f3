//! TOML configuration schema: human-edited files in engineering units
//! (megawatts, kilovolts) that expand into a full [`Scenario`] and
//! [`SweepPlan`].
//!
//! Every section and key is optional; omissions fall back to the reference
//! single-generator/single-storage system, so an empty file describes the
//! stock 10-second pulsed-load run. Unknown keys are rejected with the key
//! name in the error, which catches typos early.

use crate::closed_loop::{AdmmSettings, Scenario, SolverKind};
use crate::degradation::{BatteryFadeParams, GenAgingParams};
use crate::forecast::{LoadProfileSpec, LoadSource, NoiseSpec, Pulse, SampledProfile};
use crate::model::{reference, BatterySpec, DeviceRating, EmsConfig};
use crate::plant::PlantParams;
use crate::qp::QuadCost;
use crate::sweep::{linspace, SweepPlan};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MEGA: f64 = 1e6;
const KILO: f64 = 1e3;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config key {key}: {reason}")]
    BadValue { key: &'static str, reason: String },
    #[error("load profile {path}: {reason}")]
    Profile { path: PathBuf, reason: String },
}

/// Top-level TOML document. All sections optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub pgm: GeneratorSection,
    pub pcm: StorageSection,
    pub load: LoadSection,
    pub noise: NoiseSection,
    pub ems: EmsSection,
    pub degradation: DegradationSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub total_time_s: f64,
    /// "centralized" or "admm".
    pub solver: String,
    pub admm_rho: f64,
    pub admm_tol: f64,
    pub admm_max_iter: usize,
    /// Optional initial branch powers; omitting both starts the generator
    /// idling at the bottom of its box with the storage at rest.
    pub initial_p_g_mw: Option<f64>,
    pub initial_p_b_mw: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        let admm = AdmmSettings::default();
        SystemSection {
            total_time_s: 10.0,
            solver: "centralized".to_string(),
            admm_rho: admm.rho,
            admm_tol: admm.tol,
            admm_max_iter: admm.max_iter,
            initial_p_g_mw: None,
            initial_p_b_mw: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub rated_mw: f64,
    pub ramp_mw_per_s: f64,
    pub lower_mw: f64,
    pub upper_mw: f64,
    /// Actuator first-order lag, seconds; 0 tracks commands at the ramp rate.
    pub tau_s: f64,
    pub cost_quadratic: f64,
    pub cost_linear: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let r = reference::generator();
        GeneratorSection {
            rated_mw: r.rated_power / MEGA,
            ramp_mw_per_s: r.ramp_rate / MEGA,
            lower_mw: r.lower_limit / MEGA,
            upper_mw: r.upper_limit / MEGA,
            tau_s: PlantParams::default().tau_g,
            cost_quadratic: 0.0,
            cost_linear: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageSection {
    pub rated_mw: f64,
    pub ramp_mw_per_s: f64,
    pub lower_mw: f64,
    pub upper_mw: f64,
    pub tau_s: f64,
    pub capacity_ah: f64,
    pub initial_ah: f64,
    pub bus_kv: f64,
    pub cost_quadratic: f64,
    pub cost_linear: f64,
}

impl Default for StorageSection {
    fn default() -> Self {
        let r = reference::storage();
        let b = reference::battery();
        StorageSection {
            rated_mw: r.rated_power / MEGA,
            ramp_mw_per_s: r.ramp_rate / MEGA,
            lower_mw: r.lower_limit / MEGA,
            upper_mw: r.upper_limit / MEGA,
            tau_s: PlantParams::default().tau_b,
            capacity_ah: b.capacity_total,
            initial_ah: b.initial_charge,
            bus_kv: b.bus_voltage / KILO,
            cost_quadratic: 0.0,
            cost_linear: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub start_s: f64,
    pub duration_s: f64,
    pub height_mw: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        PulseSection {
            start_s: 0.0,
            duration_s: 0.0,
            height_mw: 0.0,
        }
    }
}

/// Either a synthetic baseline-plus-pulses profile or a sampled CSV trace
/// (`csv` set). The CSV wins when both are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadSection {
    pub baseline_mw: f64,
    pub pulses: Vec<PulseSection>,
    /// Path to a `time_s,power_w` CSV, resolved against the config file's
    /// directory.
    pub csv: Option<String>,
}

impl Default for LoadSection {
    fn default() -> Self {
        LoadSection {
            baseline_mw: 5.0,
            pulses: [1.0, 3.0, 5.5, 7.5]
                .iter()
                .map(|&start_s| PulseSection {
                    start_s,
                    duration_s: 0.5,
                    height_mw: 20.0,
                })
                .collect(),
            csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub percent: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            percent: 10.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmsSection {
    pub horizon: usize,
    pub period_s: f64,
    /// Model step inside the optimizer; defaults to the period.
    pub step_time_s: Option<f64>,
    pub cost_weight: f64,
    pub target_soc: f64,
    pub plant_dt_s: f64,
    pub accel_factor: f64,
}

impl Default for EmsSection {
    fn default() -> Self {
        let e = EmsConfig::default();
        EmsSection {
            horizon: e.horizon,
            period_s: e.ems_period,
            step_time_s: None,
            cost_weight: e.cost_weight,
            target_soc: e.target_soc,
            plant_dt_s: e.plant_dt,
            accel_factor: e.accel_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationSection {
    pub pre_exponent: f64,
    pub activation: f64,
    pub c_rate_coeff: f64,
    pub gas_const: f64,
    pub temperature: f64,
    pub exponent: f64,
    pub gen_base_rate: f64,
    pub gen_stress_coeff: f64,
}

impl Default for DegradationSection {
    fn default() -> Self {
        let f = BatteryFadeParams::default();
        let g = GenAgingParams::default();
        DegradationSection {
            pre_exponent: f.pre_exponent,
            activation: f.activation,
            c_rate_coeff: f.c_rate_coeff,
            gas_const: f.gas_const,
            temperature: f.temperature,
            exponent: f.exponent,
            gen_base_rate: g.base_rate,
            gen_stress_coeff: g.stress_coeff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub noise_levels: Vec<f64>,
    pub soc_targets: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Coarser plant step for the many-run sweep; `None` inherits
    /// `[ems] plant_dt_s`.
    pub plant_dt_s: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let p = SweepPlan::default();
        SweepSection {
            noise_levels: p.noise_levels,
            soc_targets: p.soc_targets,
            replicates: p.replicates,
            base_seed: p.base_seed,
            plant_dt_s: Some(1e-3),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigFileError> {
    Ok(toml::from_str(text)?)
}

/// Read and parse a config file; errors carry the path.
pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_solver(name: &str) -> Result<SolverKind, ConfigFileError> {
    match name {
        "centralized" => Ok(SolverKind::Centralized),
        "admm" => Ok(SolverKind::Admm),
        other => Err(ConfigFileError::BadValue {
            key: "system.solver",
            reason: format!("expected \"centralized\" or \"admm\", got \"{other}\""),
        }),
    }
}

impl ConfigFile {
    /// Expand to a runnable scenario. `base_dir` anchors any relative CSV
    /// load-profile path (normally the config file's directory).
    pub fn scenario(&self, base_dir: &Path) -> Result<Scenario, ConfigFileError> {
        let solver = parse_solver(&self.system.solver)?;
        let load = self.load_source(base_dir)?;
        let sys = &self.system;
        let initial_power = match (sys.initial_p_g_mw, sys.initial_p_b_mw) {
            (None, None) => None,
            (g, b) => Some((g.unwrap_or(0.0) * MEGA, b.unwrap_or(0.0) * MEGA)),
        };
        Ok(Scenario {
            ems: EmsConfig {
                horizon: self.ems.horizon,
                step_time: self.ems.step_time_s.unwrap_or(self.ems.period_s),
                cost_weight: self.ems.cost_weight,
                target_soc: self.ems.target_soc,
                plant_dt: self.ems.plant_dt_s,
                ems_period: self.ems.period_s,
                accel_factor: self.ems.accel_factor,
            },
            generator: DeviceRating {
                rated_power: self.pgm.rated_mw * MEGA,
                ramp_rate: self.pgm.ramp_mw_per_s * MEGA,
                lower_limit: self.pgm.lower_mw * MEGA,
                upper_limit: self.pgm.upper_mw * MEGA,
            },
            storage: DeviceRating {
                rated_power: self.pcm.rated_mw * MEGA,
                ramp_rate: self.pcm.ramp_mw_per_s * MEGA,
                lower_limit: self.pcm.lower_mw * MEGA,
                upper_limit: self.pcm.upper_mw * MEGA,
            },
            battery: BatterySpec {
                capacity_total: self.pcm.capacity_ah,
                initial_charge: self.pcm.initial_ah,
                bus_voltage: self.pcm.bus_kv * KILO,
            },
            gen_cost: QuadCost {
                c2: self.pgm.cost_quadratic,
                c1: self.pgm.cost_linear,
            },
            storage_cost: QuadCost {
                c2: self.pcm.cost_quadratic,
                c1: self.pcm.cost_linear,
            },
            load,
            total_time: sys.total_time_s,
            noise: NoiseSpec {
                percent: self.noise.percent,
                seed: self.noise.seed,
            },
            solver,
            admm: AdmmSettings {
                rho: sys.admm_rho,
                tol: sys.admm_tol,
                max_iter: sys.admm_max_iter,
            },
            plant: PlantParams {
                tau_g: self.pgm.tau_s,
                tau_b: self.pcm.tau_s,
                accel: self.ems.accel_factor,
                aging: GenAgingParams {
                    base_rate: self.degradation.gen_base_rate,
                    stress_coeff: self.degradation.gen_stress_coeff,
                },
            },
            fade: BatteryFadeParams {
                pre_exponent: self.degradation.pre_exponent,
                activation: self.degradation.activation,
                c_rate_coeff: self.degradation.c_rate_coeff,
                gas_const: self.degradation.gas_const,
                temperature: self.degradation.temperature,
                exponent: self.degradation.exponent,
            },
            initial_power,
        })
    }

    fn load_source(&self, base_dir: &Path) -> Result<LoadSource, ConfigFileError> {
        if let Some(rel) = &self.load.csv {
            let path = base_dir.join(rel);
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigFileError::Profile {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let profile =
                SampledProfile::from_csv_text(&text).map_err(|e| ConfigFileError::Profile {
                    path,
                    reason: e.to_string(),
                })?;
            return Ok(LoadSource::Sampled(profile));
        }
        Ok(LoadSource::Synthetic(LoadProfileSpec {
            baseline: self.load.baseline_mw * MEGA,
            pulses: self
                .load
                .pulses
                .iter()
                .map(|p| Pulse {
                    start: p.start_s,
                    duration: p.duration_s,
                    height: p.height_mw * MEGA,
                })
                .collect(),
            total_time: self.system.total_time_s,
        }))
    }

    pub fn sweep_plan(&self) -> SweepPlan {
        SweepPlan {
            noise_levels: self.sweep.noise_levels.clone(),
            soc_targets: self.sweep.soc_targets.clone(),
            replicates: self.sweep.replicates,
            base_seed: self.sweep.base_seed,
        }
    }

    /// The scenario the sweep fans out, with the sweep's own plant step
    /// applied when one is configured.
    pub fn sweep_scenario(&self, base_dir: &Path) -> Result<Scenario, ConfigFileError> {
        let mut scenario = self.scenario(base_dir)?;
        if let Some(dt) = self.sweep.plant_dt_s {
            scenario.ems.plant_dt = dt;
        }
        Ok(scenario)
    }
}

/// A minimal linspace-driven grid helper for hand-written configs.
pub fn soc_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    linspace(lo, hi, count)
}
