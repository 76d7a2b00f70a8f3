//! Component wear laws: battery capacity fade from ampere-hour throughput
//! and generator life consumption from injected-power stress.
//!
//! Both laws are pure functions of aggregate stress variables, so wear is
//! path-independent given the aggregates. An acceleration factor scales the
//! accumulation linearly to make wear visible in runs lasting seconds.

use serde::{Deserialize, Serialize};

/// Parameters of the capacity-fade law
/// `loss% = B · exp((−E_a + η·c)/(R·T)) · ah^z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryFadeParams {
    /// Pre-exponential factor B (unitless).
    pub pre_exponent: f64,
    /// Activation energy E_a, J/mol.
    pub activation: f64,
    /// C-rate coefficient η, J/mol per unit C-rate.
    pub c_rate_coeff: f64,
    /// Gas constant R, J/(mol·K).
    pub gas_const: f64,
    /// Cell temperature T, kelvin.
    pub temperature: f64,
    /// Throughput exponent z in (0, 1].
    pub exponent: f64,
}

impl Default for BatteryFadeParams {
    fn default() -> Self {
        BatteryFadeParams {
            pre_exponent: 31630.0,
            activation: 31700.0,
            c_rate_coeff: 370.3,
            gas_const: 8.314,
            temperature: 298.15,
            exponent: 0.55,
        }
    }
}

/// Capacity loss in percent after `ah` ampere-hours of throughput at mean
/// C-rate `c_rate`. Zero throughput is zero loss; loss grows as `ah^z`.
pub fn battery_capacity_loss(ah: f64, c_rate: f64, params: &BatteryFadeParams) -> f64 {
    if ah <= 0.0 {
        return 0.0;
    }
    let arrhenius =
        (-params.activation + params.c_rate_coeff * c_rate) / (params.gas_const * params.temperature);
    params.pre_exponent * arrhenius.exp() * ah.powf(params.exponent)
}

/// Parameters of the generator aging law
/// `Δlife = k_g · exp(γ_g · sop) · dt · accel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenAgingParams {
    /// Baseline life-consumption rate k_g, 1/s before acceleration.
    pub base_rate: f64,
    /// Stress exponent coefficient γ_g on the share of rated power.
    pub stress_coeff: f64,
}

impl Default for GenAgingParams {
    fn default() -> Self {
        GenAgingParams {
            base_rate: 1e-9,
            stress_coeff: 3.0,
        }
    }
}

/// Life-fraction consumed while running `dt` seconds at share-of-rated-power
/// `sop` (0 = idle, 1 = rated), scaled by the acceleration factor.
pub fn generator_aging(sop: f64, dt: f64, params: &GenAgingParams, accel: f64) -> f64 {
    params.base_rate * (params.stress_coeff * sop).exp() * dt * accel
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_throughput_is_zero_loss() {
        let p = BatteryFadeParams::default();
        assert_eq!(battery_capacity_loss(0.0, 0.5, &p), 0.0);
        assert_eq!(battery_capacity_loss(-1.0, 0.5, &p), 0.0);
    }

    #[test]
    fn default_law_reference_point() {
        // 100 Ah at C-rate 0.5 with the default parameter set
        let p = BatteryFadeParams::default();
        let loss = battery_capacity_loss(100.0, 0.5, &p);
        assert!(
            (loss - 1.1984754124404706).abs() < 1e-12,
            "loss(100, 0.5) = {loss}"
        );
    }

    #[test]
    fn doubling_throughput_follows_the_power_law() {
        let p = BatteryFadeParams::default();
        let one = battery_capacity_loss(50.0, 0.5, &p);
        let two = battery_capacity_loss(100.0, 0.5, &p);
        let ratio = two / one;
        assert!(
            (ratio - 1.4640856959456254).abs() < 1e-12,
            "2^0.55 = {ratio}"
        );
    }

    #[test]
    fn loss_is_monotone_in_throughput_and_c_rate() {
        let p = BatteryFadeParams::default();
        let mut prev = 0.0;
        for ah in [1.0, 5.0, 20.0, 100.0, 500.0] {
            let loss = battery_capacity_loss(ah, 0.5, &p);
            assert!(loss > prev);
            prev = loss;
        }
        assert!(
            battery_capacity_loss(100.0, 2.0, &p) > battery_capacity_loss(100.0, 0.5, &p),
            "harder cycling ages faster"
        );
    }

    #[test]
    fn generator_aging_baseline_and_stress_ratio() {
        let p = GenAgingParams::default();
        let idle = generator_aging(0.0, 2.0, &p, 1e6);
        assert!((idle - 1e-9 * 2.0 * 1e6).abs() < 1e-18);
        let rated = generator_aging(1.0, 2.0, &p, 1e6);
        assert!(
            ((rated / idle) - p.stress_coeff.exp()).abs() < 1e-9,
            "full-power aging is exp(γ) times idle"
        );
        // stress coefficient off: aging independent of load share
        let flat = GenAgingParams {
            stress_coeff: 0.0,
            ..p
        };
        assert_eq!(
            generator_aging(0.2, 1.0, &flat, 1.0),
            generator_aging(0.9, 1.0, &flat, 1.0)
        );
    }

    #[test]
    fn acceleration_scales_linearly() {
        let p = GenAgingParams::default();
        let a = generator_aging(0.5, 1.0, &p, 1.0);
        let b = generator_aging(0.5, 1.0, &p, 2.0);
        assert!((b - 2.0 * a).abs() < 1e-20);
    }

    #[test]
    fn params_round_trip_through_toml() {
        let p = BatteryFadeParams::default();
        let text = toml::to_string(&p).unwrap();
        let back: BatteryFadeParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
        // partial tables fall back to defaults
        let partial: BatteryFadeParams = toml::from_str("exponent = 0.6").unwrap();
        assert_eq!(partial.exponent, 0.6);
        assert_eq!(partial.pre_exponent, 31630.0);
    }
}
