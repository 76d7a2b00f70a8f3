//! Deterministic load profiles and the noisy forecasts the controller sees.
//!
//! The plant is driven by the *actual* load; the controller only ever sees a
//! multiplicative-noise corruption of it. Noise is Gaussian, seeded, and
//! clamped so a forecast can never go negative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One rectangular load pulse: `height` watts added on `[start, start+duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start: f64,
    pub duration: f64,
    pub height: f64,
}

/// Baseline-plus-pulses load description over `[0, total_time]` seconds.
/// Beyond `total_time` the profile holds the baseline, which lets a
/// prediction horizon peek past the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfileSpec {
    pub baseline: f64,
    pub pulses: Vec<Pulse>,
    pub total_time: f64,
}

/// Violations of the load-profile invariants.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LoadProfileError {
    #[error("pulse {index} lies outside [0, {total}]: start {start}, duration {duration}")]
    PulseOutOfRange {
        index: usize,
        start: f64,
        duration: f64,
        total: f64,
    },
    #[error("pulse {index} has non-positive duration {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("pulse {index} peak {peak} W exceeds rated load power {rated} W")]
    ExceedsRating { index: usize, peak: f64, rated: f64 },
    #[error("baseline {baseline} W outside [0, {rated}] W")]
    BadBaseline { baseline: f64, rated: f64 },
    #[error("total_time must be positive, got {0}")]
    BadTotalTime(f64),
}

impl LoadProfileSpec {
    /// Check pulse placement and the rating ceiling (baseline + height per
    /// pulse must not exceed the rated load power).
    pub fn validate(&self, rated_power: f64) -> Result<(), Vec<LoadProfileError>> {
        let mut errors = Vec::new();
        if !(self.total_time > 0.0) {
            errors.push(LoadProfileError::BadTotalTime(self.total_time));
        }
        if !(self.baseline >= 0.0 && self.baseline <= rated_power) {
            errors.push(LoadProfileError::BadBaseline {
                baseline: self.baseline,
                rated: rated_power,
            });
        }
        for (index, p) in self.pulses.iter().enumerate() {
            if !(p.duration > 0.0) {
                errors.push(LoadProfileError::BadDuration {
                    index,
                    duration: p.duration,
                });
                continue;
            }
            if p.start < 0.0 || p.start + p.duration > self.total_time {
                errors.push(LoadProfileError::PulseOutOfRange {
                    index,
                    start: p.start,
                    duration: p.duration,
                    total: self.total_time,
                });
            }
            let peak = self.baseline + p.height;
            if p.height < 0.0 || peak > rated_power {
                errors.push(LoadProfileError::ExceedsRating {
                    index,
                    peak,
                    rated: rated_power,
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Actual load at time `t`: baseline plus every active pulse.
    pub fn power_at(&self, t: f64) -> f64 {
        let mut p = self.baseline;
        for pulse in &self.pulses {
            if t >= pulse.start && t < pulse.start + pulse.duration {
                p += pulse.height;
            }
        }
        p
    }
}

/// Sample the profile at `t = 0, dt, 2·dt, …` for every point not past
/// `total_time`.
pub fn generate_profile(spec: &LoadProfileSpec, dt: f64) -> Vec<f64> {
    assert!(dt > 0.0, "sample step must be positive");
    let n = (spec.total_time / dt).floor() as usize;
    (0..=n).map(|i| spec.power_at(i as f64 * dt)).collect()
}

/// A measured load trace: zero-order hold between samples, last value held
/// past the end. Times must be strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledProfile {
    times: Vec<f64>,
    powers: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SampledProfileError {
    #[error("profile needs at least one sample")]
    Empty,
    #[error("sample times must be strictly increasing at row {0}")]
    NonMonotonic(usize),
    #[error("row {row}: {detail}")]
    BadRow { row: usize, detail: String },
}

impl SampledProfile {
    pub fn new(times: Vec<f64>, powers: Vec<f64>) -> Result<Self, SampledProfileError> {
        if times.is_empty() || times.len() != powers.len() {
            return Err(SampledProfileError::Empty);
        }
        for i in 1..times.len() {
            if !(times[i] > times[i - 1]) {
                return Err(SampledProfileError::NonMonotonic(i));
            }
        }
        Ok(SampledProfile { times, powers })
    }

    /// Parse a two-column `time_s,power_w` CSV body. A single non-numeric
    /// header line is tolerated.
    pub fn from_csv_text(text: &str) -> Result<Self, SampledProfileError> {
        let mut times = Vec::new();
        let mut powers = Vec::new();
        for (row, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let t = parts.next().unwrap_or("").trim().parse::<f64>();
            let p = parts.next().unwrap_or("").trim().parse::<f64>();
            match (t, p) {
                (Ok(t), Ok(p)) => {
                    times.push(t);
                    powers.push(p);
                }
                _ if row == 0 => continue, // header
                _ => {
                    return Err(SampledProfileError::BadRow {
                        row,
                        detail: format!("cannot parse '{line}' as time,power"),
                    })
                }
            }
        }
        SampledProfile::new(times, powers)
    }

    pub fn power_at(&self, t: f64) -> f64 {
        // index of the last sample at or before t
        match self.times.partition_point(|&s| s <= t) {
            0 => self.powers[0],
            i => self.powers[i - 1],
        }
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty by construction")
    }
}

/// Where a run's actual load comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadSource {
    Synthetic(LoadProfileSpec),
    Sampled(SampledProfile),
}

impl LoadSource {
    pub fn power_at(&self, t: f64) -> f64 {
        match self {
            LoadSource::Synthetic(s) => s.power_at(t),
            LoadSource::Sampled(s) => s.power_at(t),
        }
    }
}

/// Forecast-noise description: `percent` is the standard deviation of the
/// multiplicative error in percent of the instantaneous load; `seed` fixes
/// the realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub percent: f64,
    pub seed: u64,
}

/// Seeded stream of multiplicative forecast factors `1 + ε`,
/// `ε ~ N(0, (percent/100)²)`. One factor is drawn per controller solve and
/// shared by the whole forecast window for that solve.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl NoiseStream {
    pub fn new(spec: &NoiseSpec) -> Self {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            sigma: spec.percent / 100.0,
        }
    }

    /// Next multiplicative factor. Always consumes exactly one normal draw,
    /// even at zero noise, so interleaved consumers stay aligned across
    /// configurations.
    pub fn factor(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        1.0 + self.sigma * z
    }
}

/// Corrupt a load series with independent per-sample multiplicative noise,
/// clamping each forecast at zero. Used to fabricate stand-alone forecast
/// traces; the closed loop instead holds one factor per solve.
pub fn inject_noise(series: &[f64], spec: &NoiseSpec) -> Vec<f64> {
    let mut stream = NoiseStream::new(spec);
    series
        .iter()
        .map(|&p| (p * stream.factor()).max(0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulsed() -> LoadProfileSpec {
        LoadProfileSpec {
            baseline: 5.0e6,
            pulses: vec![Pulse {
                start: 0.2,
                duration: 0.1,
                height: 20.0e6,
            }],
            total_time: 1.0,
        }
    }

    #[test]
    fn flat_profile_samples_constant() {
        let spec = LoadProfileSpec {
            baseline: 5.0e6,
            pulses: vec![],
            total_time: 1.0,
        };
        let series = generate_profile(&spec, 0.1);
        assert_eq!(series.len(), 11);
        assert!(series.iter().all(|&p| p == 5.0e6));
    }

    #[test]
    fn pulse_active_on_half_open_interval() {
        // boundaries chosen exactly representable so the half-open check is
        // unambiguous: [0.25, 0.5)
        let spec = LoadProfileSpec {
            baseline: 5.0e6,
            pulses: vec![Pulse {
                start: 0.25,
                duration: 0.25,
                height: 20.0e6,
            }],
            total_time: 1.0,
        };
        assert_eq!(spec.power_at(0.249), 5.0e6);
        assert_eq!(spec.power_at(0.25), 25.0e6);
        assert_eq!(spec.power_at(0.375), 25.0e6);
        assert_eq!(spec.power_at(0.5), 5.0e6, "pulse end is exclusive");
        assert_eq!(spec.power_at(2.0), 5.0e6, "baseline holds past the end");
    }

    #[test]
    fn validation_catches_placement_and_rating() {
        let mut spec = pulsed();
        spec.pulses.push(Pulse {
            start: 0.95,
            duration: 0.2,
            height: 1.0e6,
        });
        spec.pulses.push(Pulse {
            start: 0.1,
            duration: 0.05,
            height: 26.0e6,
        });
        let errors = spec.validate(30.0e6).unwrap_err();
        assert!(errors
            .iter()
            .any(|e| matches!(e, LoadProfileError::PulseOutOfRange { index: 1, .. })));
        assert!(errors
            .iter()
            .any(|e| matches!(e, LoadProfileError::ExceedsRating { index: 2, .. })));
        assert!(pulsed().validate(30.0e6).is_ok());
    }

    #[test]
    fn zero_noise_is_identity() {
        let series = vec![5.0e6; 64];
        let noisy = inject_noise(
            &series,
            &NoiseSpec {
                percent: 0.0,
                seed: 7,
            },
        );
        assert_eq!(noisy, series);
    }

    #[test]
    fn same_seed_same_noise() {
        let series: Vec<f64> = (0..100).map(|i| 1.0e6 + i as f64).collect();
        let spec = NoiseSpec {
            percent: 10.0,
            seed: 1234,
        };
        assert_eq!(inject_noise(&series, &spec), inject_noise(&series, &spec));
        let other = NoiseSpec {
            percent: 10.0,
            seed: 1235,
        };
        assert_ne!(inject_noise(&series, &spec), inject_noise(&series, &other));
    }

    #[test]
    fn sample_deviation_matches_configured_percent() {
        let n = 100_000;
        let series = vec![10.0e6; n];
        let noisy = inject_noise(
            &series,
            &NoiseSpec {
                percent: 10.0,
                seed: 99,
            },
        );
        let mean = noisy.iter().sum::<f64>() / n as f64;
        let var = noisy.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let rel_std = var.sqrt() / 10.0e6;
        assert!(
            (rel_std - 0.10).abs() < 0.005,
            "sample std {rel_std} should sit near 0.10"
        );
        assert!((mean / 10.0e6 - 1.0).abs() < 0.002, "mean preserved, got {mean}");
    }

    #[test]
    fn forecasts_never_go_negative() {
        let series = vec![1.0; 10_000];
        let noisy = inject_noise(
            &series,
            &NoiseSpec {
                percent: 500.0,
                seed: 3,
            },
        );
        assert!(noisy.iter().all(|&p| p >= 0.0));
        assert!(noisy.iter().any(|&p| p == 0.0), "clamp actually engaged");
    }

    #[test]
    fn sampled_profile_zero_order_hold() {
        let p = SampledProfile::from_csv_text("time_s,power_w\n0.0,1.0\n0.5,2.0\n1.0,3.0\n").unwrap();
        assert_eq!(p.power_at(-0.1), 1.0);
        assert_eq!(p.power_at(0.0), 1.0);
        assert_eq!(p.power_at(0.49), 1.0);
        assert_eq!(p.power_at(0.5), 2.0);
        assert_eq!(p.power_at(5.0), 3.0);
        assert!(SampledProfile::from_csv_text("0.0,1.0\nnope,2.0\n").is_err());
    }
}
