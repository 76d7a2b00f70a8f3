//! Monte-Carlo harness: fan a closed-loop scenario out over a grid of
//! (forecast-noise level × terminal charge set point × replicate), with one
//! independently seeded run per cell, then regress capacity loss against the
//! set point per noise level.
//!
//! Runs are embarrassingly parallel and share no mutable state; the record
//! order and every seed depend only on the plan, never on scheduling.

use crate::closed_loop::{run_closed_loop, Scenario};
use crate::model::validate_config;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Evenly spaced set-point grid from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// What to sweep: every combination of noise level and charge set point,
/// `replicates` times each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepPlan {
    /// Forecast-uncertainty levels in percent.
    pub noise_levels: Vec<f64>,
    /// Terminal state-of-charge set points.
    pub soc_targets: Vec<f64>,
    /// Independent runs per (noise, set point) cell.
    pub replicates: usize,
    /// Root of the per-run seed derivation.
    pub base_seed: u64,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan {
            noise_levels: (1..=10).map(f64::from).collect(),
            soc_targets: linspace(0.60, 0.80, 40),
            replicates: 1,
            base_seed: 0x5eed,
        }
    }
}

impl SweepPlan {
    pub fn runs(&self) -> usize {
        self.noise_levels.len() * self.soc_targets.len() * self.replicates
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.noise_levels.is_empty() || self.soc_targets.is_empty() {
            return Err(SweepError::EmptyPlan);
        }
        if self.replicates == 0 {
            return Err(SweepError::NoReplicates);
        }
        for &n in &self.noise_levels {
            if !(0.0..=100.0).contains(&n) {
                return Err(SweepError::BadNoise(n));
            }
        }
        for &q in &self.soc_targets {
            if !(0.0..=1.0).contains(&q) {
                return Err(SweepError::BadTarget(q));
            }
        }
        Ok(())
    }
}

/// One run's outcome, keyed by its cell coordinates and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub noise_percent: f64,
    pub target_soc: f64,
    pub seed: u64,
    /// Battery capacity loss at the end of the run, percent.
    pub capacity_loss: f64,
    /// Generator life consumed at the end of the run, percent.
    pub gen_life: f64,
    pub violations: u64,
    pub failures: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("sweep plan has an empty noise or set-point list")]
    EmptyPlan,
    #[error("sweep plan needs at least one replicate per cell")]
    NoReplicates,
    #[error("noise level {0} outside [0, 100] percent")]
    BadNoise(f64),
    #[error("set point {0} outside [0, 1]")]
    BadTarget(f64),
    #[error("scenario template rejected: {0}")]
    Template(String),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed: the base seed pushed through a mixing chain with the cell
/// coordinates. Any coordinate change decorrelates the whole stream, and the
/// result is independent of scheduling.
pub fn mix_seed(base: u64, noise_idx: usize, soc_idx: usize, replicate: usize) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ noise_idx as u64);
    s = splitmix64(s ^ soc_idx as u64);
    splitmix64(s ^ replicate as u64)
}

/// Run the whole grid. The template scenario supplies everything except the
/// noise level, the set point, and the seed, which come from the plan. The
/// record order is (noise, set point, replicate) row-major regardless of the
/// worker count.
pub fn run_sweep(plan: &SweepPlan, template: &Scenario) -> Result<Vec<SweepRecord>, SweepError> {
    plan.validate()?;
    validate_config(
        template.ems,
        template.generator,
        template.storage,
        template.battery,
    )
    .map_err(|e| SweepError::Template(e.to_string()))?;
    if !(template.total_time > 0.0) {
        return Err(SweepError::Template(format!(
            "total_time must be positive, got {}",
            template.total_time
        )));
    }

    let jobs: Vec<(usize, usize, usize)> = (0..plan.noise_levels.len())
        .flat_map(|ni| {
            (0..plan.soc_targets.len())
                .flat_map(move |si| (0..plan.replicates).map(move |r| (ni, si, r)))
        })
        .collect();

    let records = jobs
        .into_par_iter()
        .map(|(ni, si, rep)| {
            let noise_percent = plan.noise_levels[ni];
            let target_soc = plan.soc_targets[si];
            let seed = mix_seed(plan.base_seed, ni, si, rep);
            let mut scenario = template.clone();
            scenario.noise.percent = noise_percent;
            scenario.noise.seed = seed;
            scenario.ems.target_soc = target_soc;
            let result = run_closed_loop(&scenario)
                .expect("template validated up front; per-run setup cannot fail");
            SweepRecord {
                noise_percent,
                target_soc,
                seed,
                capacity_loss: result.capacity_loss,
                gen_life: result.gen_life,
                violations: result.violations,
                failures: result.failures,
            }
        })
        .collect();
    Ok(records)
}

/// Replicate statistics for one (noise, set point) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub noise_percent: f64,
    pub target_soc: f64,
    pub mean_loss: f64,
    /// Sample standard deviation of the replicate losses; 0 for a lone run.
    pub std_loss: f64,
    pub count: usize,
}

/// Collapse replicates into per-cell mean and spread, cells in first-seen
/// order so the output is deterministic.
pub fn cell_stats(records: &[SweepRecord]) -> Vec<CellStat> {
    let mut cells: Vec<((u64, u64), Vec<f64>)> = Vec::new();
    for rec in records {
        let key = (rec.noise_percent.to_bits(), rec.target_soc.to_bits());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(rec.capacity_loss),
            None => cells.push((key, vec![rec.capacity_loss])),
        }
    }
    cells
        .into_iter()
        .map(|((nk, tk), losses)| {
            let count = losses.len();
            let mean = losses.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                let var = losses.iter().map(|&x| (x - mean).powi(2)).sum::<f64>()
                    / (count - 1) as f64;
                var.sqrt()
            } else {
                0.0
            };
            CellStat {
                noise_percent: f64::from_bits(nk),
                target_soc: f64::from_bits(tk),
                mean_loss: mean,
                std_loss: std,
                count,
            }
        })
        .collect()
}

/// Least-squares quadratic `loss ≈ a·q² + b·q + c` for one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub noise_percent: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("noise level {noise_percent}% has only {distinct} distinct set points; a quadratic needs 3")]
    TooFewTargets { noise_percent: f64, distinct: usize },
    #[error("normal equations singular for noise level {noise_percent}%")]
    Singular { noise_percent: f64 },
}

/// Group records by noise level (first-appearance order), average replicates
/// within each (noise, set point) cell, and fit one quadratic per noise
/// level by ordinary least squares on the cell means.
pub fn fit_quadratic(records: &[SweepRecord]) -> Result<Vec<QuadraticFit>, FitError> {
    // bit-keyed grouping in first-seen order keeps the output deterministic
    let mut groups: Vec<(u64, Vec<&SweepRecord>)> = Vec::new();
    for rec in records {
        let key = rec.noise_percent.to_bits();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(rec),
            None => groups.push((key, vec![rec])),
        }
    }

    let mut fits = Vec::with_capacity(groups.len());
    for (key, group) in groups {
        let noise_percent = f64::from_bits(key);
        let mut cells: Vec<(u64, f64, usize)> = Vec::new(); // (target bits, loss sum, count)
        for rec in group {
            let tkey = rec.target_soc.to_bits();
            match cells.iter_mut().find(|(k, _, _)| *k == tkey) {
                Some((_, sum, count)) => {
                    *sum += rec.capacity_loss;
                    *count += 1;
                }
                None => cells.push((tkey, rec.capacity_loss, 1)),
            }
        }
        if cells.len() < 3 {
            return Err(FitError::TooFewTargets {
                noise_percent,
                distinct: cells.len(),
            });
        }
        let points: Vec<(f64, f64)> = cells
            .iter()
            .map(|&(tk, sum, count)| (f64::from_bits(tk), sum / count as f64))
            .collect();

        let mean_y = points.iter().map(|&(_, y)| y).sum::<f64>() / points.len() as f64;
        if points.iter().all(|&(_, y)| y == points[0].1) {
            fits.push(QuadraticFit {
                noise_percent,
                a: 0.0,
                b: 0.0,
                c: points[0].1,
                r_squared: 1.0,
            });
            continue;
        }

        // normal equations for the 3-parameter polynomial
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
        for &(q, y) in &points {
            let q2 = q * q;
            s1 += q;
            s2 += q2;
            s3 += q2 * q;
            s4 += q2 * q2;
            t0 += y;
            t1 += q * y;
            t2 += q2 * y;
        }
        let n = points.len() as f64;
        let m = nalgebra::Matrix3::new(s4, s3, s2, s3, s2, s1, s2, s1, n);
        let rhs = nalgebra::Vector3::new(t2, t1, t0);
        let coeffs = m
            .lu()
            .solve(&rhs)
            .ok_or(FitError::Singular { noise_percent })?;
        let (a, b, c) = (coeffs[0], coeffs[1], coeffs[2]);

        let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean_y).powi(2)).sum();
        let ss_res: f64 = points
            .iter()
            .map(|&(q, y)| (y - (a * q * q + b * q + c)).powi(2))
            .sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        fits.push(QuadraticFit {
            noise_percent,
            a,
            b,
            c,
            r_squared,
        });
    }
    Ok(fits)
}
