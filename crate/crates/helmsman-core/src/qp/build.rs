//! Condensed receding-horizon QP assembly.
//!
//! One controller solve optimizes every device's power at every prediction
//! step. Variables are laid out device-major: variable `d·h + k` is device
//! `d`'s power at step `k`. The objective is per-step supply/demand tracking
//! plus optional weighted operating cost:
//!
//! ```text
//! J = Σ_k (Σ_d p_{d,k} − l_k)² + γ Σ_d Σ_k (c2_d p_{d,k}² + c1_d p_{d,k})
//! ```
//!
//! subject to, per device, a static power box and per-step ramp limits
//! (first differences, with the first step differenced against the measured
//! power), and — across all storage devices — one charge-balance equality
//! pinning the horizon-end state of charge.
//!
//! A small Tikhonov term (`tikhonov_epsilon` × identity) is folded into the
//! Hessian so the problem is strictly convex even where the tracking
//! objective alone is indifferent to how devices share the load. That keeps
//! the minimizer unique, which downstream consensus checks rely on.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::problem::QpProblem;
use crate::model::{DeviceKind, DeviceRating, HorizonProfile};

/// Convex per-step operating cost `c2·p² + c1·p` for one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCost {
    pub c2: f64,
    pub c1: f64,
}

impl QuadCost {
    pub const ZERO: QuadCost = QuadCost { c2: 0.0, c1: 0.0 };
}

/// One dispatchable device as the controller sees it at solve time.
#[derive(Debug, Clone, Copy)]
pub struct MpcDevice {
    pub kind: DeviceKind,
    pub rating: DeviceRating,
    pub cost: QuadCost,
    /// Power measured at the plant right before the solve, in watts. It is
    /// clamped into the device box before entering the first-step ramp rows,
    /// so a measurement just outside the box (start-up, sensor noise) cannot
    /// make the first step infeasible.
    pub measured: f64,
}

impl MpcDevice {
    /// Measured power clamped into the static box.
    pub fn measured_clamped(&self) -> f64 {
        self.rating.clamp(self.measured)
    }
}

/// Everything one controller solve needs.
#[derive(Debug, Clone)]
pub struct MpcInstance {
    pub devices: Vec<MpcDevice>,
    /// Demand forecast per prediction step, watts; length must equal `horizon`.
    pub forecast: HorizonProfile,
    pub horizon: usize,
    /// Prediction step length, seconds.
    pub step_time: f64,
    /// Weight γ on operating cost against tracking error.
    pub cost_weight: f64,
    /// Joules per unit state of charge (3600 · capacity · voltage).
    pub charge_scale: f64,
    /// Measured state of charge at solve time.
    pub soc: f64,
    /// State of charge commanded for the end of the horizon.
    pub soc_target: f64,
}

/// Why a QP could not be assembled.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BuildError {
    #[error("forecast has {got} steps but the horizon is {expected}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("state of charge {soc} outside [0, 1]")]
    BadSoc { soc: f64 },
    #[error(
        "terminal charge target needs {required:+.3e} W·steps from storage able to sum only [{reachable_lo:+.3e}, {reachable_hi:+.3e}]"
    )]
    InfeasibleTerminalSoc {
        required: f64,
        reachable_lo: f64,
        reachable_hi: f64,
    },
}

/// First-difference matrix over the horizon: row 0 is the identity on step 0
/// (the measured power is folded into the right-hand side), row `k` is
/// `p_k − p_{k−1}`.
pub fn rate_matrix(horizon: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(horizon, horizon);
    for k in 0..horizon {
        d[(k, k)] = 1.0;
        if k > 0 {
            d[(k, k - 1)] = -1.0;
        }
    }
    d
}

/// Strict-convexity pad: a diagonal shift small enough to never matter for
/// tracking accuracy, large enough to pick a unique minimizer among
/// cost-equivalent splits.
pub fn tikhonov_epsilon(hessian: &DMatrix<f64>) -> f64 {
    1e-8 * hessian.amax().max(1.0)
}

/// The pad [`build_qp`] applies for `instance`, from the closed form of the
/// assembled Hessian's largest entry (tracking contributes 2 everywhere in a
/// step block, operating cost adds `2γc2` on the diagonal). Distributed
/// splittings use this to regularize their nodes identically, so both
/// formulations share one unique minimizer.
pub fn instance_epsilon(instance: &MpcInstance) -> f64 {
    let max_c2 = instance
        .devices
        .iter()
        .map(|d| d.cost.c2.max(0.0))
        .fold(0.0, f64::max);
    1e-8 * (2.0 + 2.0 * instance.cost_weight * max_c2).max(1.0)
}

/// How far the state of charge can move over one horizon, as non-negative
/// magnitudes (`max_drop` by discharging, `max_rise` by charging).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocReach {
    pub max_drop: f64,
    pub max_rise: f64,
}

impl SocReach {
    /// Reach assuming every storage device can sit at its box limit for the
    /// whole horizon (ignores ramps).
    pub fn from_box(
        storage: &[DeviceRating],
        charge_scale: f64,
        step_time: f64,
        horizon: usize,
    ) -> SocReach {
        let up: f64 = storage.iter().map(|r| r.upper_limit).sum();
        let dn: f64 = storage.iter().map(|r| r.lower_limit).sum();
        let steps = horizon as f64 * step_time / charge_scale;
        SocReach {
            max_drop: (up * steps).max(0.0),
            max_rise: (-dn * steps).max(0.0),
        }
    }

    /// Reach accounting for ramp limits from each device's measured power:
    /// step `k` can move at most `(k+1)` ramp increments away from the
    /// clamped measurement before the box binds.
    pub fn ramp_aware(
        storage: &[(DeviceRating, f64)],
        charge_scale: f64,
        step_time: f64,
        horizon: usize,
    ) -> SocReach {
        let (lo, hi) = reachable_sum(storage, step_time, horizon);
        let per = step_time / charge_scale;
        SocReach {
            max_drop: (hi * per).max(0.0),
            max_rise: (-lo * per).max(0.0),
        }
    }
}

/// Range of `Σ_k p_k` reachable over the horizon under box and ramp limits,
/// starting from each device's clamped measured power. In watt·steps.
fn reachable_sum(storage: &[(DeviceRating, f64)], step_time: f64, horizon: usize) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for &(rating, measured) in storage {
        let pm = rating.clamp(measured);
        let r_step = rating.ramp_rate * step_time;
        for k in 0..horizon {
            let swing = (k + 1) as f64 * r_step;
            hi += (pm + swing).min(rating.upper_limit);
            lo += (pm - swing).max(rating.lower_limit);
        }
    }
    (lo, hi)
}

/// Pull the global charge set point as close as one horizon allows: move the
/// full distance when reachable, else saturate the available reach.
pub fn terminal_target(soc: f64, soc_global: f64, reach: &SocReach) -> f64 {
    if soc_global <= soc {
        soc - (soc - soc_global).min(reach.max_drop)
    } else {
        soc + (soc_global - soc).min(reach.max_rise)
    }
}

/// Closed-loop terminal set point: like [`terminal_target`] but defensive
/// about momentum. Two effects are layered on top of the raw desired
/// correction:
///
/// * **braking** — correcting a charge gap `G` joules at power `p` commits
///   the plant to roughly `p²/(2r)` more joules while ramping back down, so
///   the commanded average power is capped at `√(2·r·G)`; without the cap
///   the loop overshoots the set point and oscillates around it;
/// * **reachability** — the commanded sum is clamped into the range actually
///   reachable from the measured powers under ramp and box limits, so the
///   charge-balance equality can never make the QP infeasible.
///
/// Returns the terminal state of charge to hand to [`build_qp`].
pub fn approach_target(
    soc: f64,
    soc_global: f64,
    storage: &[(DeviceRating, f64)],
    charge_scale: f64,
    step_time: f64,
    horizon: usize,
) -> f64 {
    let dist = soc - soc_global;
    let gap_joules = charge_scale * dist.abs();
    let total_ramp: f64 = storage.iter().map(|(r, _)| r.ramp_rate).sum();
    let p_brake = (2.0 * total_ramp * gap_joules).sqrt();
    let e_full = charge_scale * dist / step_time;
    let e_braked = e_full.clamp(
        -(horizon as f64) * p_brake,
        horizon as f64 * p_brake,
    );
    let (lo, hi) = reachable_sum(storage, step_time, horizon);
    // Command strictly inside the reachable interval, for two reasons.
    // Round-off: converting the sum to a state of charge and back loses a
    // few ulps, each worth charge_scale/step_time watts. Conditioning: a
    // command AT the envelope pins every ramp row plus the charge equality
    // (one more active row than storage variables), and the optimizer has
    // to resolve a degenerate vertex. Backing off by a small fraction of
    // the interval keeps the equality compatible with an interior row set
    // at a negligible cost in approach speed.
    let margin = ((charge_scale / step_time) * f64::EPSILON * 4.0)
        .max(1e-3 * (hi - lo));
    let e_cmd = if lo + margin <= hi - margin {
        e_braked.clamp(lo + margin, hi - margin)
    } else {
        0.5 * (lo + hi)
    };
    (soc - e_cmd * step_time / charge_scale).clamp(0.0, 1.0)
}

/// Assemble the condensed tracking QP for one controller solve.
pub fn build_qp(instance: &MpcInstance) -> Result<QpProblem, BuildError> {
    let h = instance.horizon;
    if instance.forecast.len() != h {
        return Err(BuildError::HorizonMismatch {
            expected: h,
            got: instance.forecast.len(),
        });
    }
    for soc in [instance.soc, instance.soc_target] {
        if !(0.0..=1.0).contains(&soc) || !soc.is_finite() {
            return Err(BuildError::BadSoc { soc });
        }
    }
    let nd = instance.devices.len();
    let n = nd * h;

    // charge-balance right-hand side: Σ storage power = scale·Δq / T_s
    let required =
        instance.charge_scale * (instance.soc - instance.soc_target) / instance.step_time;
    let storage: Vec<(DeviceRating, f64)> = instance
        .devices
        .iter()
        .filter(|d| d.kind == DeviceKind::Storage)
        .map(|d| (d.rating, d.measured))
        .collect();
    let box_lo: f64 = storage
        .iter()
        .map(|(r, _)| h as f64 * r.lower_limit)
        .sum();
    let box_hi: f64 = storage
        .iter()
        .map(|(r, _)| h as f64 * r.upper_limit)
        .sum();
    if required < box_lo - 1e-9 * (1.0 + box_lo.abs()) || required > box_hi + 1e-9 * (1.0 + box_hi.abs()) {
        return Err(BuildError::InfeasibleTerminalSoc {
            required,
            reachable_lo: box_lo,
            reachable_hi: box_hi,
        });
    }

    // objective: tracking couples all devices within a step
    let mut hessian = DMatrix::<f64>::zeros(n, n);
    let mut linear = DVector::<f64>::zeros(n);
    let mut constant = 0.0;
    for k in 0..h {
        let l = instance.forecast[k];
        for d1 in 0..nd {
            for d2 in 0..nd {
                hessian[(d1 * h + k, d2 * h + k)] += 2.0;
            }
        }
        for d in 0..nd {
            linear[d * h + k] += -2.0 * l;
        }
        constant += l * l;
    }
    let gamma = instance.cost_weight;
    if gamma > 0.0 {
        for (d, dev) in instance.devices.iter().enumerate() {
            for k in 0..h {
                let i = d * h + k;
                hessian[(i, i)] += 2.0 * gamma * dev.cost.c2;
                linear[i] += gamma * dev.cost.c1;
            }
        }
    }
    let eps = instance_epsilon(instance);
    for i in 0..n {
        hessian[(i, i)] += eps;
    }

    // one equality row: all storage variables sum to the required transfer
    let mut eq_matrix = DMatrix::<f64>::zeros(1, n);
    for (d, dev) in instance.devices.iter().enumerate() {
        if dev.kind == DeviceKind::Storage {
            for k in 0..h {
                eq_matrix[(0, d * h + k)] = 1.0;
            }
        }
    }
    let eq_rhs = DVector::from_element(1, required);

    // ramp rows: per device and step, an up and a down first-difference row
    let mi = 2 * n;
    let mut ineq_matrix = DMatrix::<f64>::zeros(mi, n);
    let mut ineq_rhs = DVector::<f64>::zeros(mi);
    let mut lower = DVector::<f64>::zeros(n);
    let mut upper = DVector::<f64>::zeros(n);
    for (d, dev) in instance.devices.iter().enumerate() {
        let r_step = dev.rating.ramp_rate * instance.step_time;
        let pm = dev.measured_clamped();
        for k in 0..h {
            let i = d * h + k;
            lower[i] = dev.rating.lower_limit;
            upper[i] = dev.rating.upper_limit;
            let up = 2 * i;
            let dn = 2 * i + 1;
            ineq_matrix[(up, i)] = 1.0;
            ineq_matrix[(dn, i)] = -1.0;
            if k == 0 {
                ineq_rhs[up] = r_step + pm;
                ineq_rhs[dn] = r_step - pm;
            } else {
                ineq_matrix[(up, i - 1)] = -1.0;
                ineq_matrix[(dn, i - 1)] = 1.0;
                ineq_rhs[up] = r_step;
                ineq_rhs[dn] = r_step;
            }
        }
    }

    Ok(QpProblem {
        hessian,
        linear,
        constant,
        eq_matrix,
        eq_rhs,
        ineq_matrix,
        ineq_rhs,
        lower,
        upper,
    })
}
