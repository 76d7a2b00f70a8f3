//! Consensus splitting of the tracking dispatch across device nodes.
//!
//! The tracking problem can be posed with a vector demand per step and a
//! positive-definite weight on demand deviations. [`reduce`] collapses that
//! form analytically to a scalar-weighted problem over total supply: for
//! supply `s` and total forecast `m`, the best weighted demand deviation
//! costs `α/2 (s − m)²` with `α = β / (1ᵀW⁻¹1)` — eliminating the demand
//! variables entirely.
//!
//! The reduced problem `min Σ_j C_j(x_j) + α/2 ‖Σ_j x_j − m‖²` is then split
//! per device. Each iteration:
//!
//! 1. an aggregator computes the shared correction
//!    `a = α/(α·n_x + ρ) · (m − Σ_j z_j)`,
//! 2. every node solves its proximal subproblem
//!    `x_j ← argmin_{χ_j} C_j(p) + ρ/2 ‖p − (x_j + a)‖²`
//!    over its own box, ramp, and charge-balance constraints,
//! 3. each node reports `z_j ← 2·x_j_new − x_j_old − a`.
//!
//! Node steps inside one iteration are independent of each other (the
//! aggregator is the only synchronization point); [`admm_iteration`] exposes
//! one full iteration as a pure step so a driver may run nodes in parallel.
//! Fixed points coincide with the minimizer of the reduced problem, which —
//! when the nodes are generated by [`distributed_from_instance`] — is
//! exactly the centralized condensed QP's minimizer.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{BatterySpec, DeviceKind, DeviceRating};
use crate::qp::{
    build::instance_epsilon, solve::ActiveSetSolver, BuildError, MpcInstance, QpProblem,
    QuadCost, SolveStatus, DEFAULT_MAX_ITER,
};

/// Tracking dispatch with a vector demand per step: deviations of the demand
/// vector from its forecast are charged `β/2 · dᵀWd`.
#[derive(Debug, Clone)]
pub struct WeightedTrackingProblem {
    pub beta: f64,
    /// Symmetric positive-definite weight on demand deviations.
    pub weight: DMatrix<f64>,
    /// Forecast demand vector per step; one entry per weight dimension.
    pub forecasts: Vec<DVector<f64>>,
    pub nodes: Vec<NodeSpec>,
}

/// Scalar-weighted equivalent produced by [`reduce`].
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub alpha: f64,
    /// Total forecast per step: `m_k = 1ᵀ l_k`.
    pub m: DVector<f64>,
    pub nodes: Vec<NodeSpec>,
}

/// One consensus participant.
#[derive(Debug, Clone)]
pub enum NodeSpec {
    Generator(GeneratorNodeSpec),
    Storage(EssNodeSpec),
}

impl NodeSpec {
    pub fn horizon(&self) -> usize {
        match self {
            NodeSpec::Generator(g) => g.horizon,
            NodeSpec::Storage(s) => s.horizon,
        }
    }
}

/// Generation node: several units sharing one aggregate power profile by
/// fixed droop fractions. The subproblem constrains the aggregate; member
/// profiles are recovered afterwards as `θ_j · p`.
#[derive(Debug, Clone)]
pub struct GeneratorNodeSpec {
    /// Droop shares θ_j; positive, summing to 1.
    pub shares: Vec<f64>,
    /// Aggregate per-step operating cost.
    pub cost: QuadCost,
    pub lower: f64,
    pub upper: f64,
    /// Largest allowed step-to-step change of the aggregate, watts.
    pub ramp_step: f64,
    /// Aggregate power measured before the solve; when present the first
    /// ramp row differences against it instead of against zero.
    pub measured: Option<f64>,
    pub horizon: usize,
}

impl GeneratorNodeSpec {
    /// Droop form: the aggregate may swing up to `rated/θ̄` where `θ̄` is the
    /// largest share (the most loaded unit saturates first), with a per-step
    /// ramp of `ramp_fraction · rated/θ̄` and a floor at zero.
    pub fn from_droop(
        shares: Vec<f64>,
        cost: QuadCost,
        rated_power: f64,
        ramp_fraction: f64,
        horizon: usize,
    ) -> Result<Self, AdmmError> {
        if shares.is_empty() || shares.iter().any(|&t| !(t > 0.0)) {
            return Err(AdmmError::BadDroop {
                detail: format!("shares must be positive, got {shares:?}"),
            });
        }
        let total: f64 = shares.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AdmmError::BadDroop {
                detail: format!("shares must sum to 1, got {total}"),
            });
        }
        let top = shares.iter().cloned().fold(f64::MIN, f64::max);
        Ok(GeneratorNodeSpec {
            shares,
            cost,
            lower: 0.0,
            upper: rated_power / top,
            ramp_step: ramp_fraction * rated_power / top,
            measured: None,
            horizon,
        })
    }

    /// Split the converged aggregate profile into per-member profiles.
    pub fn member_profiles(&self, aggregate: &DVector<f64>) -> Vec<DVector<f64>> {
        self.shares.iter().map(|&t| aggregate * t).collect()
    }
}

/// Storage node: a pure projection subproblem whose charge-balance equality
/// pins the horizon's total transfer.
#[derive(Debug, Clone)]
pub struct EssNodeSpec {
    pub lower: f64,
    pub upper: f64,
    pub ramp_step: f64,
    pub measured: Option<f64>,
    /// Required `Σ_k p_k` over the horizon, watts: positive discharges.
    pub transfer_sum: f64,
    pub cost: QuadCost,
    pub horizon: usize,
}

impl EssNodeSpec {
    /// Build from battery electricals and converter limits: the transfer sum
    /// is `charge_scale · (q₀ − q_h) / T_s`.
    pub fn from_battery(
        batt: &BatterySpec,
        limits: DeviceRating,
        step_time: f64,
        soc: f64,
        soc_target: f64,
        horizon: usize,
    ) -> EssNodeSpec {
        EssNodeSpec {
            lower: limits.lower_limit,
            upper: limits.upper_limit,
            ramp_step: limits.ramp_rate * step_time,
            measured: None,
            transfer_sum: batt.charge_scale() * (soc - soc_target) / step_time,
            cost: QuadCost::ZERO,
            horizon,
        }
    }
}

/// Per-node consensus variables. The invariant `z = x + u` holds after every
/// full iteration.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub z: DVector<f64>,
}

impl NodeState {
    fn zeros(h: usize) -> NodeState {
        NodeState {
            x: DVector::zeros(h),
            u: DVector::zeros(h),
            z: DVector::zeros(h),
        }
    }
}

/// Full consensus state between iterations.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub nodes: Vec<NodeState>,
    pub rho: f64,
    pub iteration: usize,
    /// Last aggregator signal `a`.
    pub aggregator: DVector<f64>,
}

/// Residuals after one iteration, in absolute units; convergence compares
/// them against `tol · scale` with `scale = max(1, ‖m‖∞, max_j ‖x_j‖∞)`.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iteration: usize,
    /// Worst per-node consensus mismatch `‖x_j − y_j‖∞`.
    pub primal: f64,
    /// Supply-side mismatch `‖Σ_j x_j − Σ_j y_j‖∞`.
    pub aggregate: f64,
    /// Dual residual `ρ · max_j ‖y_j − y_jᵖʳᵉᵛ‖∞`.
    pub dual: f64,
}

impl IterationStats {
    pub fn worst(&self) -> f64 {
        self.primal.max(self.aggregate).max(self.dual)
    }
}

/// Result of a consensus run.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Converged (or best) per-node power profiles.
    pub profiles: Vec<DVector<f64>>,
    pub state: AdmmState,
    pub trace: Vec<IterationStats>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Error)]
pub enum AdmmError {
    #[error("demand weight matrix is singular or not positive definite")]
    SingularWeight,
    #[error("node {node} subproblem is infeasible")]
    NodeInfeasible { node: usize },
    #[error("node horizons disagree: expected {expected}, node {node} has {got}")]
    HorizonMismatch {
        expected: usize,
        node: usize,
        got: usize,
    },
    #[error("invalid droop shares: {detail}")]
    BadDroop { detail: String },
}

/// Collapse the vector-demand tracking term to its scalar equivalent:
/// `m_k = 1ᵀ l_k` and `α = β / (1ᵀW⁻¹1)`. The minimizers of the reduced
/// problem are exactly the supply part of the original's minimizers.
pub fn reduce(problem: &WeightedTrackingProblem) -> Result<ReducedProblem, AdmmError> {
    let n_l = problem.weight.nrows();
    if problem.weight.ncols() != n_l || n_l == 0 || !(problem.beta > 0.0) {
        return Err(AdmmError::SingularWeight);
    }
    let ones = DVector::from_element(n_l, 1.0);
    let solved = problem
        .weight
        .clone()
        .lu()
        .solve(&ones)
        .ok_or(AdmmError::SingularWeight)?;
    let denom = ones.dot(&solved);
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(AdmmError::SingularWeight);
    }
    let alpha = problem.beta / denom;
    let m = DVector::from_iterator(
        problem.forecasts.len(),
        problem.forecasts.iter().map(|l| l.sum()),
    );
    Ok(ReducedProblem {
        alpha,
        m,
        nodes: problem.nodes.clone(),
    })
}

/// Shared correction broadcast to every node:
/// `a = α/(α·n_x + ρ) · (m − Σ_j z_j)`, componentwise over the horizon.
pub fn aggregator_step(
    state: &AdmmState,
    m: &DVector<f64>,
    alpha: f64,
    n_x: usize,
) -> DVector<f64> {
    let mut shortfall = m.clone();
    for node in &state.nodes {
        shortfall -= &node.z;
    }
    shortfall * (alpha / (alpha * n_x as f64 + state.rho))
}

/// Proximal subproblem shared by both node kinds: minimize
/// `c2 Σp² + c1 Σp + ρ/2 ‖p − target‖²` over box, ramp rows (first step
/// differenced against the measured power when given), and an optional
/// total-transfer equality.
fn node_qp(
    horizon: usize,
    cost: QuadCost,
    rho: f64,
    target: &DVector<f64>,
    lower: f64,
    upper: f64,
    ramp_step: f64,
    measured: Option<f64>,
    transfer: Option<f64>,
) -> QpProblem {
    let h = horizon;
    let mut hessian = DMatrix::<f64>::zeros(h, h);
    let mut linear = DVector::<f64>::zeros(h);
    for k in 0..h {
        hessian[(k, k)] = 2.0 * cost.c2 + rho;
        linear[k] = cost.c1 - rho * target[k];
    }
    let constant = 0.5 * rho * target.dot(target);
    let (eq_matrix, eq_rhs) = match transfer {
        Some(e) => (DMatrix::from_element(1, h, 1.0), DVector::from_element(1, e)),
        None => (DMatrix::zeros(0, h), DVector::zeros(0)),
    };
    let mut ineq_matrix = DMatrix::<f64>::zeros(2 * h, h);
    let mut ineq_rhs = DVector::<f64>::zeros(2 * h);
    let pm = measured.map(|p| p.clamp(lower, upper)).unwrap_or(0.0);
    for k in 0..h {
        let up = 2 * k;
        let dn = 2 * k + 1;
        ineq_matrix[(up, k)] = 1.0;
        ineq_matrix[(dn, k)] = -1.0;
        if k == 0 {
            let fold = if measured.is_some() { pm } else { 0.0 };
            ineq_rhs[up] = ramp_step + fold;
            ineq_rhs[dn] = ramp_step - fold;
        } else {
            ineq_matrix[(up, k - 1)] = -1.0;
            ineq_matrix[(dn, k - 1)] = 1.0;
            ineq_rhs[up] = ramp_step;
            ineq_rhs[dn] = ramp_step;
        }
    }
    QpProblem {
        hessian,
        linear,
        constant,
        eq_matrix,
        eq_rhs,
        ineq_matrix,
        ineq_rhs,
        lower: DVector::from_element(h, lower),
        upper: DVector::from_element(h, upper),
    }
}

fn prox_solve(
    qp: &QpProblem,
    solver: &mut ActiveSetSolver,
    node: usize,
) -> Result<DVector<f64>, AdmmError> {
    let tol = 1e-9 * (1.0 + qp.linear.amax());
    let sol = solver.solve(qp, tol, DEFAULT_MAX_ITER);
    match sol.status {
        SolveStatus::Infeasible => Err(AdmmError::NodeInfeasible { node }),
        _ => Ok(sol.x),
    }
}

/// One generation-node iteration: proximal solve plus the consensus report
/// `z_new = 2·x_new − x_prev − a`. Returns `(x_new, z_new)`.
pub fn generator_node_step(
    spec: &GeneratorNodeSpec,
    x_prev: &DVector<f64>,
    a: &DVector<f64>,
    rho: f64,
) -> Result<(DVector<f64>, DVector<f64>), AdmmError> {
    let target = x_prev + a;
    let qp = node_qp(
        spec.horizon,
        spec.cost,
        rho,
        &target,
        spec.lower,
        spec.upper,
        spec.ramp_step,
        spec.measured,
        None,
    );
    let x_new = prox_solve(&qp, &mut ActiveSetSolver::new(), 0)?;
    let z_new = consensus_report(&x_new, x_prev, a);
    Ok((x_new, z_new))
}

/// One storage-node iteration; same contract as [`generator_node_step`].
pub fn ess_node_step(
    spec: &EssNodeSpec,
    x_prev: &DVector<f64>,
    a: &DVector<f64>,
    rho: f64,
) -> Result<(DVector<f64>, DVector<f64>), AdmmError> {
    let target = x_prev + a;
    let qp = node_qp(
        spec.horizon,
        spec.cost,
        rho,
        &target,
        spec.lower,
        spec.upper,
        spec.ramp_step,
        spec.measured,
        Some(spec.transfer_sum),
    );
    let x_new = prox_solve(&qp, &mut ActiveSetSolver::new(), 0)?;
    let z_new = consensus_report(&x_new, x_prev, a);
    Ok((x_new, z_new))
}

/// The consensus report `z = 2·x_new − x_prev − a`, kept in one place so the
/// bookkeeping identity is computed the same way everywhere.
fn consensus_report(
    x_new: &DVector<f64>,
    x_prev: &DVector<f64>,
    a: &DVector<f64>,
) -> DVector<f64> {
    x_new.scale(2.0) - x_prev - a
}

/// Run one full consensus iteration in place, reusing warm-started node
/// solvers. Node subproblems are mutually independent; this driver runs them
/// serially.
pub fn admm_iteration(
    problem: &ReducedProblem,
    state: &mut AdmmState,
    solvers: &mut [ActiveSetSolver],
    y_prev: &mut [DVector<f64>],
) -> Result<IterationStats, AdmmError> {
    let n_x = problem.nodes.len();
    let a = aggregator_step(state, &problem.m, problem.alpha, n_x);
    let rho = state.rho;
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut x_sum = DVector::<f64>::zeros(problem.m.len());
    let mut y_sum = DVector::<f64>::zeros(problem.m.len());
    for (j, node) in problem.nodes.iter().enumerate() {
        let st = &mut state.nodes[j];
        let target = &st.x + &a;
        let qp = match node {
            NodeSpec::Generator(g) => node_qp(
                g.horizon, g.cost, rho, &target, g.lower, g.upper, g.ramp_step, g.measured,
                None,
            ),
            NodeSpec::Storage(s) => node_qp(
                s.horizon,
                s.cost,
                rho,
                &target,
                s.lower,
                s.upper,
                s.ramp_step,
                s.measured,
                Some(s.transfer_sum),
            ),
        };
        let x_new = prox_solve(&qp, &mut solvers[j], j)?;
        let z_new = consensus_report(&x_new, &st.x, &a);
        let y_new = &st.z + &a;
        primal = primal.max((&x_new - &y_new).amax());
        dual = dual.max(rho * (&y_new - &y_prev[j]).amax());
        x_sum += &x_new;
        y_sum += &y_new;
        y_prev[j] = y_new;
        st.u = &z_new - &x_new;
        st.x = x_new;
        st.z = z_new;
    }
    state.aggregator = a;
    state.iteration += 1;
    Ok(IterationStats {
        iteration: state.iteration,
        primal,
        aggregate: (x_sum - y_sum).amax(),
        dual,
    })
}

/// Consensus driver that keeps node solver warm starts and the consensus
/// state across calls, so a receding-horizon caller re-converges in a few
/// iterations per period.
#[derive(Debug, Default)]
pub struct AdmmDriver {
    solvers: Vec<ActiveSetSolver>,
    carry: Option<Vec<NodeState>>,
}

impl AdmmDriver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forget warm starts and carried state.
    pub fn reset(&mut self) {
        self.solvers.clear();
        self.carry = None;
    }

    pub fn run(
        &mut self,
        problem: &ReducedProblem,
        rho: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<AdmmOutcome, AdmmError> {
        let h = problem.m.len();
        for (j, node) in problem.nodes.iter().enumerate() {
            if node.horizon() != h {
                return Err(AdmmError::HorizonMismatch {
                    expected: h,
                    node: j,
                    got: node.horizon(),
                });
            }
        }
        let n_x = problem.nodes.len();
        if self.solvers.len() != n_x {
            self.solvers = (0..n_x).map(|_| ActiveSetSolver::new()).collect();
        }
        let nodes = match self.carry.take() {
            Some(prev) if prev.len() == n_x && prev.iter().all(|s| s.x.len() == h) => prev,
            _ => (0..n_x).map(|_| NodeState::zeros(h)).collect(),
        };
        let mut state = AdmmState {
            nodes,
            rho,
            iteration: 0,
            aggregator: DVector::zeros(h),
        };
        let mut y_prev: Vec<DVector<f64>> =
            state.nodes.iter().map(|s| s.z.clone()).collect();
        let mut trace = Vec::new();
        let mut converged = false;
        for _ in 0..max_iter {
            let stats = admm_iteration(problem, &mut state, &mut self.solvers, &mut y_prev)?;
            let scale = state
                .nodes
                .iter()
                .fold(problem.m.amax().max(1.0), |s, n| s.max(n.x.amax()));
            let done = stats.worst() <= tol * scale;
            trace.push(stats);
            if done {
                converged = true;
                break;
            }
        }
        let profiles: Vec<DVector<f64>> = state.nodes.iter().map(|s| s.x.clone()).collect();
        let iterations = state.iteration;
        self.carry = Some(state.nodes.clone());
        Ok(AdmmOutcome {
            profiles,
            state,
            trace,
            converged,
            iterations,
        })
    }
}

/// One-shot cold-started consensus run.
pub fn run_admm(
    problem: &ReducedProblem,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<AdmmOutcome, AdmmError> {
    AdmmDriver::new().run(problem, rho, tol, max_iter)
}

/// Map a centralized controller instance onto consensus nodes so that the
/// consensus fixed point is the centralized minimizer:
///
/// * the tracking weight becomes `α = 2` (the centralized objective charges
///   `(Σp − l)²`, i.e. `α/2` with `α = 2`);
/// * every node inherits its device's box, ramp rows with the measured-power
///   fold, and — for storage — the same charge-balance equality;
/// * node costs carry the centralized cost weight and the same
///   strict-convexity pad, so both problems share one unique minimizer.
pub fn distributed_from_instance(instance: &MpcInstance) -> Result<ReducedProblem, BuildError> {
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
    let eps = instance_epsilon(instance);
    let gamma = instance.cost_weight;
    let transfer =
        instance.charge_scale * (instance.soc - instance.soc_target) / instance.step_time;
    let nodes: Vec<NodeSpec> = instance
        .devices
        .iter()
        .map(|dev| {
            let cost = QuadCost {
                c2: gamma * dev.cost.c2 + 0.5 * eps,
                c1: gamma * dev.cost.c1,
            };
            let ramp_step = dev.rating.ramp_rate * instance.step_time;
            let measured = Some(dev.measured_clamped());
            match dev.kind {
                DeviceKind::Generator => NodeSpec::Generator(GeneratorNodeSpec {
                    shares: vec![1.0],
                    cost,
                    lower: dev.rating.lower_limit,
                    upper: dev.rating.upper_limit,
                    ramp_step,
                    measured,
                    horizon: h,
                }),
                DeviceKind::Storage => NodeSpec::Storage(EssNodeSpec {
                    lower: dev.rating.lower_limit,
                    upper: dev.rating.upper_limit,
                    ramp_step,
                    measured,
                    transfer_sum: transfer,
                    cost,
                    horizon: h,
                }),
            }
        })
        .collect();
    let storage_lo: f64 = nodes
        .iter()
        .filter_map(|n| match n {
            NodeSpec::Storage(s) => Some(h as f64 * s.lower),
            _ => None,
        })
        .sum();
    let storage_hi: f64 = nodes
        .iter()
        .filter_map(|n| match n {
            NodeSpec::Storage(s) => Some(h as f64 * s.upper),
            _ => None,
        })
        .sum();
    if transfer < storage_lo - 1e-9 * (1.0 + storage_lo.abs())
        || transfer > storage_hi + 1e-9 * (1.0 + storage_hi.abs())
    {
        return Err(BuildError::InfeasibleTerminalSoc {
            required: transfer,
            reachable_lo: storage_lo,
            reachable_hi: storage_hi,
        });
    }
    Ok(ReducedProblem {
        alpha: 2.0,
        m: DVector::from_iterator(h, instance.forecast.values().iter().copied()),
        nodes,
    })
}
