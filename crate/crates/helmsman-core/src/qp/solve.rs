//! Dense active-set QP solver with warm starts.
//!
//! The solver iterates on a working set of tentatively active rows:
//!
//! 1. solve the equality-constrained subproblem for the current working set
//!    (a dual-regularized KKT system, which stays solvable even when the
//!    working set picks up dependent rows),
//! 2. drop the row with the most negative multiplier, or — when all
//!    multipliers are acceptable — add the most violated row,
//! 3. when nothing is violated, re-solve the KKT system exactly on an
//!    independent subset of the working set ("polish") and report KKT
//!    residuals measured against the original data.
//!
//! Infeasibility is never inferred from residual divergence. When progress
//! stalls or the iteration budget runs out with violations outstanding, a
//! feasibility subproblem (least-squares slacks on every equality/inequality
//! row, boxes kept hard) decides between `Infeasible` and `MaxIter`.
//!
//! A simple anti-cycling guard switches both selection rules to
//! lowest-index (Bland) order if the same row keeps re-entering.
//!
//! Tolerance semantics: `tol` is an absolute ceiling on the worst KKT
//! residual (stationarity, primal feasibility, complementary slackness).
//! Problems posed in watts carry gradients of order 1e7, so callers scale
//! `tol` with their data, e.g. `1e-8 · (1 + ‖f‖∞)`.

use nalgebra::{DMatrix, DVector};

use super::problem::{QpProblem, QpSolution, SolveStatus};

/// Default absolute KKT tolerance for unit-scale problems.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration ceiling (working-set changes plus KKT solves).
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Identity of one inequality row: a general row, or one side of a
/// variable's box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintId {
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

/// One-shot solve with a cold start.
pub fn solve(qp: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
    ActiveSetSolver::new().solve(qp, tol, max_iter)
}

/// Solver handle that remembers the last optimal active set and seeds the
/// next solve with it. Receding-horizon callers re-solve nearly identical
/// problems; the warm set usually survives verbatim, making the common case
/// a single KKT factorization.
#[derive(Debug, Clone, Default)]
pub struct ActiveSetSolver {
    warm: Vec<ConstraintId>,
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Discard the remembered active set.
    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve(&mut self, qp: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
        if let Err(shape) = qp.check_shape() {
            // Inverted boxes are the one malformation with a meaningful
            // verdict: the feasible set is empty by inspection.
            if matches!(shape, super::problem::QpShapeError::InvertedBox { .. }) {
                return QpSolution {
                    x: DVector::zeros(qp.num_vars()),
                    objective: f64::INFINITY,
                    status: SolveStatus::Infeasible,
                    kkt_residual: f64::INFINITY,
                    iterations: 0,
                };
            }
            panic!("malformed QP handed to solver: {shape}");
        }
        let ws = Workspace::new(qp);
        let warm: Vec<ConstraintId> = self
            .warm
            .iter()
            .copied()
            .filter(|id| ws.id_valid(*id))
            .collect();
        let (solution, final_set) = iterate(&ws, warm, tol, max_iter, true);
        if solution.status == SolveStatus::Optimal {
            self.warm = final_set;
        } else {
            self.warm.clear();
        }
        solution
    }
}

// ---------------------------------------------------------------------------
// internal machinery
// ---------------------------------------------------------------------------

/// Problem view with ∞-norm-normalized constraint rows. Normalization keeps
/// the add/drop thresholds meaningful across mixed row scales; all residuals
/// reported outward are computed against the original data.
struct Workspace<'a> {
    qp: &'a QpProblem,
    n: usize,
    meq: usize,
    /// 1/‖row‖∞ for each equality row (1.0 for all-zero rows).
    eq_scale: Vec<f64>,
    /// 1/‖row‖∞ for each general inequality row.
    ineq_scale: Vec<f64>,
    /// Every addable inequality id, in deterministic order.
    ids: Vec<ConstraintId>,
    /// Dual regularization for iteration KKT solves.
    delta: f64,
    /// 1 + worst |rhs| in original units; scales feasibility verdicts.
    rhs_scale: f64,
}

impl<'a> Workspace<'a> {
    fn new(qp: &'a QpProblem) -> Self {
        let n = qp.num_vars();
        let meq = qp.num_eq();
        let inv_norm = |row_max: f64| if row_max > 0.0 { 1.0 / row_max } else { 1.0 };
        let eq_scale: Vec<f64> = (0..meq)
            .map(|i| inv_norm((0..n).fold(0.0_f64, |m, j| m.max(qp.eq_matrix[(i, j)].abs()))))
            .collect();
        let ineq_scale: Vec<f64> = (0..qp.num_ineq())
            .map(|i| inv_norm((0..n).fold(0.0_f64, |m, j| m.max(qp.ineq_matrix[(i, j)].abs()))))
            .collect();
        let mut ids = Vec::new();
        for i in 0..qp.num_ineq() {
            ids.push(ConstraintId::Ineq(i));
        }
        for j in 0..n {
            if qp.lower[j].is_finite() {
                ids.push(ConstraintId::Lower(j));
            }
            if qp.upper[j].is_finite() {
                ids.push(ConstraintId::Upper(j));
            }
        }
        let mut rhs_scale: f64 = 1.0;
        for v in qp.eq_rhs.iter().chain(qp.ineq_rhs.iter()) {
            rhs_scale = rhs_scale.max(v.abs());
        }
        for v in qp.lower.iter().chain(qp.upper.iter()) {
            if v.is_finite() {
                rhs_scale = rhs_scale.max(v.abs());
            }
        }
        Workspace {
            delta: 1e-11 * (1.0 + qp.hessian.amax()),
            qp,
            n,
            meq,
            eq_scale,
            ineq_scale,
            ids,
            rhs_scale,
        }
    }

    fn id_valid(&self, id: ConstraintId) -> bool {
        match id {
            ConstraintId::Ineq(i) => i < self.qp.num_ineq(),
            ConstraintId::Lower(j) => j < self.n && self.qp.lower[j].is_finite(),
            ConstraintId::Upper(j) => j < self.n && self.qp.upper[j].is_finite(),
        }
    }

    /// Normalized row value at `x`.
    fn value(&self, id: ConstraintId, x: &DVector<f64>) -> f64 {
        match id {
            ConstraintId::Ineq(i) => {
                let mut acc = 0.0;
                for j in 0..self.n {
                    acc += self.qp.ineq_matrix[(i, j)] * x[j];
                }
                acc * self.ineq_scale[i]
            }
            ConstraintId::Lower(j) => -x[j],
            ConstraintId::Upper(j) => x[j],
        }
    }

    /// Normalized right-hand side.
    fn rhs(&self, id: ConstraintId) -> f64 {
        match id {
            ConstraintId::Ineq(i) => self.qp.ineq_rhs[i] * self.ineq_scale[i],
            ConstraintId::Lower(j) => -self.qp.lower[j],
            ConstraintId::Upper(j) => self.qp.upper[j],
        }
    }

    /// Write the normalized row coefficients into `out`.
    fn write_row(&self, id: ConstraintId, out: &mut [f64]) {
        out.fill(0.0);
        match id {
            ConstraintId::Ineq(i) => {
                for j in 0..self.n {
                    out[j] = self.qp.ineq_matrix[(i, j)] * self.ineq_scale[i];
                }
            }
            ConstraintId::Lower(j) => out[j] = -1.0,
            ConstraintId::Upper(j) => out[j] = 1.0,
        }
    }

    /// Solve the KKT system for the working set, with dual regularization
    /// `delta` (pass 0 for the exact polish solve). Returns `(x, λ_eq, λ_w)`.
    fn kkt_solve(
        &self,
        w: &[ConstraintId],
        delta: f64,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let (n, meq) = (self.n, self.meq);
        let dim = n + meq + w.len();
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        m.view_mut((0, 0), (n, n)).copy_from(&self.qp.hessian);
        for i in 0..n {
            rhs[i] = -self.qp.linear[i];
        }
        for e in 0..meq {
            for j in 0..n {
                let v = self.qp.eq_matrix[(e, j)] * self.eq_scale[e];
                m[(n + e, j)] = v;
                m[(j, n + e)] = v;
            }
            rhs[n + e] = self.qp.eq_rhs[e] * self.eq_scale[e];
        }
        let mut row = vec![0.0; n];
        for (k, &id) in w.iter().enumerate() {
            self.write_row(id, &mut row);
            for j in 0..n {
                m[(n + meq + k, j)] = row[j];
                m[(j, n + meq + k)] = row[j];
            }
            rhs[n + meq + k] = self.rhs(id);
        }
        if delta > 0.0 {
            for k in 0..(meq + w.len()) {
                m[(n + k, n + k)] = -delta;
            }
        }
        let sol = m.lu().solve(&rhs)?;
        let x = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let lam_eq = DVector::from_iterator(meq, (0..meq).map(|i| sol[n + i]));
        let lam_w = DVector::from_iterator(w.len(), (0..w.len()).map(|i| sol[n + meq + i]));
        Some((x, lam_eq, lam_w))
    }

    /// Worst KKT residual in original units: stationarity of the Lagrangian,
    /// primal feasibility over every constraint, complementary slackness of
    /// the active multipliers.
    fn residuals(
        &self,
        x: &DVector<f64>,
        w: &[ConstraintId],
        lam_eq: &DVector<f64>,
        lam_w: &DVector<f64>,
    ) -> f64 {
        let mut grad = &self.qp.hessian * x + &self.qp.linear;
        for e in 0..self.meq {
            let lam = lam_eq[e] * self.eq_scale[e];
            for j in 0..self.n {
                grad[j] += self.qp.eq_matrix[(e, j)] * lam;
            }
        }
        let mut comp: f64 = 0.0;
        let mut row = vec![0.0; self.n];
        for (k, &id) in w.iter().enumerate() {
            self.write_row(id, &mut row);
            for j in 0..self.n {
                grad[j] += row[j] * lam_w[k];
            }
            let slack = self.rhs(id) - self.value(id, x);
            // relative complementarity: an active row carries whatever
            // multiplier the geometry demands, so the product is normalized
            // by the multiplier — a huge λ on a round-off slack is clean,
            // a modest λ on a genuinely open row is not
            comp = comp.max((lam_w[k] * slack).abs() / (1.0 + lam_w[k].abs()));
        }
        grad.amax().max(self.qp.max_violation(x)).max(comp)
    }
}

enum PolishOutcome {
    Done(QpSolution, Vec<ConstraintId>),
    /// The exact solve exposed a negative multiplier; drop this row.
    Drop(ConstraintId),
}

/// Exact (unregularized) end-game solve on an independent subset of the
/// working set. Dependent rows are filtered greedily with modified
/// Gram-Schmidt; equality rows take precedence.
fn polish(
    ws: &Workspace<'_>,
    w: &[ConstraintId],
    tol: f64,
    iterations: usize,
    forgive_negative: bool,
) -> PolishOutcome {
    let n = ws.n;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut push_if_independent = |row: &mut Vec<f64>| -> bool {
        for q in &basis {
            let dot: f64 = q.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            for (r, qv) in row.iter_mut().zip(q.iter()) {
                *r -= dot * qv;
            }
        }
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for v in row.iter_mut() {
                *v /= norm;
            }
            basis.push(std::mem::take(row));
            true
        } else {
            false
        }
    };
    let mut scratch = vec![0.0; n];
    for e in 0..ws.meq {
        for j in 0..n {
            scratch[j] = ws.qp.eq_matrix[(e, j)] * ws.eq_scale[e];
        }
        let mut row = scratch.clone();
        push_if_independent(&mut row);
        // dependent equality rows are either redundant or inconsistent;
        // the feasibility verdict comes from the residual check below
    }
    let mut kept: Vec<ConstraintId> = Vec::new();
    for &id in w {
        ws.write_row(id, &mut scratch);
        let mut row = scratch.clone();
        if push_if_independent(&mut row) {
            kept.push(id);
        }
    }

    match ws.kkt_solve(&kept, 0.0) {
        Some((x, lam_eq, lam_w)) => {
            if !forgive_negative {
                let mut worst: Option<(usize, f64)> = None;
                for k in 0..kept.len() {
                    let lam = lam_w[k];
                    if lam < -1e-9 * (1.0 + lam_w.amax()) {
                        if worst.map_or(true, |(_, v)| lam < v) {
                            worst = Some((k, lam));
                        }
                    }
                }
                if let Some((k, _)) = worst {
                    return PolishOutcome::Drop(kept[k]);
                }
            }
            let kkt_residual = ws.residuals(&x, &kept, &lam_eq, &lam_w);
            let status = if kkt_residual <= tol {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            };
            let objective = ws.qp.objective(&x);
            PolishOutcome::Done(
                QpSolution {
                    x,
                    objective,
                    status,
                    kkt_residual,
                    iterations,
                },
                kept,
            )
        }
        // Exact system refused even on an independent subset; fall back to a
        // regularized solve and report honestly measured residuals.
        None => match ws.kkt_solve(&kept, ws.delta) {
            Some((x, lam_eq, lam_w)) => {
                let kkt_residual = ws.residuals(&x, &kept, &lam_eq, &lam_w);
                let status = if kkt_residual <= tol {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::MaxIter
                };
                let objective = ws.qp.objective(&x);
                PolishOutcome::Done(
                    QpSolution {
                        x,
                        objective,
                        status,
                        kkt_residual,
                        iterations,
                    },
                    kept,
                )
            }
            None => PolishOutcome::Done(
                QpSolution {
                    x: DVector::zeros(n),
                    objective: f64::NAN,
                    status: SolveStatus::MaxIter,
                    kkt_residual: f64::INFINITY,
                    iterations,
                },
                kept,
            ),
        },
    }
}

/// Main working-set loop. Returns the solution and, when optimal, the final
/// active set for warm-starting the next solve.
fn iterate(
    ws: &Workspace<'_>,
    mut w: Vec<ConstraintId>,
    tol: f64,
    max_iter: usize,
    allow_phase1: bool,
) -> (QpSolution, Vec<ConstraintId>) {
    w.sort_unstable();
    w.dedup();
    // ordinal lookup for the add-counter (anti-cycling)
    let ordinal = |id: ConstraintId| ws.ids.binary_search(&id).unwrap_or(usize::MAX);
    let mut add_counts = vec![0u32; ws.ids.len()];
    let mut bland = false;
    let mut iterations = 0usize;
    let mut polish_drops = 0usize;
    let mut best_viol = f64::INFINITY;
    let mut stall = 0usize;
    let mut cooldown = 0usize;
    let mut best_iterate: Option<(f64, DVector<f64>)> = None;
    let mut delta = ws.delta;

    loop {
        if iterations >= max_iter {
            return exhaust(ws, w, tol, iterations, allow_phase1, best_iterate);
        }
        let solved = ws.kkt_solve(&w, delta);
        iterations += 1;
        let (x, _lam_eq, lam_w) = match solved {
            Some(t) => t,
            None => {
                // regularized system should not be singular; back off harder
                delta *= 100.0;
                if delta > 1e6 * ws.delta {
                    if let Some(dropped) = w.pop() {
                        let _ = dropped;
                        delta = ws.delta;
                        continue;
                    }
                    return exhaust(ws, w, tol, iterations, allow_phase1, best_iterate);
                }
                continue;
            }
        };
        delta = ws.delta;

        // drop phase: most negative multiplier leaves (lowest index under Bland)
        let lam_scale = 1.0 + lam_w.amax();
        let mut drop_idx: Option<usize> = None;
        for k in 0..w.len() {
            if lam_w[k] < -1e-9 * lam_scale {
                let take = match drop_idx {
                    None => true,
                    Some(prev) => {
                        if bland {
                            false // first (lowest position) already chosen
                        } else {
                            lam_w[k] < lam_w[prev]
                        }
                    }
                };
                if take {
                    drop_idx = Some(k);
                }
                if bland && drop_idx.is_some() {
                    break;
                }
            }
        }
        if let Some(k) = drop_idx {
            w.remove(k);
            continue;
        }

        // add phase: scan for violated rows outside the working set
        let mut worst: Option<(ConstraintId, f64)> = None;
        for &id in &ws.ids {
            if w.contains(&id) {
                continue;
            }
            let v = ws.value(id, &x) - ws.rhs(id);
            if v > 1e-9 * (1.0 + ws.rhs(id).abs()) {
                match worst {
                    None => worst = Some((id, v)),
                    Some((_, wv)) if !bland && v > wv => worst = Some((id, v)),
                    _ => {}
                }
                if bland {
                    break; // lowest index wins outright
                }
            }
        }

        match worst {
            None => match polish(ws, &w, tol, iterations, polish_drops > 50) {
                PolishOutcome::Done(sol, kept) => {
                    // A polished point that still violates constraints means
                    // the working set held inconsistent rows (dependent rows
                    // were filtered, the survivors disagree): either the
                    // problem is infeasible or the geometry is degenerate.
                    // The feasibility subproblem arbitrates.
                    if sol.status != SolveStatus::Optimal
                        && allow_phase1
                        && ws.qp.max_violation(&sol.x) > 1e-6 * ws.rhs_scale
                    {
                        if let Some(infeasible) = phase1_verdict(ws, sol.iterations) {
                            return (infeasible, Vec::new());
                        }
                    }
                    return (sol, kept);
                }
                PolishOutcome::Drop(id) => {
                    polish_drops += 1;
                    w.retain(|&m| m != id);
                    continue;
                }
            },
            Some((id, v)) => {
                // stall bookkeeping on the violation trend
                if v < best_viol * (1.0 - 1e-12) {
                    best_viol = v;
                    stall = 0;
                } else {
                    stall += 1;
                }
                if best_iterate.as_ref().map_or(true, |(bv, _)| v < *bv) {
                    best_iterate = Some((v, x.clone()));
                }
                if allow_phase1 && stall > 50 && cooldown == 0 {
                    if let Some(infeasible) = phase1_verdict(ws, iterations) {
                        return (infeasible, Vec::new());
                    }
                    cooldown = 200;
                    stall = 0;
                } else if cooldown > 0 {
                    cooldown -= 1;
                }
                let ord = ordinal(id);
                if ord != usize::MAX {
                    add_counts[ord] += 1;
                    if add_counts[ord] > 8 {
                        bland = true;
                    }
                }
                w.push(id);
            }
        }
    }
}

/// Iteration budget exhausted. Decide between `Infeasible` (via the
/// feasibility subproblem) and `MaxIter` with the least-violating iterate.
fn exhaust(
    ws: &Workspace<'_>,
    w: Vec<ConstraintId>,
    tol: f64,
    iterations: usize,
    allow_phase1: bool,
    best_iterate: Option<(f64, DVector<f64>)>,
) -> (QpSolution, Vec<ConstraintId>) {
    let feas_tol = 1e-6 * ws.rhs_scale;
    let violated = best_iterate.as_ref().map_or(true, |(v, _)| *v > feas_tol);
    if allow_phase1 && violated {
        if let Some(infeasible) = phase1_verdict(ws, iterations) {
            return (infeasible, Vec::new());
        }
    }
    let x = match best_iterate {
        Some((_, x)) => x,
        None => match polish(ws, &w, tol, iterations, true) {
            PolishOutcome::Done(sol, kept) => return (sol, kept),
            PolishOutcome::Drop(_) => unreachable!("polish forgives negatives here"),
        },
    };
    let objective = ws.qp.objective(&x);
    let kkt_residual = ws.qp.max_violation(&x).max(f64::MIN_POSITIVE);
    (
        QpSolution {
            x,
            objective,
            status: SolveStatus::MaxIter,
            kkt_residual,
            iterations,
        },
        Vec::new(),
    )
}

/// Solve the feasibility subproblem
///
/// ```text
/// minimize ½ μ‖x‖² + ½‖s‖²
/// s.t.     E x − s_eq = d,  A x − s_in ≤ b,  lb ≤ x ≤ ub
/// ```
///
/// which is always feasible. If its solution still violates the original
/// constraints beyond tolerance, the original problem is declared
/// infeasible and that verdict is returned; otherwise `None` (feasible —
/// keep iterating on the real problem).
fn phase1_verdict(ws: &Workspace<'_>, iterations_so_far: usize) -> Option<QpSolution> {
    let qp = ws.qp;
    let n = ws.n;
    let meq = ws.meq;
    let mi = qp.num_ineq();
    let total = n + meq + mi;

    let mut x_scale: f64 = 1.0;
    for v in qp.lower.iter().chain(qp.upper.iter()) {
        if v.is_finite() {
            x_scale = x_scale.max(v.abs());
        }
    }
    let mu = (1e-10 * (ws.rhs_scale / x_scale).powi(2)).max(1e-300);

    let mut hessian = DMatrix::<f64>::zeros(total, total);
    for i in 0..n {
        hessian[(i, i)] = mu;
    }
    for i in n..total {
        hessian[(i, i)] = 1.0;
    }
    let mut eq_matrix = DMatrix::<f64>::zeros(meq, total);
    for e in 0..meq {
        for j in 0..n {
            eq_matrix[(e, j)] = qp.eq_matrix[(e, j)] * ws.eq_scale[e];
        }
        eq_matrix[(e, n + e)] = -1.0;
    }
    let eq_rhs =
        DVector::from_iterator(meq, (0..meq).map(|e| qp.eq_rhs[e] * ws.eq_scale[e]));
    let mut ineq_matrix = DMatrix::<f64>::zeros(mi, total);
    for i in 0..mi {
        for j in 0..n {
            ineq_matrix[(i, j)] = qp.ineq_matrix[(i, j)] * ws.ineq_scale[i];
        }
        ineq_matrix[(i, n + meq + i)] = -1.0;
    }
    let ineq_rhs =
        DVector::from_iterator(mi, (0..mi).map(|i| qp.ineq_rhs[i] * ws.ineq_scale[i]));
    let mut lower = DVector::from_element(total, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(total, f64::INFINITY);
    for j in 0..n {
        lower[j] = qp.lower[j];
        upper[j] = qp.upper[j];
    }
    let feasibility_qp = QpProblem {
        hessian,
        linear: DVector::zeros(total),
        constant: 0.0,
        eq_matrix,
        eq_rhs,
        ineq_matrix,
        ineq_rhs,
        lower,
        upper,
    };

    let inner_ws = Workspace::new(&feasibility_qp);
    let (inner, _) = iterate(
        &inner_ws,
        Vec::new(),
        1e-6 * ws.rhs_scale.max(1.0),
        5_000,
        false,
    );
    let x = DVector::from_iterator(n, (0..n).map(|i| inner.x[i]));
    let violation = qp.max_violation(&x);
    let feas_tol = 1e-6 * ws.rhs_scale;
    // A converged feasibility solve that still violates the constraints is a
    // certificate of emptiness. A non-converged one proves nothing.
    if inner.status == SolveStatus::Optimal && violation > feas_tol {
        let objective = qp.objective(&x);
        Some(QpSolution {
            x,
            objective,
            status: SolveStatus::Infeasible,
            kkt_residual: violation,
            iterations: iterations_so_far + inner.iterations,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::oracle::oracle_solve;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_bound_becomes_active() {
        // min ½x² s.t. x ≥ 1 → x = 1, objective ½
        let mut qp = QpProblem::unconstrained(dmatrix![1.0], dvector![0.0]);
        qp.lower[0] = 1.0;
        let sol = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9, "x = {}", sol.x[0]);
        assert!((sol.objective - 0.5).abs() < 1e-9);
        assert!(sol.kkt_residual <= DEFAULT_TOL);
    }

    #[test]
    fn tracking_pair_splits_symmetrically() {
        // min (x1+x2-10)² + ε‖x‖² s.t. x1+x2 = 10, 0 ≤ x ≤ 10 → (5,5)
        let eps = 1e-8;
        let mut qp = QpProblem::unconstrained(
            dmatrix![2.0 + 2.0 * eps, 2.0; 2.0, 2.0 + 2.0 * eps],
            dvector![-20.0, -20.0],
        );
        qp.constant = 100.0;
        qp.eq_matrix = dmatrix![1.0, 1.0];
        qp.eq_rhs = dvector![10.0];
        qp.lower = dvector![0.0, 0.0];
        qp.upper = dvector![10.0, 10.0];
        let sol = solve(&qp, 1e-7, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-6 && (sol.x[1] - 5.0).abs() < 1e-6);
        assert!(
            (sol.objective - 50.0 * eps).abs() < 1e-9,
            "objective {} should be ~50ε",
            sol.objective
        );
    }

    #[test]
    fn contradictory_equality_vs_boxes_reports_infeasible() {
        let mut qp = QpProblem::unconstrained(
            dmatrix![1.0, 0.0; 0.0, 1.0],
            dvector![0.0, 0.0],
        );
        qp.eq_matrix = dmatrix![1.0, 1.0];
        qp.eq_rhs = dvector![10.0];
        qp.lower = dvector![0.0, 0.0];
        qp.upper = dvector![2.0, 2.0];
        let sol = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SolveStatus::Infeasible);
        let reference = oracle_solve(&qp).unwrap();
        assert_eq!(reference.status, SolveStatus::Infeasible);
    }

    #[test]
    fn degenerate_equal_bounds_pin_variables() {
        let mut qp = QpProblem::unconstrained(
            dmatrix![2.0, 0.0; 0.0, 2.0],
            dvector![-2.0, -8.0],
        );
        qp.lower = dvector![3.0, 0.0];
        qp.upper = dvector![3.0, 1.0];
        let sol = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
    }

    fn random_feasible_qp(rng: &mut ChaCha8Rng, n: usize) -> QpProblem {
        // H = AᵀA + cI keeps the Hessian safely positive definite
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let hessian = &a.transpose() * &a + DMatrix::identity(n, n) * rng.gen_range(0.1..1.0);
        let linear = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let mut qp = QpProblem::unconstrained(hessian, linear);
        // interior point first, constraints placed around it
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        for j in 0..n {
            qp.lower[j] = x0[j] - rng.gen_range(0.05..2.0);
            qp.upper[j] = x0[j] + rng.gen_range(0.05..2.0);
        }
        if rng.gen_bool(0.5) {
            let row = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0));
            let rhs = dvector![(&row * &x0)[0]];
            qp.eq_matrix = row;
            qp.eq_rhs = rhs;
        }
        let mi = rng.gen_range(0..=2 * n.min(4));
        let mut ineq = DMatrix::zeros(mi, n);
        let mut rhs = DVector::zeros(mi);
        for i in 0..mi {
            for j in 0..n {
                ineq[(i, j)] = rng.gen_range(-1.0..1.0);
            }
            let at_x0: f64 = (0..n).map(|j| ineq[(i, j)] * x0[j]).sum();
            rhs[i] = at_x0 + rng.gen_range(0.01..1.0);
        }
        qp.ineq_matrix = ineq;
        qp.ineq_rhs = rhs;
        qp
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
        for case in 0..60 {
            let n = rng.gen_range(1..=5);
            let qp = random_feasible_qp(&mut rng, n);
            let sol = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
            let reference = oracle_solve(&qp).unwrap();
            assert_eq!(
                sol.status,
                SolveStatus::Optimal,
                "case {case}: solver status {:?}",
                sol.status
            );
            assert_eq!(reference.status, SolveStatus::Optimal, "case {case}");
            let obj_tol = 1e-6 * (1.0 + reference.objective.abs());
            assert!(
                (sol.objective - reference.objective).abs() <= obj_tol,
                "case {case}: objective {} vs oracle {}",
                sol.objective,
                reference.objective
            );
            let dx = (&sol.x - &reference.x).amax();
            assert!(
                dx <= 1e-5 * (1.0 + reference.x.amax()),
                "case {case}: solutions differ by {dx}"
            );
        }
    }

    #[test]
    fn scaling_objective_does_not_move_the_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let qp = random_feasible_qp(&mut rng, 4);
        let mut scaled = qp.clone();
        scaled.hessian *= 1000.0;
        scaled.linear *= 1000.0;
        let a = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        let b = solve(&scaled, 1e-8 * 1000.0, DEFAULT_MAX_ITER);
        assert_eq!(a.status, SolveStatus::Optimal);
        assert_eq!(b.status, SolveStatus::Optimal);
        assert!((&a.x - &b.x).amax() < 1e-7, "minimizer moved under scaling");
    }

    #[test]
    fn tightening_a_box_never_improves_the_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let qp = random_feasible_qp(&mut rng, 3);
            let base = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
            let mut tightened = qp.clone();
            // shrink every box towards its midpoint
            for j in 0..3 {
                let mid = 0.5 * (tightened.lower[j] + tightened.upper[j]);
                tightened.lower[j] = mid + 0.6 * (tightened.lower[j] - mid);
                tightened.upper[j] = mid + 0.6 * (tightened.upper[j] - mid);
            }
            let tight = solve(&tightened, DEFAULT_TOL, DEFAULT_MAX_ITER);
            if base.status == SolveStatus::Optimal && tight.status == SolveStatus::Optimal {
                assert!(
                    tight.objective >= base.objective - 1e-9 * (1.0 + base.objective.abs()),
                    "tightened objective {} below base {}",
                    tight.objective,
                    base.objective
                );
            }
        }
    }

    #[test]
    fn warm_start_replays_in_one_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let qp = random_feasible_qp(&mut rng, 5);
        let mut solver = ActiveSetSolver::new();
        let cold = solver.solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(cold.status, SolveStatus::Optimal);
        let warm = solver.solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(warm.status, SolveStatus::Optimal);
        assert!(
            warm.iterations <= 2,
            "warm replay took {} iterations",
            warm.iterations
        );
        assert!((&cold.x - &warm.x).amax() < 1e-9);
    }

    #[test]
    fn determinism_same_problem_same_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let qp = random_feasible_qp(&mut rng, 4);
        let a = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        let b = solve(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(a.x, b.x, "bitwise identical runs");
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn max_iter_budget_is_honored() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let qp = random_feasible_qp(&mut rng, 5);
        let sol = solve(&qp, DEFAULT_TOL, 1);
        // One iteration cannot finish a constrained problem unless the
        // unconstrained minimum happens to be interior; accept either a
        // budget-limited result or a lucky immediate optimum.
        assert!(matches!(
            sol.status,
            SolveStatus::MaxIter | SolveStatus::Optimal
        ));
        assert!(sol.iterations <= 2);
    }

    #[test]
    fn power_scale_problem_with_scaled_tolerance() {
        // watts-scale tracking instance: gradients ~1e7, so tol scales with f
        let mut qp = QpProblem::unconstrained(
            dmatrix![2.0, 2.0; 2.0, 2.0 + 1e-8],
            dvector![-2.0e7, -2.0e7],
        );
        qp.lower = dvector![0.0, -1.064e7];
        qp.upper = dvector![2.75e7, 1.064e7];
        let tol = 1e-8 * (1.0 + qp.linear.amax());
        let sol = solve(&qp, tol, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let total = sol.x[0] + sol.x[1];
        assert!((total - 1.0e7).abs() < 1.0, "supply {total} tracks 10 MW");
    }
}
