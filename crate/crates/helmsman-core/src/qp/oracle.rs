//! Brute-force reference solver for small QPs.
//!
//! `oracle_solve` enumerates candidate active sets exhaustively: for every
//! subset of inequality/box rows (up to the variable count), it pins those
//! rows as equalities, solves the resulting KKT system, and keeps the
//! feasible candidate with the least objective. For a convex QP the optimum
//! is the stationary point of *some* active set, so the search is complete.
//!
//! The implementation deliberately shares no code path with
//! [`crate::qp::solve`] — it has its own Gaussian elimination and its own
//! feasibility bookkeeping — so the two can check each other in tests.

use nalgebra::DVector;
use thiserror::Error;

use super::problem::{QpProblem, QpSolution, SolveStatus};

/// Largest variable count the oracle accepts.
pub const ORACLE_MAX_VARS: usize = 12;
/// Largest combined inequality + finite-box row count the oracle accepts.
pub const ORACLE_MAX_ROWS: usize = 30;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error(
        "problem too large for exhaustive enumeration: {vars} vars (max {ORACLE_MAX_VARS}), \
         {rows} ineq+box rows (max {ORACLE_MAX_ROWS})"
    )]
    TooLarge { vars: usize, rows: usize },
    #[error("malformed problem: {0}")]
    BadShape(String),
}

/// One materialized inequality row `coeffs · x ≤ rhs`. `conflict` marks the
/// opposite side of the same variable box, which can never be active
/// simultaneously unless the box is degenerate.
struct Row {
    coeffs: Vec<f64>,
    rhs: f64,
    conflict: Option<usize>,
}

/// Exhaustively solve a small QP. Returns `Infeasible` (with an infinite
/// objective) when no enumerated candidate satisfies every constraint.
pub fn oracle_solve(qp: &QpProblem) -> Result<QpSolution, OracleError> {
    qp.check_shape()
        .map_err(|e| OracleError::BadShape(e.to_string()))?;
    let n = qp.num_vars();
    let meq = qp.num_eq();

    let mut rows: Vec<Row> = Vec::new();
    for i in 0..qp.num_ineq() {
        rows.push(Row {
            coeffs: (0..n).map(|j| qp.ineq_matrix[(i, j)]).collect(),
            rhs: qp.ineq_rhs[i],
            conflict: None,
        });
    }
    for j in 0..n {
        let lower_finite = qp.lower[j].is_finite();
        let upper_finite = qp.upper[j].is_finite();
        let degenerate = qp.lower[j] == qp.upper[j];
        let lower_idx = rows.len();
        if lower_finite {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = -1.0;
            rows.push(Row {
                coeffs,
                rhs: -qp.lower[j],
                conflict: None,
            });
        }
        if upper_finite {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            rows.push(Row {
                coeffs,
                rhs: qp.upper[j],
                conflict: (lower_finite && !degenerate).then_some(lower_idx),
            });
            if lower_finite && !degenerate {
                rows[lower_idx].conflict = Some(rows.len() - 1);
            }
        }
    }

    if n > ORACLE_MAX_VARS || rows.len() > ORACLE_MAX_ROWS {
        return Err(OracleError::TooLarge {
            vars: n,
            rows: rows.len(),
        });
    }

    let k_max = n.saturating_sub(meq).min(rows.len());
    let mut search = Search {
        qp,
        rows: &rows,
        n,
        meq,
        rhs_scale: rhs_scale(qp),
        kkt: vec![0.0; (n + meq + k_max) * (n + meq + k_max)],
        rhs: vec![0.0; n + meq + k_max],
        best: None,
        tried: 0,
    };
    let mut subset = Vec::with_capacity(k_max);
    search.recurse(0, k_max, &mut subset);

    let tried = search.tried;
    match search.best {
        Some(best) => {
            let x = DVector::from_vec(best.x);
            let objective = qp.objective(&x);
            Ok(QpSolution {
                kkt_residual: kkt_residual(qp, &rows, &x, &best.subset, &best.multipliers),
                x,
                objective,
                status: SolveStatus::Optimal,
                iterations: tried,
            })
        }
        None => Ok(QpSolution {
            x: DVector::zeros(n),
            objective: f64::INFINITY,
            status: SolveStatus::Infeasible,
            kkt_residual: f64::INFINITY,
            iterations: tried,
        }),
    }
}

fn rhs_scale(qp: &QpProblem) -> f64 {
    let mut s: f64 = 1.0;
    for v in qp.eq_rhs.iter().chain(qp.ineq_rhs.iter()) {
        s = s.max(v.abs());
    }
    for v in qp.lower.iter().chain(qp.upper.iter()) {
        if v.is_finite() {
            s = s.max(v.abs());
        }
    }
    s
}

struct Candidate {
    x: Vec<f64>,
    objective: f64,
    subset: Vec<usize>,
    multipliers: Vec<f64>, // equality multipliers then subset multipliers
}

struct Search<'a> {
    qp: &'a QpProblem,
    rows: &'a [Row],
    n: usize,
    meq: usize,
    rhs_scale: f64,
    kkt: Vec<f64>,
    rhs: Vec<f64>,
    best: Option<Candidate>,
    tried: usize,
}

impl Search<'_> {
    fn recurse(&mut self, start: usize, remaining: usize, subset: &mut Vec<usize>) {
        self.evaluate(subset);
        if remaining == 0 {
            return;
        }
        for i in start..self.rows.len() {
            if let Some(other) = self.rows[i].conflict {
                if subset.contains(&other) {
                    continue;
                }
            }
            subset.push(i);
            self.recurse(i + 1, remaining - 1, subset);
            subset.pop();
        }
    }

    /// Pin `subset` rows as equalities, solve the KKT system, and offer the
    /// result as a candidate if it is primal feasible.
    fn evaluate(&mut self, subset: &[usize]) {
        self.tried += 1;
        let (n, meq) = (self.n, self.meq);
        let dim = n + meq + subset.len();
        let kkt = &mut self.kkt;
        let rhs = &mut self.rhs;
        kkt[..dim * dim].fill(0.0);
        for i in 0..n {
            for j in 0..n {
                kkt[i * dim + j] = self.qp.hessian[(i, j)];
            }
            rhs[i] = -self.qp.linear[i];
        }
        for e in 0..meq {
            for j in 0..n {
                let v = self.qp.eq_matrix[(e, j)];
                kkt[(n + e) * dim + j] = v;
                kkt[j * dim + n + e] = v;
            }
            rhs[n + e] = self.qp.eq_rhs[e];
        }
        for (s, &ri) in subset.iter().enumerate() {
            let row = &self.rows[ri];
            for j in 0..n {
                kkt[(n + meq + s) * dim + j] = row.coeffs[j];
                kkt[j * dim + n + meq + s] = row.coeffs[j];
            }
            rhs[n + meq + s] = row.rhs;
        }
        if !gaussian_solve(&mut kkt[..dim * dim], &mut rhs[..dim], dim) {
            return; // dependent active rows; another subset covers this face
        }
        let x = &rhs[..n];

        // primal feasibility of the candidate against every constraint
        let tol = 1e-7 * (1.0 + self.rhs_scale);
        for e in 0..meq {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.qp.eq_matrix[(e, j)] * x[j];
            }
            if (acc - self.qp.eq_rhs[e]).abs() > tol {
                return;
            }
        }
        for row in self.rows {
            let mut acc = 0.0;
            for j in 0..n {
                acc += row.coeffs[j] * x[j];
            }
            if acc - row.rhs > tol {
                return;
            }
        }

        let xv = DVector::from_iterator(n, x.iter().copied());
        let objective = self.qp.objective(&xv);
        let better = match &self.best {
            Some(b) => objective < b.objective,
            None => true,
        };
        if better {
            self.best = Some(Candidate {
                x: x.to_vec(),
                objective,
                subset: subset.to_vec(),
                multipliers: rhs[n..dim].to_vec(),
            });
        }
    }
}

/// Worst KKT residual of the winning candidate: stationarity, primal
/// feasibility, and complementary slackness (inactive rows carry zero
/// multipliers by construction).
fn kkt_residual(
    qp: &QpProblem,
    rows: &[Row],
    x: &DVector<f64>,
    subset: &[usize],
    multipliers: &[f64],
) -> f64 {
    let n = qp.num_vars();
    let meq = qp.num_eq();
    let mut grad: Vec<f64> = (0..n)
        .map(|i| {
            let mut g = qp.linear[i];
            for j in 0..n {
                g += qp.hessian[(i, j)] * x[j];
            }
            g
        })
        .collect();
    for e in 0..meq {
        for (j, g) in grad.iter_mut().enumerate() {
            *g += qp.eq_matrix[(e, j)] * multipliers[e];
        }
    }
    let mut comp: f64 = 0.0;
    for (s, &ri) in subset.iter().enumerate() {
        let lambda = multipliers[meq + s];
        let row = &rows[ri];
        for (j, g) in grad.iter_mut().enumerate() {
            *g += row.coeffs[j] * lambda;
        }
        let slack: f64 = row.rhs - row.coeffs.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>();
        comp = comp.max((lambda * slack).abs());
    }
    let stationarity = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    stationarity.max(qp.max_violation(x)).max(comp)
}

/// Partial-pivot Gaussian elimination on a row-major `dim × dim` system,
/// solving in place into `rhs`. Returns false on (near-)singularity.
fn gaussian_solve(a: &mut [f64], rhs: &mut [f64], dim: usize) -> bool {
    let mut scale: f64 = 0.0;
    for v in a.iter() {
        scale = scale.max(v.abs());
    }
    if scale == 0.0 {
        return false;
    }
    let tiny = 1e-12 * scale;
    for col in 0..dim {
        let mut pivot_row = col;
        let mut pivot_val = a[col * dim + col].abs();
        for r in (col + 1)..dim {
            let v = a[r * dim + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= tiny {
            return false;
        }
        if pivot_row != col {
            for c in 0..dim {
                a.swap(pivot_row * dim + c, col * dim + c);
            }
            rhs.swap(pivot_row, col);
        }
        let inv = 1.0 / a[col * dim + col];
        for r in (col + 1)..dim {
            let factor = a[r * dim + col] * inv;
            if factor == 0.0 {
                continue;
            }
            a[r * dim + col] = 0.0;
            for c in (col + 1)..dim {
                a[r * dim + c] -= factor * a[col * dim + c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    for col in (0..dim).rev() {
        let mut acc = rhs[col];
        for c in (col + 1)..dim {
            acc -= a[col * dim + c] * rhs[c];
        }
        rhs[col] = acc / a[col * dim + col];
    }
    true
}
