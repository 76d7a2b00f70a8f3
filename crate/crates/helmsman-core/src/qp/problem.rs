//! The condensed QP container and solution record.
//!
//! Convention:
//!
//! ```text
//! minimize   ½ xᵀ H x + fᵀ x + c
//! subject to E x  = d          (equality rows)
//!            A x  ≤ b          (general inequality rows)
//!            lb ≤ x ≤ ub       (per-variable boxes; ±∞ allowed)
//! ```
//!
//! `H` is symmetric and, for every problem this crate assembles, strictly
//! positive definite after Tikhonov regularization.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Terminal status of a solve attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// KKT residuals within tolerance.
    Optimal,
    /// Iteration budget exhausted; best iterate returned.
    MaxIter,
    /// The constraint set is empty (decided by a feasibility subproblem).
    Infeasible,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

/// A dense convex QP. See the module doc for the sign conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Constant objective offset so reported objectives match the original
    /// sum-of-squares tracking error rather than a shifted value.
    pub constant: f64,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Structural defects detected before any solve is attempted.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QpShapeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian is not symmetric: |H[{i},{j}] - H[{j},{i}]| = {delta}")]
    Asymmetric { i: usize, j: usize, delta: f64 },
    #[error("box is inverted at variable {index}: lower {lower} > upper {upper}")]
    InvertedBox { index: usize, lower: f64, upper: f64 },
}

impl QpProblem {
    /// A problem with only a quadratic and linear term; constraint blocks
    /// empty, boxes unbounded. Useful as a starting point in tests.
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        QpProblem {
            hessian,
            linear,
            constant: 0.0,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    /// Validate shapes, symmetry, and box ordering.
    pub fn check_shape(&self) -> Result<(), QpShapeError> {
        let n = self.num_vars();
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(QpShapeError::Dimension(format!(
                "H is {}x{}, expected {n}x{n}",
                self.hessian.nrows(),
                self.hessian.ncols()
            )));
        }
        for (mat, rhs, name) in [
            (&self.eq_matrix, &self.eq_rhs, "equality"),
            (&self.ineq_matrix, &self.ineq_rhs, "inequality"),
        ] {
            if mat.ncols() != n || mat.nrows() != rhs.len() {
                return Err(QpShapeError::Dimension(format!(
                    "{name} block is {}x{} with rhs length {}",
                    mat.nrows(),
                    mat.ncols(),
                    rhs.len()
                )));
            }
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(QpShapeError::Dimension(format!(
                "boxes have lengths {} and {}, expected {n}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let scale = self.hessian.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let delta = (self.hessian[(i, j)] - self.hessian[(j, i)]).abs();
                if delta > 1e-10 * scale {
                    return Err(QpShapeError::Asymmetric { i, j, delta });
                }
            }
            if self.lower[i] > self.upper[i] {
                return Err(QpShapeError::InvertedBox {
                    index: i,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    /// Objective value `½ xᵀHx + fᵀx + c` at an arbitrary point.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.hessian * x).dot(x) + self.linear.dot(x) + self.constant
    }

    /// Worst constraint violation at `x`: equality rows by absolute residual,
    /// inequality rows and boxes by positive part. Zero means feasible.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        let eq = &self.eq_matrix * x;
        for i in 0..self.num_eq() {
            worst = worst.max((eq[i] - self.eq_rhs[i]).abs());
        }
        let ineq = &self.ineq_matrix * x;
        for i in 0..self.num_ineq() {
            worst = worst.max(ineq[i] - self.ineq_rhs[i]);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]);
            worst = worst.max(x[j] - self.upper[j]);
        }
        worst
    }

    /// Serialize to the plain-text matrix format (see [`QpProblem::parse_text`]).
    pub fn write_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let n = self.num_vars();
        writeln!(out, "qp 1").unwrap();
        writeln!(out, "n {} meq {} mineq {}", n, self.num_eq(), self.num_ineq()).unwrap();
        let write_matrix = |out: &mut String, label: &str, m: &DMatrix<f64>| {
            writeln!(out, "{label}").unwrap();
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| m[(r, c)].to_string()).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        };
        let write_vector = |out: &mut String, label: &str, v: &DVector<f64>| {
            writeln!(out, "{label}").unwrap();
            if v.len() > 0 {
                let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        };
        write_matrix(&mut out, "H", &self.hessian);
        write_vector(&mut out, "f", &self.linear);
        writeln!(out, "const {}", self.constant).unwrap();
        write_matrix(&mut out, "Aeq", &self.eq_matrix);
        write_vector(&mut out, "beq", &self.eq_rhs);
        write_matrix(&mut out, "A", &self.ineq_matrix);
        write_vector(&mut out, "b", &self.ineq_rhs);
        write_vector(&mut out, "lb", &self.lower);
        write_vector(&mut out, "ub", &self.upper);
        out
    }

    /// Parse the plain-text matrix format produced by [`QpProblem::write_text`]:
    ///
    /// ```text
    /// qp 1
    /// n <vars> meq <eq rows> mineq <ineq rows>
    /// H
    /// <n rows of n numbers>
    /// f
    /// <n numbers>
    /// const <number>
    /// Aeq / beq / A / b / lb / ub sections in that order
    /// ```
    ///
    /// Numbers may use `inf`/`-inf` for unbounded box entries. Whitespace and
    /// line breaks are interchangeable inside a section.
    pub fn parse_text(text: &str) -> Result<Self, QpParseError> {
        let mut tokens = text.split_whitespace().peekable();
        let expect = |tokens: &mut Tokens<'_>, word: &str| -> Result<(), QpParseError> {
            match tokens_next(tokens) {
                Some(t) if t == word => Ok(()),
                Some(t) => Err(QpParseError::Expected {
                    expected: word.to_string(),
                    found: t.to_string(),
                }),
                None => Err(QpParseError::Truncated(word.to_string())),
            }
        };
        expect(&mut tokens, "qp")?;
        let version: u32 = parse_token(&mut tokens, "format version")?;
        if version != 1 {
            return Err(QpParseError::Version(version));
        }
        expect(&mut tokens, "n")?;
        let n: usize = parse_token(&mut tokens, "n")?;
        expect(&mut tokens, "meq")?;
        let meq: usize = parse_token(&mut tokens, "meq")?;
        expect(&mut tokens, "mineq")?;
        let mineq: usize = parse_token(&mut tokens, "mineq")?;

        expect(&mut tokens, "H")?;
        let hessian = parse_matrix(&mut tokens, n, n, "H")?;
        expect(&mut tokens, "f")?;
        let linear = parse_vector(&mut tokens, n, "f")?;
        expect(&mut tokens, "const")?;
        let constant: f64 = parse_float(&mut tokens, "const")?;
        expect(&mut tokens, "Aeq")?;
        let eq_matrix = parse_matrix(&mut tokens, meq, n, "Aeq")?;
        expect(&mut tokens, "beq")?;
        let eq_rhs = parse_vector(&mut tokens, meq, "beq")?;
        expect(&mut tokens, "A")?;
        let ineq_matrix = parse_matrix(&mut tokens, mineq, n, "A")?;
        expect(&mut tokens, "b")?;
        let ineq_rhs = parse_vector(&mut tokens, mineq, "b")?;
        expect(&mut tokens, "lb")?;
        let lower = parse_vector(&mut tokens, n, "lb")?;
        expect(&mut tokens, "ub")?;
        let upper = parse_vector(&mut tokens, n, "ub")?;
        if let Some(extra) = tokens_next(&mut tokens) {
            return Err(QpParseError::TrailingInput(extra.to_string()));
        }
        let qp = QpProblem {
            hessian,
            linear,
            constant,
            eq_matrix,
            eq_rhs,
            ineq_matrix,
            ineq_rhs,
            lower,
            upper,
        };
        qp.check_shape().map_err(QpParseError::Shape)?;
        Ok(qp)
    }
}

type Tokens<'a> = std::iter::Peekable<std::str::SplitWhitespace<'a>>;

fn tokens_next<'a, I: Iterator<Item = &'a str>>(
    tokens: &mut std::iter::Peekable<I>,
) -> Option<&'a str> {
    tokens.next()
}

fn parse_token<'a, T: std::str::FromStr, I: Iterator<Item = &'a str>>(
    tokens: &mut std::iter::Peekable<I>,
    what: &str,
) -> Result<T, QpParseError> {
    let tok = tokens
        .next()
        .ok_or_else(|| QpParseError::Truncated(what.to_string()))?;
    tok.parse().map_err(|_| QpParseError::BadNumber {
        what: what.to_string(),
        token: tok.to_string(),
    })
}

fn parse_float<'a, I: Iterator<Item = &'a str>>(
    tokens: &mut std::iter::Peekable<I>,
    what: &str,
) -> Result<f64, QpParseError> {
    let tok = tokens
        .next()
        .ok_or_else(|| QpParseError::Truncated(what.to_string()))?;
    match tok {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| QpParseError::BadNumber {
            what: what.to_string(),
            token: tok.to_string(),
        }),
    }
}

fn parse_vector<'a, I: Iterator<Item = &'a str>>(
    tokens: &mut std::iter::Peekable<I>,
    len: usize,
    what: &str,
) -> Result<DVector<f64>, QpParseError> {
    let mut v = DVector::zeros(len);
    for i in 0..len {
        v[i] = parse_float(tokens, what)?;
    }
    Ok(v)
}

fn parse_matrix<'a, I: Iterator<Item = &'a str>>(
    tokens: &mut std::iter::Peekable<I>,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<DMatrix<f64>, QpParseError> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = parse_float(tokens, what)?;
        }
    }
    Ok(m)
}

#[derive(Debug, Error)]
pub enum QpParseError {
    #[error("expected '{expected}', found '{found}'")]
    Expected { expected: String, found: String },
    #[error("input ended while reading {0}")]
    Truncated(String),
    #[error("cannot parse '{token}' while reading {what}")]
    BadNumber { what: String, token: String },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("trailing input starting at '{0}'")]
    TrailingInput(String),
    #[error(transparent)]
    Shape(QpShapeError),
}

/// Result of a solve: the minimizer (or best/feasibility iterate), its
/// objective, the terminal status, the worst KKT residual (stationarity,
/// primal feasibility, complementary slackness), and iterations used.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}
