//! Dense strictly convex quadratic programming with exact multipliers.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 x' diag(h) x + g' x
//!     subject to  E x  = e
//!                 lo <= A x <= hi
//! ```
//!
//! with `h > 0`. Stationarity is reported in the convention
//!
//! ```text
//!     diag(h) x + g + E' nu - A' mu_lo + A' mu_hi = 0,   mu_lo, mu_hi >= 0
//! ```
//!
//! so that `nu`, `mu_lo` and `mu_hi` are the multipliers of a Lagrangian written
//! as `f + nu'(E x - e) + mu_lo'(lo - A x) + mu_hi'(A x - hi)`.
//!
//! [`solve`] is an active-set method in the style of Goldfarb and Idnani: it
//! starts from the unconstrained minimizer, keeps the working-set multipliers
//! dual feasible and adds the most violated constraint at each major step. The
//! working-set systems are small and are refactorized from scratch every step.
//! [`enumerate_oracle`] checks every active-set combination and is meant for
//! tests only.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

mod oracle;

pub use oracle::{enumerate_oracle, ORACLE_MAX_CONSTRAINTS};

/// Internal feasibility and optimality tolerance.
pub const TOL: f64 = 1e-8;

/// Identifies a constraint of a [`QpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintId {
    Equality(usize),
    Range(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("malformed problem: {0}")]
    Malformed(String),

    #[error("problem is infeasible{}", certificate_suffix(.certificate))]
    Infeasible { certificate: Option<ConstraintId> },

    #[error("iteration limit of {limit} reached")]
    IterationLimit { limit: usize },

    #[error("oracle supports at most {max} range constraints, got {found}")]
    TooManyConstraints { max: usize, found: usize },
}

fn certificate_suffix(c: &Option<ConstraintId>) -> String {
    match c {
        Some(ConstraintId::Equality(i)) => format!(" (equality {i} cannot be satisfied)"),
        Some(ConstraintId::Range(i)) => format!(" (range constraint {i} cannot be satisfied)"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian_diag: Vec<f64>,
    pub linear: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_lower: Vec<f64>,
    pub ineq_upper: Vec<f64>,
}

impl QpProblem {
    /// Problem with objective only; constraints are added with the builder
    /// methods below.
    pub fn new(hessian_diag: Vec<f64>, linear: Vec<f64>) -> Self {
        let n = hessian_diag.len();
        QpProblem {
            hessian_diag,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: Vec::new(),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_lower: Vec::new(),
            ineq_upper: Vec::new(),
        }
    }

    pub fn with_equalities(mut self, matrix: DMatrix<f64>, rhs: Vec<f64>) -> Self {
        self.eq_matrix = matrix;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_ranges(mut self, matrix: DMatrix<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.ineq_matrix = matrix;
        self.ineq_lower = lower;
        self.ineq_upper = upper;
        self
    }

    pub fn dim(&self) -> usize {
        self.hessian_diag.len()
    }

    pub fn eq_count(&self) -> usize {
        self.eq_matrix.nrows()
    }

    pub fn range_count(&self) -> usize {
        self.ineq_matrix.nrows()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.hessian_diag)
            .zip(&self.linear)
            .map(|((xi, hi), gi)| 0.5 * hi * xi * xi + gi * xi)
            .sum()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let bad = |msg: String| Err(QpError::Malformed(msg));
        if self.linear.len() != n {
            return bad(format!(
                "linear term has length {}, expected {n}",
                self.linear.len()
            ));
        }
        if let Some(i) = self
            .hessian_diag
            .iter()
            .position(|h| !(h.is_finite() && *h > 0.0))
        {
            return bad(format!("hessian entry {i} is not strictly positive"));
        }
        if self.linear.iter().any(|g| !g.is_finite()) {
            return bad("linear term is not finite".into());
        }
        if self.eq_matrix.ncols() != n || self.eq_rhs.len() != self.eq_matrix.nrows() {
            return bad("equality block has inconsistent dimensions".into());
        }
        if self.ineq_matrix.ncols() != n
            || self.ineq_lower.len() != self.ineq_matrix.nrows()
            || self.ineq_upper.len() != self.ineq_matrix.nrows()
        {
            return bad("range block has inconsistent dimensions".into());
        }
        if self
            .eq_matrix
            .iter()
            .chain(self.ineq_matrix.iter())
            .any(|v| !v.is_finite())
            || self.eq_rhs.iter().any(|v| !v.is_finite())
        {
            return bad("constraint data is not finite".into());
        }
        for (j, (lo, hi)) in self.ineq_lower.iter().zip(&self.ineq_upper).enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || *lo == f64::INFINITY
                || *hi == f64::NEG_INFINITY
            {
                return bad(format!("range {j} has invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    fn range_value(&self, j: usize, x: &[f64]) -> f64 {
        self.ineq_matrix
            .row(j)
            .iter()
            .zip(x)
            .map(|(a, v)| a * v)
            .sum()
    }

    fn eq_value(&self, e: usize, x: &[f64]) -> f64 {
        self.eq_matrix
            .row(e)
            .iter()
            .zip(x)
            .map(|(a, v)| a * v)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Free,
    AtLower,
    AtUpper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    pub active_set: Vec<BoundStatus>,
    pub iterations: usize,
}

/// Largest violation of each family of KKT conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual_sign)
            .max(self.complementarity)
    }
}

impl QpSolution {
    pub fn objective(&self, problem: &QpProblem) -> f64 {
        problem.objective(&self.x)
    }

    pub fn kkt_residuals(&self, problem: &QpProblem) -> KktResiduals {
        let n = problem.dim();
        let mut grad: Vec<f64> = (0..n)
            .map(|i| problem.hessian_diag[i] * self.x[i] + problem.linear[i])
            .collect();
        for (e, nu) in self.eq_duals.iter().enumerate() {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += problem.eq_matrix[(e, i)] * nu;
            }
        }
        for j in 0..problem.range_count() {
            let net = self.upper_duals[j] - self.lower_duals[j];
            for (i, g) in grad.iter_mut().enumerate() {
                *g += problem.ineq_matrix[(j, i)] * net;
            }
        }
        let stationarity = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));

        let mut primal = 0.0f64;
        for e in 0..problem.eq_count() {
            primal = primal.max((problem.eq_value(e, &self.x) - problem.eq_rhs[e]).abs());
        }
        let mut complementarity = 0.0f64;
        let mut dual_sign = 0.0f64;
        for j in 0..problem.range_count() {
            let v = problem.range_value(j, &self.x);
            let (lo, hi) = (problem.ineq_lower[j], problem.ineq_upper[j]);
            primal = primal.max(lo - v).max(v - hi);
            dual_sign = dual_sign
                .max(-self.lower_duals[j])
                .max(-self.upper_duals[j]);
            if self.lower_duals[j] != 0.0 {
                complementarity = complementarity.max((self.lower_duals[j] * (v - lo)).abs());
            }
            if self.upper_duals[j] != 0.0 {
                complementarity = complementarity.max((self.upper_duals[j] * (hi - v)).abs());
            }
        }
        KktResiduals {
            stationarity,
            primal: primal.max(0.0),
            dual_sign,
            complementarity,
        }
    }
}

/// One constraint of the working set, written as `normal' x >= rhs` for
/// inequalities and `normal' x = rhs` for equalities.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    /// Equality row, with orientation `sign` applied to the normal.
    Eq {
        row: usize,
        sign: f64,
    },
    /// A range row held as a two-sided equality (`lo == hi`).
    Pinned {
        row: usize,
        sign: f64,
    },
    Lower(usize),
    Upper(usize),
}

impl Side {
    fn is_inequality(&self) -> bool {
        matches!(self, Side::Lower(_) | Side::Upper(_))
    }
}

struct Working<'a> {
    problem: &'a QpProblem,
    h_inv: Vec<f64>,
}

impl<'a> Working<'a> {
    fn normal(&self, side: Side) -> DVector<f64> {
        let p = self.problem;
        match side {
            Side::Eq { row, sign } => p.eq_matrix.row(row).transpose() * sign,
            Side::Pinned { row, sign } => p.ineq_matrix.row(row).transpose() * sign,
            Side::Lower(j) => p.ineq_matrix.row(j).transpose(),
            Side::Upper(j) => -p.ineq_matrix.row(j).transpose(),
        }
    }

    fn rhs(&self, side: Side) -> f64 {
        let p = self.problem;
        match side {
            Side::Eq { row, sign } => sign * p.eq_rhs[row],
            Side::Pinned { row, sign } => sign * p.ineq_lower[row],
            Side::Lower(j) => p.ineq_lower[j],
            Side::Upper(j) => -p.ineq_upper[j],
        }
    }

    fn slack(&self, side: Side, x: &DVector<f64>) -> f64 {
        self.normal(side).dot(x) - self.rhs(side)
    }

    fn normals(&self, set: &[Side]) -> DMatrix<f64> {
        let n = self.problem.dim();
        let mut m = DMatrix::zeros(n, set.len());
        for (c, side) in set.iter().enumerate() {
            m.set_column(c, &self.normal(*side));
        }
        m
    }

    fn scaled(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(v.len(), v.iter().zip(&self.h_inv).map(|(a, b)| a * b))
    }

    /// Gram matrix `N' H^-1 N` of the working set.
    fn gram(&self, normals: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = normals.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.h_inv[i];
        }
        normals.transpose() * scaled
    }

    /// Primal direction `z` and working-set multiplier change `r` for adding
    /// a constraint with normal `np`.
    fn step_direction(
        &self,
        set: &[Side],
        np: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        if set.is_empty() {
            return Some((self.scaled(np), DVector::zeros(0)));
        }
        let normals = self.normals(set);
        let chol = self.gram(&normals).cholesky()?;
        let r = chol.solve(&(normals.transpose() * self.scaled(np)));
        let z = self.scaled(&(np - &normals * &r));
        Some((z, r))
    }

    /// Minimizer on the working set and its multipliers, from scratch.
    fn solve_on(&self, set: &[Side]) -> Option<(DVector<f64>, DVector<f64>)> {
        let g = DVector::from_column_slice(&self.problem.linear);
        if set.is_empty() {
            return Some((-self.scaled(&g), DVector::zeros(0)));
        }
        let normals = self.normals(set);
        let chol = self.gram(&normals).cholesky()?;
        let b = DVector::from_iterator(set.len(), set.iter().map(|s| self.rhs(*s)));
        let u = chol.solve(&(b + normals.transpose() * self.scaled(&g)));
        let x = self.scaled(&(&normals * &u - g));
        Some((x, u))
    }
}

/// Solves the problem from a cold start.
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_warm(problem, &[])
}

/// Solves the problem starting from a guessed active set. The guess is used
/// only if its working-set minimizer is dual feasible; otherwise the solver
/// falls back to a cold start. Either way the result is the same optimum.
pub fn solve_warm(problem: &QpProblem, start: &[BoundStatus]) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.dim();
    let m = problem.range_count();
    let work = Working {
        problem,
        h_inv: problem.hessian_diag.iter().map(|h| 1.0 / h).collect(),
    };
    let limit = 100 * (n + m).max(1);
    let mut iterations = 0usize;

    let pinned: Vec<bool> = (0..m)
        .map(|j| problem.ineq_lower[j] == problem.ineq_upper[j])
        .collect();

    let (mut x, _) = work.solve_on(&[]).expect("empty working set");
    let mut set: Vec<Side> = Vec::new();
    let mut u: Vec<f64> = Vec::new();

    // Equalities first (and pinned ranges, which behave like equalities).
    let equalities = (0..problem.eq_count())
        .map(|row| (Side::Eq { row, sign: 1.0 }, ConstraintId::Equality(row)))
        .chain(
            (0..m)
                .filter(|j| pinned[*j])
                .map(|row| (Side::Pinned { row, sign: 1.0 }, ConstraintId::Range(row))),
        )
        .collect::<Vec<_>>();
    for (side, id) in equalities {
        let mut side = side;
        let s = work.slack(side, &x);
        if s > 0.0 {
            side = match side {
                Side::Eq { row, .. } => Side::Eq { row, sign: -1.0 },
                Side::Pinned { row, .. } => Side::Pinned { row, sign: -1.0 },
                other => other,
            };
        }
        add_constraint(
            &work,
            &mut set,
            &mut u,
            &mut x,
            side,
            id,
            &mut iterations,
            limit,
            true,
        )?;
    }

    // Warm start: accept the guess only when it is dual feasible.
    if start.len() == m && start.iter().any(|s| *s != BoundStatus::Free) {
        let mut guess = set.clone();
        for (j, status) in start.iter().enumerate() {
            if pinned[j] {
                continue;
            }
            match status {
                BoundStatus::AtLower if problem.ineq_lower[j].is_finite() => {
                    guess.push(Side::Lower(j))
                }
                BoundStatus::AtUpper if problem.ineq_upper[j].is_finite() => {
                    guess.push(Side::Upper(j))
                }
                _ => {}
            }
        }
        if let Some((xg, ug)) = work.solve_on(&guess) {
            let dual_ok = guess
                .iter()
                .zip(ug.iter())
                .all(|(s, v)| !s.is_inequality() || *v >= 0.0);
            if dual_ok {
                x = xg;
                u = ug.iter().copied().collect();
                set = guess;
            }
        }
    }

    loop {
        // Most violated inactive inequality; ties go to the lowest index.
        let mut chosen: Option<(Side, f64)> = None;
        for (j, &is_pinned) in pinned.iter().enumerate() {
            if is_pinned
                || set
                    .iter()
                    .any(|s| matches!(s, Side::Lower(k) | Side::Upper(k) if *k == j))
            {
                continue;
            }
            for side in [Side::Lower(j), Side::Upper(j)] {
                let bound = work.rhs(side);
                if !bound.is_finite() {
                    continue;
                }
                let s = work.slack(side, &x);
                if s < -violation_tol(bound) && chosen.is_none_or(|(_, best)| s < best) {
                    chosen = Some((side, s));
                }
            }
        }
        let Some((side, _)) = chosen else { break };
        let id = match side {
            Side::Lower(j) | Side::Upper(j) => ConstraintId::Range(j),
            _ => unreachable!(),
        };
        add_constraint(
            &work,
            &mut set,
            &mut u,
            &mut x,
            side,
            id,
            &mut iterations,
            limit,
            false,
        )?;
    }

    // Polish: recompute the optimum of the final working set exactly.
    if let Some((xp, up)) = work.solve_on(&set) {
        x = xp;
        u = up.iter().copied().collect();
    }

    Ok(assemble(problem, &set, &u, x, iterations))
}

fn violation_tol(bound: f64) -> f64 {
    1e-10 * (1.0 + bound.abs())
}

/// Adds constraint `side` to the working set, taking partial steps and dropping
/// blocking constraints as required.
#[allow(clippy::too_many_arguments)]
fn add_constraint(
    work: &Working,
    set: &mut Vec<Side>,
    u: &mut Vec<f64>,
    x: &mut DVector<f64>,
    side: Side,
    id: ConstraintId,
    iterations: &mut usize,
    limit: usize,
    equality: bool,
) -> Result<(), QpError> {
    let np = work.normal(side);
    let mut up = 0.0;
    loop {
        *iterations += 1;
        if *iterations > limit {
            return Err(QpError::IterationLimit { limit });
        }
        let s = work.slack(side, x);
        let (z, r) = work.step_direction(set, &np).ok_or(QpError::Malformed(
            "working set became rank deficient".into(),
        ))?;
        let curvature = np.dot(&z);
        let scale = np.dot(&work.scaled(&np)).max(f64::MIN_POSITIVE);
        let degenerate = curvature <= 1e-12 * scale;

        // Partial step: first inequality multiplier to reach zero.
        let mut partial: Option<(usize, f64)> = None;
        for (k, (s_k, r_k)) in set.iter().zip(r.iter()).enumerate() {
            if s_k.is_inequality() && *r_k > 1e-14 {
                let t = u[k] / r_k;
                if partial.is_none_or(|(_, best)| t < best) {
                    partial = Some((k, t));
                }
            }
        }

        if degenerate {
            if equality && s.abs() <= violation_tol(work.rhs(side)) {
                // linearly dependent but consistent: redundant
                return Ok(());
            }
            let Some((k, t)) = partial else {
                return Err(QpError::Infeasible {
                    certificate: Some(id),
                });
            };
            for (uk, rk) in u.iter_mut().zip(r.iter()) {
                *uk -= t * rk;
            }
            up += t;
            set.remove(k);
            u.remove(k);
            continue;
        }

        let full = (-s).max(0.0) / curvature;
        let t = partial.map_or(full, |(_, tp)| tp.min(full));
        *x += &z * t;
        for (uk, rk) in u.iter_mut().zip(r.iter()) {
            *uk -= t * rk;
        }
        up += t;
        match partial {
            Some((k, tp)) if tp < full => {
                set.remove(k);
                u.remove(k);
            }
            _ => {
                set.push(side);
                u.push(up);
                return Ok(());
            }
        }
    }
}

fn assemble(
    problem: &QpProblem,
    set: &[Side],
    u: &[f64],
    x: DVector<f64>,
    iterations: usize,
) -> QpSolution {
    let m = problem.range_count();
    let mut eq_duals = vec![0.0; problem.eq_count()];
    let mut lower_duals = vec![0.0; m];
    let mut upper_duals = vec![0.0; m];
    let mut active_set = vec![BoundStatus::Free; m];
    for (side, value) in set.iter().zip(u) {
        match *side {
            Side::Eq { row, sign } => eq_duals[row] = -sign * value,
            Side::Pinned { row, sign } => {
                // A' nu with nu = -sign * value; positive part is the upper multiplier
                let nu = -sign * value;
                if nu >= 0.0 {
                    upper_duals[row] = nu;
                    active_set[row] = BoundStatus::AtUpper;
                } else {
                    lower_duals[row] = -nu;
                    active_set[row] = BoundStatus::AtLower;
                }
            }
            Side::Lower(j) => {
                lower_duals[j] = value.max(0.0);
                active_set[j] = BoundStatus::AtLower;
            }
            Side::Upper(j) => {
                upper_duals[j] = value.max(0.0);
                active_set[j] = BoundStatus::AtUpper;
            }
        }
    }
    let x: Vec<f64> = x.iter().copied().collect();
    // weakly active constraints are reported at their bound with a zero multiplier
    for (j, status) in active_set.iter_mut().enumerate() {
        if *status != BoundStatus::Free {
            continue;
        }
        let v = problem.range_value(j, &x);
        let (lo, hi) = (problem.ineq_lower[j], problem.ineq_upper[j]);
        if lo.is_finite() && (v - lo).abs() <= TOL * (1.0 + lo.abs()) {
            *status = BoundStatus::AtLower;
        } else if hi.is_finite() && (hi - v).abs() <= TOL * (1.0 + hi.abs()) {
            *status = BoundStatus::AtUpper;
        }
    }
    QpSolution {
        x,
        eq_duals,
        lower_duals,
        upper_duals,
        active_set,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_equality() {
        // min x^2 s.t. x = 3: stationarity 2x + nu = 0
        let p = QpProblem::new(vec![2.0], vec![0.0])
            .with_equalities(DMatrix::from_row_slice(1, 1, &[1.0]), vec![3.0]);
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eq_duals[0], -6.0, epsilon = 1e-12);
    }

    #[test]
    fn clearing_shaped_instance_with_binding_range() {
        // min l1^2 + l2^2  s.t. l1 + l2 = 60, 23 <= l1 <= 27
        let p = QpProblem::new(vec![2.0, 2.0], vec![0.0, 0.0])
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![60.0])
            .with_ranges(
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                vec![23.0],
                vec![27.0],
            );
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 27.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 33.0, epsilon = 1e-10);
        assert_eq!(s.active_set, vec![BoundStatus::AtUpper]);
        assert!(s.upper_duals[0] > 0.0);
        assert!(s.kkt_residuals(&p).max() <= 1e-10);
    }

    #[test]
    fn infeasible_range_reports_certificate() {
        // x1 + x2 = 0 and 1 <= x1 - x2... plus x1 in [5, 6], x2 in [5, 6]
        let p = QpProblem::new(vec![1.0, 1.0], vec![0.0, 0.0])
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![0.0])
            .with_ranges(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
                vec![5.0, 5.0],
                vec![6.0, 6.0],
            );
        match solve(&p) {
            Err(QpError::Infeasible {
                certificate: Some(ConstraintId::Range(_)),
            }) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_equalities() {
        let p = QpProblem::new(vec![1.0], vec![0.0])
            .with_equalities(DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), vec![1.0, 3.0]);
        assert!(matches!(
            solve(&p),
            Err(QpError::Infeasible {
                certificate: Some(ConstraintId::Equality(1))
            })
        ));
    }

    #[test]
    fn redundant_equality_is_skipped() {
        let p = QpProblem::new(vec![1.0, 1.0], vec![-4.0, 0.0]).with_equalities(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            vec![1.0, 2.0],
        );
        let s = solve(&p).unwrap();
        assert!(s.kkt_residuals(&p).max() <= 1e-10);
        assert_abs_diff_eq!(s.x[0] + s.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pinned_range_behaves_as_equality() {
        let p = QpProblem::new(vec![2.0, 2.0], vec![0.0, 0.0]).with_ranges(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            vec![4.0],
            vec![4.0],
        );
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lower_duals[0], 4.0, epsilon = 1e-12);
        assert_eq!(s.active_set[0], BoundStatus::AtLower);
        assert!(s.kkt_residuals(&p).max() <= 1e-10);
    }

    #[test]
    fn weakly_active_constraint_reported_at_bound() {
        // unconstrained optimum sits exactly on the bound
        let p = QpProblem::new(vec![2.0], vec![-2.0]).with_ranges(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![f64::NEG_INFINITY],
            vec![1.0],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.active_set[0], BoundStatus::AtUpper);
        assert_eq!(s.upper_duals[0], 0.0);
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let p = QpProblem::new(vec![2.0, 2.0], vec![0.0, 0.0])
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![60.0])
            .with_ranges(
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                vec![23.0],
                vec![27.0],
            );
        let cold = solve(&p).unwrap();
        let warm = solve_warm(&p, &cold.active_set).unwrap();
        assert_abs_diff_eq!(cold.x[0], warm.x[0], epsilon = 1e-12);
        // a wrong guess falls back to the cold path
        let wrong = solve_warm(&p, &[BoundStatus::AtLower]).unwrap();
        assert_abs_diff_eq!(cold.x[0], wrong.x[0], epsilon = 1e-12);
    }

    #[test]
    fn malformed_problems_rejected() {
        let p = QpProblem::new(vec![0.0], vec![0.0]);
        assert!(matches!(solve(&p), Err(QpError::Malformed(_))));
        let p = QpProblem::new(vec![1.0], vec![0.0]).with_ranges(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![2.0],
            vec![1.0],
        );
        assert!(matches!(solve(&p), Err(QpError::Malformed(_))));
    }
}
