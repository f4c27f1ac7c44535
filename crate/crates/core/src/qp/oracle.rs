use nalgebra::{DMatrix, DVector};

use super::{BoundStatus, QpError, QpProblem, QpSolution, TOL};

/// Enumeration is `3^M`; beyond this it is too slow to be useful.
pub const ORACLE_MAX_CONSTRAINTS: usize = 12;

/// Exhaustive active-set enumeration. Every assignment of {free, lower, upper}
/// to the range rows is tried; the equality-constrained system of each one is
/// solved through the full KKT matrix and the first assignment that is primal
/// and dual feasible is returned.
pub fn enumerate_oracle(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let m = problem.range_count();
    if m > ORACLE_MAX_CONSTRAINTS {
        return Err(QpError::TooManyConstraints {
            max: ORACLE_MAX_CONSTRAINTS,
            found: m,
        });
    }
    let total = 3usize.pow(m as u32);
    let mut statuses = vec![BoundStatus::Free; m];
    for code in 0..total {
        let mut c = code;
        let mut skip = false;
        for (j, status) in statuses.iter_mut().enumerate() {
            *status = match c % 3 {
                0 => BoundStatus::Free,
                1 => BoundStatus::AtLower,
                _ => BoundStatus::AtUpper,
            };
            c /= 3;
            let bound = match status {
                BoundStatus::Free => 0.0,
                BoundStatus::AtLower => problem.ineq_lower[j],
                BoundStatus::AtUpper => problem.ineq_upper[j],
            };
            if !bound.is_finite() {
                skip = true;
            }
        }
        if skip {
            continue;
        }
        if let Some(solution) = try_active_set(problem, &statuses) {
            return Ok(solution);
        }
    }
    Err(QpError::Infeasible { certificate: None })
}

fn try_active_set(problem: &QpProblem, statuses: &[BoundStatus]) -> Option<QpSolution> {
    let n = problem.dim();
    let e = problem.eq_count();
    let active: Vec<usize> = (0..statuses.len())
        .filter(|j| statuses[*j] != BoundStatus::Free)
        .collect();
    let k = e + active.len();
    let size = n + k;

    // [H C'; C 0] [x; w] = [-g; d]
    let mut kkt = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..n {
        kkt[(i, i)] = problem.hessian_diag[i];
        rhs[i] = -problem.linear[i];
    }
    for r in 0..e {
        for i in 0..n {
            let v = problem.eq_matrix[(r, i)];
            kkt[(n + r, i)] = v;
            kkt[(i, n + r)] = v;
        }
        rhs[n + r] = problem.eq_rhs[r];
    }
    for (c, &j) in active.iter().enumerate() {
        for i in 0..n {
            let v = problem.ineq_matrix[(j, i)];
            kkt[(n + e + c, i)] = v;
            kkt[(i, n + e + c)] = v;
        }
        rhs[n + e + c] = match statuses[j] {
            BoundStatus::AtLower => problem.ineq_lower[j],
            _ => problem.ineq_upper[j],
        };
    }
    let lu = kkt.clone().lu();
    let sol = lu.solve(&rhs)?;
    // reject numerically singular systems
    let residual = (&kkt * &sol - &rhs).amax();
    if !residual.is_finite() || residual > 1e-9 * (1.0 + rhs.amax()) {
        return None;
    }

    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let eq_duals: Vec<f64> = sol.rows(n, e).iter().copied().collect();
    let m = statuses.len();
    let mut lower_duals = vec![0.0; m];
    let mut upper_duals = vec![0.0; m];
    for (c, &j) in active.iter().enumerate() {
        // w enters stationarity as +A'w: upper multiplier is w, lower is -w
        let w = sol[n + e + c];
        match statuses[j] {
            BoundStatus::AtLower => lower_duals[j] = -w,
            _ => upper_duals[j] = w,
        }
    }
    let dual_ok = lower_duals.iter().chain(&upper_duals).all(|d| *d >= -TOL);
    if !dual_ok {
        return None;
    }
    for j in 0..m {
        let v: f64 = (0..n).map(|i| problem.ineq_matrix[(j, i)] * x[i]).sum();
        let (lo, hi) = (problem.ineq_lower[j], problem.ineq_upper[j]);
        if v < lo - TOL * (1.0 + lo.abs()) || v > hi + TOL * (1.0 + hi.abs()) {
            return None;
        }
    }
    for d in lower_duals.iter_mut().chain(upper_duals.iter_mut()) {
        *d = d.max(0.0);
    }
    Some(QpSolution {
        x,
        eq_duals,
        lower_duals,
        upper_duals,
        active_set: statuses.to_vec(),
        iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solve;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_variable_agrees_with_solver() {
        let p = QpProblem::new(vec![3.0], vec![-12.0]).with_ranges(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![-1.0],
            vec![2.5],
        );
        let a = solve(&p).unwrap();
        let b = enumerate_oracle(&p).unwrap();
        assert_abs_diff_eq!(a.x[0], b.x[0], epsilon = 1e-12);
        assert_abs_diff_eq!(a.upper_duals[0], b.upper_duals[0], epsilon = 1e-12);
    }

    #[test]
    fn infeasible_flagged_by_both_paths() {
        // x = 1 but 2 <= x <= 3
        let p = QpProblem::new(vec![1.0], vec![0.0])
            .with_equalities(DMatrix::from_row_slice(1, 1, &[1.0]), vec![1.0])
            .with_ranges(DMatrix::from_row_slice(1, 1, &[1.0]), vec![2.0], vec![3.0]);
        assert!(matches!(solve(&p), Err(QpError::Infeasible { .. })));
        assert!(matches!(
            enumerate_oracle(&p),
            Err(QpError::Infeasible { .. })
        ));
    }

    #[test]
    fn too_many_constraints() {
        let m = ORACLE_MAX_CONSTRAINTS + 1;
        let p = QpProblem::new(vec![1.0], vec![0.0]).with_ranges(
            DMatrix::from_element(m, 1, 1.0),
            vec![-1.0; m],
            vec![1.0; m],
        );
        assert!(matches!(
            enumerate_oracle(&p),
            Err(QpError::TooManyConstraints { .. })
        ));
    }
}
