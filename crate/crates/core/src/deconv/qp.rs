//! Constrained least squares `min ‖R v − c‖²` through an interior-point QP
//! in `(v, r)` with `r = R v − c` and objective `½‖r‖²`. Passing a factor of
//! the design rather than its Gram matrix keeps the linear systems at the
//! conditioning of the design, not its square.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::error::{HamtError, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConicSettings {
    pub max_iter: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ConicResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sparse inequality rows `G v ≥ 0` as `(row, col, value)` triplets.
pub(crate) struct Inequalities {
    pub rows: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Static regularization constants tried in turn.
const STATIC_REGULARIZATION: [f64; 3] = [1e-8, 1e-7, 1e-6];

/// Solves `min ‖R v − c‖` subject to `A v = b` and `G v ≥ 0`.
pub(crate) fn solve_lsq(
    r: &DMatrix<f64>,
    c: &[f64],
    a: &DMatrix<f64>,
    b: &[f64],
    g: &Inequalities,
    settings: &ConicSettings,
) -> Result<ConicResult> {
    let n = r.ncols();
    let rho = r.nrows();
    let n_eq = a.nrows();
    let n_zero = n_eq + rho;
    let total_rows = n_zero + g.rows;
    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut push = |r: usize, c: usize, v: f64| {
        if v != 0.0 {
            ri.push(r);
            ci.push(c);
            vals.push(v);
        }
    };
    for row in 0..n_eq {
        for col in 0..n {
            push(row, col, a[(row, col)]);
        }
    }
    let mut rhs = vec![0.0; total_rows];
    rhs[..n_eq].copy_from_slice(b);
    for row in 0..rho {
        for col in 0..n {
            push(n_eq + row, col, -r[(row, col)]);
        }
        push(n_eq + row, n + row, 1.0);
        rhs[n_eq + row] = -c[row];
    }
    for &(row, col, v) in &g.entries {
        push(n_zero + row, col, -v);
    }
    let a_all = CscMatrix::new_from_triplets(total_rows, n + rho, ri, ci, vals);
    let p_diag: Vec<f64> = (0..n + rho).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
    let p_res = CscMatrix::new(
        n + rho,
        n + rho,
        (0..=n + rho).map(|i| i.saturating_sub(n)).collect(),
        (n..n + rho).collect(),
        p_diag[n..].to_vec(),
    );
    let cost = vec![0.0; n + rho];
    let cones = [
        SupportedConeT::ZeroConeT(n_zero),
        SupportedConeT::NonnegativeConeT(g.rows),
    ];

    // retried with stronger regularization only when the default breaks down
    let mut best: Option<ConicResult> = None;
    for reg in STATIC_REGULARIZATION {
        let opts = DefaultSettings {
            max_iter: settings.max_iter as u32,
            verbose: false,
            tol_feas: settings.feas_tol,
            tol_gap_abs: settings.gap_tol,
            tol_gap_rel: settings.gap_tol,
            max_threads: 1,
            static_regularization_constant: reg,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p_res, &cost, &a_all, &rhs, &cones, opts)
            .map_err(|e| HamtError::InvalidConfig(format!("conic solver setup failed: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        let converged = matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
        let finite = sol.x.iter().all(|v| v.is_finite());
        let result = ConicResult {
            x: if finite { sol.x[..n].to_vec() } else { vec![f64::NAN; n] },
            iterations: sol.iterations as usize,
            converged,
        };
        if converged {
            return Ok(result);
        }
        if finite || best.is_none() {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> ConicSettings {
        ConicSettings {
            max_iter: 200,
            feas_tol: 1e-10,
            gap_tol: 1e-10,
        }
    }

    fn identity_rows(n: usize) -> Inequalities {
        Inequalities {
            rows: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    #[test]
    fn simplex_projection() {
        // nearest simplex point to (0.8, 0.6, −0.4) is (0.6, 0.4, 0)
        let f = DMatrix::identity(3, 3);
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let r = solve_lsq(&f, &[0.8, 0.6, -0.4], &a, &[1.0], &identity_rows(3), &settings()).unwrap();
        assert!(r.converged);
        for (x, e) in r.x.iter().zip([0.6, 0.4, 0.0]) {
            assert!((x - e).abs() < 1e-7, "{:?}", r.x);
        }
    }

    #[test]
    fn singular_hessian() {
        // the objective sees only x0 + x1, which wants 2 but is capped at 1
        let f = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let r = solve_lsq(&f, &[2.0], &a, &[1.0], &identity_rows(3), &settings()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] + r.x[1] - 1.0).abs() < 1e-7 && r.x[2].abs() < 1e-7, "{:?}", r.x);
    }

    #[test]
    fn box_constrained() {
        // min ‖x − (2, −1)‖² with x ≥ 0 and x0 + x1 = 1 gives (1, 0)
        let f = DMatrix::identity(2, 2);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let r = solve_lsq(&f, &[2.0, -1.0], &a, &[1.0], &identity_rows(2), &settings()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-7 && r.x[1].abs() < 1e-7, "{:?}", r.x);
    }
}
