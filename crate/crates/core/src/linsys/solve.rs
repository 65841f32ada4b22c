//! Iterative least-squares solve of `min ‖Φ f − b‖₂` in the Krylov
//! subspace of the adjoint pair, via Golub–Kahan bidiagonalization with
//! the double-rotation update scheme.
//!
//! The solver touches the operator only through apply/adjoint, evaluates
//! the true residual of every iterate, and always returns the best
//! iterate seen — so the reported residual history is non-increasing by
//! construction, not by trust in the recurrences.

use super::LinearOp;
use crate::error::{Error, Result};

/// Result of an iterative least-squares run.
#[derive(Debug, Clone)]
pub struct LsqOutcome {
    /// Best iterate by true residual norm.
    pub solution: Vec<f64>,
    /// `residual_history[k]` is the best true `‖b − Φ x‖₂` seen after `k`
    /// iterations; entry 0 is `‖b‖₂` for the zero iterate. Non-increasing.
    pub residual_history: Vec<f64>,
    /// Whether a convergence test passed before the iteration cap.
    pub converged: bool,
    /// Iterations actually performed.
    pub iterations: usize,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale_in_place(v: &mut [f64], by: f64) {
    for x in v.iter_mut() {
        *x *= by;
    }
}

/// Solves `min ‖Φ f − b‖₂` with at most `max_iters` Krylov steps.
///
/// Declares convergence when the normal-equations residual estimate
/// drops to `tol · ‖Φᵀ b‖₂`, when the true residual drops to
/// `tol · ‖b‖₂` (consistent systems), or when the Krylov subspace is
/// exhausted; otherwise runs to the cap with `converged = false`.
pub fn lsq_solve(
    op: &dyn LinearOp,
    b: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<LsqOutcome> {
    let (m, n) = (op.rows(), op.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "least-squares right-hand side",
            expected: m,
            actual: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("b", "non-finite entry", "all entries must be finite"));
    }
    if max_iters == 0 {
        return Err(Error::param("max_iters", max_iters, "need at least one iteration"));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::param("tol", tol, "must be finite and non-negative"));
    }

    let b_norm = l2(b);
    if b_norm == 0.0 {
        return Ok(LsqOutcome {
            solution: vec![0.0; n],
            residual_history: vec![0.0],
            converged: true,
            iterations: 0,
        });
    }

    // Bidiagonalization seeds: β u = b, α v = Φᵀ u.
    let mut u = b.to_vec();
    let beta0 = b_norm;
    scale_in_place(&mut u, 1.0 / beta0);
    let mut v = op.apply_transpose(&u);
    let mut alpha = l2(&v);
    let atb_norm = alpha * beta0; // ‖Φᵀ b‖₂
    if alpha == 0.0 {
        // b is orthogonal to the range: x = 0 already minimizes.
        return Ok(LsqOutcome {
            solution: vec![0.0; n],
            residual_history: vec![b_norm],
            converged: true,
            iterations: 0,
        });
    }
    scale_in_place(&mut v, 1.0 / alpha);

    let mut x = vec![0.0f64; n];
    let mut h = v.clone();
    let mut h_bar = vec![0.0f64; n];

    // Rotation state.
    let mut zeta_bar = alpha * beta0;
    let mut alpha_bar = alpha;
    let mut rho = 1.0f64;
    let mut rho_bar = 1.0f64;
    let mut c_bar = 1.0f64;
    let mut s_bar = 0.0f64;

    let mut best_x = x.clone();
    let mut best_rn = b_norm;
    let mut history = vec![b_norm];
    let mut converged = false;
    let mut iterations = 0usize;

    for _ in 0..max_iters {
        iterations += 1;

        // Next bidiagonalization column: β u ← Φ v − α u, α v ← Φᵀ u − β v.
        let av = op.apply(&v);
        for (ui, avi) in u.iter_mut().zip(&av) {
            *ui = avi - alpha * *ui;
        }
        let beta = l2(&u);
        if beta > 0.0 {
            scale_in_place(&mut u, 1.0 / beta);
        }
        let atu = op.apply_transpose(&u);
        let mut v_next: Vec<f64> = atu
            .iter()
            .zip(&v)
            .map(|(a, vi)| a - beta * vi)
            .collect();
        let alpha_next = l2(&v_next);
        if alpha_next > 0.0 {
            scale_in_place(&mut v_next, 1.0 / alpha_next);
        }

        // First rotation eliminates the lower-bidiagonal β.
        let rho_old = rho;
        let rho_bar_old = rho_bar;
        let c_bar_old = c_bar;
        let s_bar_old = s_bar;
        rho = alpha_bar.hypot(beta);
        if rho == 0.0 {
            break;
        }
        let c = alpha_bar / rho;
        let s = beta / rho;
        let theta_next = s * alpha_next;
        alpha_bar = c * alpha_next;

        // Second rotation keeps the normal-equations residual explicit.
        let theta_bar = s_bar_old * rho;
        rho_bar = (c_bar_old * rho).hypot(theta_next);
        if rho_bar == 0.0 {
            break;
        }
        c_bar = c_bar_old * rho / rho_bar;
        s_bar = theta_next / rho_bar;
        let zeta = c_bar * zeta_bar;
        zeta_bar = -s_bar * zeta_bar;

        // Solution update through the two-term direction recurrences.
        let h_bar_scale = theta_bar * rho / (rho_old * rho_bar_old);
        for (hb, hi) in h_bar.iter_mut().zip(&h) {
            *hb = hi - h_bar_scale * *hb;
        }
        let step = zeta / (rho * rho_bar);
        for (xi, hb) in x.iter_mut().zip(&h_bar) {
            *xi += step * hb;
        }
        let h_scale = theta_next / rho;
        for (hi, vn) in h.iter_mut().zip(&v_next) {
            *hi = vn - h_scale * *hi;
        }

        // True residual of this iterate; keep the best.
        let ax = op.apply(&x);
        let rn = l2(&b
            .iter()
            .zip(&ax)
            .map(|(bi, axi)| bi - axi)
            .collect::<Vec<f64>>());
        if rn < best_rn {
            best_rn = rn;
            best_x.copy_from_slice(&x);
        }
        history.push(best_rn);

        if zeta_bar.abs() <= tol * atb_norm || best_rn <= tol * b_norm {
            converged = true;
            break;
        }
        if beta == 0.0 || alpha_next == 0.0 {
            // Krylov subspace exhausted: the iterate is the subspace
            // optimum, which is the least-squares solution.
            converged = true;
            break;
        }

        v = v_next;
        alpha = alpha_next;
    }

    Ok(LsqOutcome {
        solution: best_x,
        residual_history: history,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::SketchOperator;
    use crate::stream::{key_from_id, KeyIndex};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn square_well_conditioned_system_solves_exactly() {
        let a = random_matrix(30, 30, 1) + DMatrix::identity(30, 30) * 6.0;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x_true: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b = LinearOp::apply(&a, &x_true);
        let out = lsq_solve(&a, &b, 400, 1e-12).unwrap();
        assert!(out.converged);
        for (got, want) in out.solution.iter().zip(&x_true) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let a = random_matrix(5, 3, 3);
        let out = lsq_solve(&a, &[0.0; 5], 10, 1e-10).unwrap();
        assert_eq!(out.solution, vec![0.0; 3]);
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
        assert_eq!(out.residual_history, vec![0.0]);
    }

    #[test]
    fn overdetermined_residual_matches_direct_factorization() {
        // The converged Krylov residual must agree with a dense direct
        // least-squares solve of the same 200×100 system.
        let a = random_matrix(200, 100, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let b: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let out = lsq_solve(&a, &b, 600, 1e-12).unwrap();
        assert!(out.converged, "no convergence in 600 iterations");

        let rhs = DVector::from_column_slice(&b);
        let svd = a.clone().svd(true, true);
        let x_direct = svd.solve(&rhs, 1e-14).unwrap();
        let rn_direct = (rhs - &a * x_direct).norm();
        let rn_iterative = *out.residual_history.last().unwrap();
        assert_abs_diff_eq!(rn_iterative, rn_direct, epsilon = 1e-6 * rn_direct.max(1.0));
    }

    #[test]
    fn reported_history_never_increases() {
        let a = random_matrix(80, 50, 11);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let b: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = lsq_solve(&a, &b, 200, 1e-12).unwrap();
        assert_eq!(out.residual_history[0], l2(&b));
        for pair in out.residual_history.windows(2) {
            assert!(pair[1] <= pair[0], "history increased: {pair:?}");
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let a = random_matrix(200, 100, 13);
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let b: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = lsq_solve(&a, &b, 3, 1e-14).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert_eq!(out.residual_history.len(), 4);
    }

    #[test]
    fn sketch_operators_work_matrix_free() {
        let mut index = KeyIndex::new();
        for id in 0..200u64 {
            index.insert(&key_from_id(id, 4));
        }
        let op = SketchOperator::count_min(4, 25, 19, &index).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let f_true: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..50.0)).collect();
        let b = op.apply(&f_true);
        let out = lsq_solve(&op, &b, 400, 1e-10).unwrap();
        // The system is consistent (b = Φ f_true), so the residual must be
        // tiny even though f itself is underdetermined.
        assert!(out.converged);
        let rn = *out.residual_history.last().unwrap();
        assert!(rn <= 1e-6 * l2(&b), "residual {rn}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let a = random_matrix(4, 3, 21);
        assert!(lsq_solve(&a, &[1.0; 3], 10, 1e-8).is_err());
        assert!(lsq_solve(&a, &[f64::NAN; 4], 10, 1e-8).is_err());
        assert!(lsq_solve(&a, &[1.0; 4], 0, 1e-8).is_err());
        assert!(lsq_solve(&a, &[1.0; 4], 10, -1.0).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let a = random_matrix(60, 40, 23);
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let b: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out1 = lsq_solve(&a, &b, 100, 1e-10).unwrap();
        let out2 = lsq_solve(&a, &b, 100, 1e-10).unwrap();
        assert_eq!(out1.solution, out2.solution);
        assert_eq!(out1.residual_history, out2.residual_history);
    }
}
