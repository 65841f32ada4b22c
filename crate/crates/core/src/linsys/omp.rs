//! Greedy sparse recovery by orthogonal matching pursuit.
//!
//! Each round picks the column most correlated with the current residual
//! (ties go to the lowest index), then re-fits all selected columns by
//! least squares via an incrementally extended QR factorization, so the
//! residual stays orthogonal to everything already chosen.

use super::LinearOp;
use crate::error::{Error, Result};

/// Result of a pursuit run.
#[derive(Debug, Clone)]
pub struct OmpOutcome {
    /// Dense length-`N` solution; zero off the support.
    pub solution: Vec<f64>,
    /// Selected column indices in pick order.
    pub support: Vec<usize>,
    /// Final `‖b − Φ x‖₂`.
    pub residual_norm: f64,
    /// Number of greedy rounds taken.
    pub iterations: usize,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Recovers an at-most-`s_max`-sparse approximation of `Φ x = b`.
///
/// Stops when `s_max` columns are chosen, the residual norm drops to
/// `residual_tol` or below, the residual decorrelates from every column,
/// or a dependent column would add nothing.
pub fn omp_solve(
    op: &dyn LinearOp,
    b: &[f64],
    s_max: usize,
    residual_tol: f64,
) -> Result<OmpOutcome> {
    let (m, n) = (op.rows(), op.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "pursuit right-hand side",
            expected: m,
            actual: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("b", "non-finite entry", "all entries must be finite"));
    }
    if s_max > m {
        return Err(Error::param(
            "s_max",
            format!("{s_max} > {m} measurements"),
            "cannot fit more columns than measurements",
        ));
    }
    if !residual_tol.is_finite() || residual_tol < 0.0 {
        return Err(Error::param(
            "residual_tol",
            residual_tol,
            "must be finite and non-negative",
        ));
    }

    let mut r = b.to_vec();
    let mut residual_norm = l2(&r);
    let mut support: Vec<usize> = Vec::new();
    let mut selected = vec![false; n];
    // Thin QR of the selected columns: orthonormal columns of Q and the
    // upper-triangular R stored column by column.
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut qtb: Vec<f64> = Vec::new();
    let mut basis = vec![0.0f64; n];

    while support.len() < s_max && residual_norm > residual_tol {
        let correlations = op.apply_transpose(&r);
        let mut best: Option<(usize, f64)> = None;
        for (j, &c) in correlations.iter().enumerate() {
            if selected[j] {
                continue;
            }
            let mag = c.abs();
            match best {
                // Strict comparison keeps the lowest index on ties.
                Some((_, best_mag)) if mag <= best_mag => {}
                _ => best = Some((j, mag)),
            }
        }
        let Some((j, best_mag)) = best else { break };
        if best_mag == 0.0 {
            break;
        }

        basis[j] = 1.0;
        let atom = op.apply(&basis);
        basis[j] = 0.0;

        // Modified Gram–Schmidt with one reorthogonalization pass.
        let mut v = atom.clone();
        let mut coeffs = vec![0.0f64; q_cols.len()];
        for _ in 0..2 {
            for (t, q) in q_cols.iter().enumerate() {
                let d = dot(q, &v);
                coeffs[t] += d;
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let v_norm = l2(&v);
        if v_norm <= 1e-12 * l2(&atom).max(1.0) {
            // Dependent column: it cannot reduce the residual.
            break;
        }
        for vi in v.iter_mut() {
            *vi /= v_norm;
        }
        let proj = dot(&v, &r);
        for (ri, qi) in r.iter_mut().zip(&v) {
            *ri -= proj * qi;
        }
        residual_norm = l2(&r);

        coeffs.push(v_norm);
        r_cols.push(coeffs);
        q_cols.push(v);
        qtb.push(proj);
        selected[j] = true;
        support.push(j);
    }

    // Back-substitution on R x = Qᵀb.
    let t = support.len();
    let mut x_sup = vec![0.0f64; t];
    for i in (0..t).rev() {
        let mut acc = qtb[i];
        for u in (i + 1)..t {
            acc -= r_cols[u][i] * x_sup[u];
        }
        x_sup[i] = acc / r_cols[i][i];
    }
    let mut solution = vec![0.0f64; n];
    for (&j, &value) in support.iter().zip(&x_sup) {
        solution[j] = value;
    }
    Ok(OmpOutcome {
        solution,
        support,
        residual_norm,
        iterations: t,
    })
}
