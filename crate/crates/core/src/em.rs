//! Multiplicative expectation-maximization refinement of counter-grid
//! estimates.
//!
//! For a non-negative operator `Φ` and measurements `b = Φ f`, the update
//!
//! ```text
//! f_next[i] = (f_prev[i] / Σ_j Φᵀ_ij) · Σ_j Φᵀ_ij · b_j / (Φ f_prev)_j
//! ```
//!
//! redistributes counter mass toward a non-negative solution. Starting
//! from the grid's own query vector, a few accepted steps cut the
//! query's collision bias substantially while never leaving the
//! non-negative orthant. The module is fully deterministic.

use crate::error::{Error, Result};
use crate::linsys::LinearOp;
use crate::sketch::CountMin;
use crate::stream::KeyIndex;

/// Step count, acceptance policy, and denominator guard for refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Maximum number of multiplicative steps.
    pub steps: usize,
    /// Accept a step only when it strictly reduces the L1 residual
    /// `‖Φf − b‖₁`; refinement stops at the first rejected step.
    pub accept_only_improvements: bool,
    /// Lower bound applied to `(Φ f)_j` before division.
    pub epsilon: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            steps: 5,
            accept_only_improvements: true,
            epsilon: 1e-12,
        }
    }
}

/// A refinement instance: operator, measurement, and cached column sums.
pub struct EmProblem<'a> {
    op: &'a dyn LinearOp,
    b: &'a [f64],
    /// `Σ_j Φᵀ_ij` per column — the per-key measurement multiplicity.
    col_weights: Vec<f64>,
}

impl<'a> EmProblem<'a> {
    /// Validates the measurement and caches column sums.
    ///
    /// The operator must have non-negative entries (counter grids and
    /// non-negative dense matrices qualify); columns that no measurement
    /// sees are left untouched by the update.
    pub fn new(op: &'a dyn LinearOp, b: &'a [f64]) -> Result<Self> {
        if b.len() != op.rows() {
            return Err(Error::DimensionMismatch {
                context: "refinement measurement",
                expected: op.rows(),
                actual: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "b",
                "negative or non-finite entry",
                "measurements must be finite and non-negative",
            ));
        }
        let col_weights = op.apply_transpose(&vec![1.0; op.rows()]);
        if col_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param(
                "op",
                "negative column sum",
                "refinement requires a non-negative operator",
            ));
        }
        Ok(EmProblem {
            op,
            b,
            col_weights,
        })
    }

    pub fn op(&self) -> &dyn LinearOp {
        self.op
    }

    pub fn b(&self) -> &[f64] {
        self.b
    }

    /// L1 residual `‖Φf − b‖₁` of a candidate solution.
    pub fn l1_residual(&self, f: &[f64]) -> f64 {
        self.op
            .apply(f)
            .iter()
            .zip(self.b)
            .map(|(y, t)| (y - t).abs())
            .sum()
    }
}

/// One multiplicative update. Non-negativity and zeros are preserved;
/// any `f` with `Φf = b` (uniform column sums) is an exact fixed point.
pub fn em_step(problem: &EmProblem, f_prev: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let n = problem.op.cols();
    if f_prev.len() != n {
        return Err(Error::DimensionMismatch {
            context: "refinement iterate",
            expected: n,
            actual: f_prev.len(),
        });
    }
    if f_prev.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param(
            "f_prev",
            "negative or non-finite entry",
            "iterates must be finite and non-negative",
        ));
    }
    if f_prev.iter().all(|&v| v == 0.0) {
        return Err(Error::param(
            "f_prev",
            "all zeros",
            "the multiplicative update cannot leave the zero vector",
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", epsilon, "guard must be positive"));
    }
    let phi_f = problem.op.apply(f_prev);
    let ratios: Vec<f64> = problem
        .b
        .iter()
        .zip(&phi_f)
        .map(|(&bj, &yj)| bj / yj.max(epsilon))
        .collect();
    let weighted = problem.op.apply_transpose(&ratios);
    Ok(f_prev
        .iter()
        .zip(&weighted)
        .zip(&problem.col_weights)
        .map(|((&fi, &si), &wi)| if wi > 0.0 { fi * (si / wi) } else { fi })
        .collect())
}

/// Refinement trajectory: best accepted iterate plus its residual log.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    /// Best accepted iterate.
    pub solution: Vec<f64>,
    /// L1 residuals of the accepted iterates, starting with the initial
    /// one; non-increasing whenever acceptance is on.
    pub residuals: Vec<f64>,
    /// Steps accepted (residuals.len() − 1).
    pub accepted_steps: usize,
}

/// Runs up to `config.steps` updates from `f0`.
///
/// With acceptance on, each step is kept only if it strictly reduces the
/// L1 residual; the first rejected step ends the run (the update is
/// deterministic, so retrying from the same iterate cannot help). The
/// returned residual never exceeds the initial one.
pub fn em_refine(problem: &EmProblem, f0: &[f64], config: &EmConfig) -> Result<EmOutcome> {
    let mut current = f0.to_vec();
    let mut current_res = {
        if f0.len() != problem.op.cols() {
            return Err(Error::DimensionMismatch {
                context: "refinement start",
                expected: problem.op.cols(),
                actual: f0.len(),
            });
        }
        problem.l1_residual(f0)
    };
    let mut residuals = vec![current_res];
    for _ in 0..config.steps {
        let candidate = em_step(problem, &current, config.epsilon)?;
        let candidate_res = problem.l1_residual(&candidate);
        if config.accept_only_improvements && candidate_res >= current_res {
            break;
        }
        current = candidate;
        current_res = candidate_res;
        residuals.push(current_res);
    }
    let accepted_steps = residuals.len() - 1;
    Ok(EmOutcome {
        solution: current,
        residuals,
        accepted_steps,
    })
}

/// Refinement start point: the grid's query for every indexed key,
/// clamped below at 1 so no genuinely present key starts zero-locked.
pub fn cm_start(cm: &CountMin, index: &KeyIndex) -> Vec<f64> {
    index
        .iter()
        .map(|key| (cm.query(key) as f64).max(1.0))
        .collect()
}

/// Rescale record mapping a problem into the probability domain and back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmScaling {
    /// Total measurement mass `Σ_j b_j`.
    pub measured_mass: f64,
    /// Uniform column sum of the operator (`k` for a counter grid).
    pub column_weight: f64,
}

impl EmScaling {
    /// Multiplier taking raw vectors into the normalized domain.
    pub fn factor(&self) -> f64 {
        self.column_weight / self.measured_mass
    }
}

/// Scales `(b, f0)` by `k / Σb`, turning the true solution into a
/// probability vector: after one update the iterate sums to 1 and stays
/// there. Both sides scale by the same factor, so `g = Φ f̂` still holds.
pub fn normalize_problem(
    op: &dyn LinearOp,
    b: &[f64],
    f0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, EmScaling)> {
    let problem = EmProblem::new(op, b)?;
    let measured_mass: f64 = b.iter().sum();
    if measured_mass <= 0.0 {
        return Err(Error::param(
            "b",
            measured_mass,
            "normalization needs positive total measurement mass",
        ));
    }
    let w0 = problem.col_weights[0];
    let uniform = problem
        .col_weights
        .iter()
        .all(|w| (w - w0).abs() <= 1e-9 * w0.abs().max(1.0));
    if !uniform || w0 <= 0.0 {
        return Err(Error::Unsupported {
            reason: "probability-domain rescaling assumes uniform positive column sums".into(),
        });
    }
    let scaling = EmScaling {
        measured_mass,
        column_weight: w0,
    };
    let factor = scaling.factor();
    let g = b.iter().map(|v| v * factor).collect();
    let f0_scaled = f0.iter().map(|v| v * factor).collect();
    Ok((g, f0_scaled, scaling))
}

/// Undoes [`normalize_problem`]'s scaling.
pub fn denormalize(f: &[f64], scaling: &EmScaling) -> Vec<f64> {
    let factor = scaling.factor();
    f.iter().map(|v| v / factor).collect()
}
