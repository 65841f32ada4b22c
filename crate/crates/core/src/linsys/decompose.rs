//! Orthogonal split of a frequency vector into the part a sketch can see
//! and the part it provably cannot.
//!
//! For `b = Φ f`, any `f` decomposes uniquely as `f_range + f_null` with
//! `f_range ∈ range(Φᵀ)`, `f_null ∈ null(Φ)`, and `f_range ⊥ f_null`. The
//! sketch output depends on `f_range` alone: `Φ f_null = 0`, so every
//! vector `f_range + anything-in-null` produces the same counters. The
//! projector is built from a thin SVD of the materialized operator.

use nalgebra::{DMatrix, DVector};

use super::LinearOp;
use crate::error::{Error, Result};

/// Largest column count materialized for SVD without an explicit opt-in.
pub const MAX_DENSE_COLUMNS: usize = 4096;

/// Orthogonal projector onto the row space (`range(Φᵀ)`) of an operator.
#[derive(Debug, Clone)]
pub struct RangeProjector {
    /// Orthonormal row-space basis, one basis vector per row (`r × N`).
    basis: DMatrix<f64>,
    n: usize,
}

impl RangeProjector {
    /// Builds the projector; refuses operators wider than
    /// [`MAX_DENSE_COLUMNS`] because the SVD cost is cubic in the dense
    /// dimensions.
    pub fn new(op: &dyn LinearOp) -> Result<Self> {
        Self::with_column_limit(op, false)
    }

    /// As [`RangeProjector::new`], with `allow_large` lifting the column
    /// guard for callers that accept the dense-factorization cost.
    pub fn with_column_limit(op: &dyn LinearOp, allow_large: bool) -> Result<Self> {
        let n = op.cols();
        if n == 0 {
            return Err(Error::param("op", 0usize, "operator needs at least one column"));
        }
        if n > MAX_DENSE_COLUMNS && !allow_large {
            return Err(Error::Unsupported {
                reason: format!(
                    "dense factorization of {n} columns exceeds the {MAX_DENSE_COLUMNS}-column \
                     guard; pass allow_large to accept the cost"
                ),
            });
        }
        let dense = op.to_dense();
        let svd = dense.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let tol = max_sv * (op.rows().max(n) as f64) * f64::EPSILON;
        let kept: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &sv)| sv > tol)
            .map(|(i, _)| i)
            .collect();
        let mut basis = DMatrix::zeros(kept.len(), n);
        for (out_row, &in_row) in kept.iter().enumerate() {
            basis.row_mut(out_row).copy_from(&v_t.row(in_row));
        }
        Ok(RangeProjector { basis, n })
    }

    /// Rank of the operator (number of basis vectors kept).
    pub fn rank(&self) -> usize {
        self.basis.nrows()
    }

    /// Input dimension `N`.
    pub fn cols(&self) -> usize {
        self.n
    }

    /// Projects `f` onto the row space.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "range projection",
                expected: self.n,
                actual: f.len(),
            });
        }
        let x = DVector::from_column_slice(f);
        let coeffs = &self.basis * x;
        let projected = self.basis.transpose() * coeffs;
        Ok(projected.data.into())
    }

    /// Splits `f` into `(f_range, f_null)` with `f_null = f − f_range`.
    pub fn split(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let f_range = self.project(f)?;
        let f_null = f.iter().zip(&f_range).map(|(a, b)| a - b).collect();
        Ok((f_range, f_null))
    }
}

/// Result of a range/null split, with numerical-quality diagnostics.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Component inside `range(Φᵀ)` — determines the sketch output.
    pub f_range: Vec<f64>,
    /// Component inside `null(Φ)` — invisible to the sketch.
    pub f_null: Vec<f64>,
    /// `‖Φ f_null‖_∞`; zero in exact arithmetic.
    pub sketch_defect: f64,
    /// `|⟨f_range, f_null⟩|`; zero in exact arithmetic.
    pub orthogonality_defect: f64,
}

/// Splits `f` against `op`, materializing the projector on the fly.
pub fn decompose_range_null(op: &dyn LinearOp, f: &[f64]) -> Result<Decomposition> {
    decompose_range_null_with(op, f, false)
}

/// As [`decompose_range_null`], with the wide-operator guard opt-out.
pub fn decompose_range_null_with(
    op: &dyn LinearOp,
    f: &[f64],
    allow_large: bool,
) -> Result<Decomposition> {
    if f.len() != op.cols() {
        return Err(Error::DimensionMismatch {
            context: "range/null decomposition",
            expected: op.cols(),
            actual: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("f", "non-finite entry", "all entries must be finite"));
    }
    let projector = RangeProjector::with_column_limit(op, allow_large)?;
    let (f_range, f_null) = projector.split(f)?;
    let sketch_defect = op
        .apply(&f_null)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let orthogonality_defect = f_range
        .iter()
        .zip(&f_null)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .abs();
    Ok(Decomposition {
        f_range,
        f_null,
        sketch_defect,
        orthogonality_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::SketchOperator;
    use crate::stream::{key_from_id, KeyIndex};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn l2(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn index_of(n: u64) -> KeyIndex {
        let mut index = KeyIndex::new();
        for id in 0..n {
            index.insert(&key_from_id(id, 4));
        }
        index
    }

    #[test]
    fn row_selector_splits_along_coordinates() {
        // Φ = [1 0] sees only the first coordinate: f = [2, 3] splits
        // into [2, 0] (visible) and [0, 3] (invisible).
        let phi = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let d = decompose_range_null(&phi, &[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(d.f_range[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d.f_range[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d.f_null[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d.f_null[1], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn full_column_rank_leaves_no_null_component() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let phi = DMatrix::from_fn(12, 5, |_, _| rng.random_range(-1.0..1.0));
        let f: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        let d = decompose_range_null(&phi, &f).unwrap();
        assert!(l2(&d.f_null) <= 1e-10 * l2(&f).max(1.0));
    }

    #[test]
    fn components_recombine_and_defects_stay_tiny() {
        let index = index_of(256);
        let op = SketchOperator::count_min(4, 16, 13, &index).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..5 {
            let f: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..100.0)).collect();
            let norm = l2(&f);
            let d = decompose_range_null(&op, &f).unwrap();
            for i in 0..256 {
                assert_abs_diff_eq!(d.f_range[i] + d.f_null[i], f[i], epsilon = 1e-12 * norm);
            }
            assert!(d.sketch_defect <= 1e-8 * norm, "defect {}", d.sketch_defect);
            assert!(
                d.orthogonality_defect <= 1e-8 * norm * norm,
                "orthogonality {}",
                d.orthogonality_defect
            );
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let index = index_of(128);
        let op = SketchOperator::count_min(3, 16, 29, &index).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..128).map(|_| rng.random_range(-5.0..5.0)).collect();
        let first = decompose_range_null(&op, &f).unwrap();
        let second = decompose_range_null(&op, &first.f_range).unwrap();
        assert!(l2(&second.f_null) <= 1e-8 * l2(&first.f_range).max(1.0));
    }

    #[test]
    fn projector_fixes_the_row_space() {
        let index = index_of(64);
        let op = SketchOperator::count_min(3, 8, 41, &index).unwrap();
        let projector = RangeProjector::new(&op).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let in_range = op.apply_transpose(&y);
        let projected = projector.project(&in_range).unwrap();
        for (a, b) in in_range.iter().zip(&projected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8 * l2(&in_range).max(1.0));
        }
    }

    #[test]
    fn wide_operators_need_explicit_opt_in() {
        let mut phi = DMatrix::zeros(1, MAX_DENSE_COLUMNS + 1);
        phi[(0, 0)] = 1.0;
        let f = vec![0.0; MAX_DENSE_COLUMNS + 1];
        let err = decompose_range_null(&phi, &f).unwrap_err();
        assert!(matches!(err, Error::Unsupported { .. }));
        assert!(decompose_range_null_with(&phi, &f, true).is_ok());
    }

    #[test]
    fn dimension_and_finiteness_checks() {
        let phi = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(decompose_range_null(&phi, &[1.0]).is_err());
        assert!(decompose_range_null(&phi, &[f64::NAN, 0.0]).is_err());
    }
}
