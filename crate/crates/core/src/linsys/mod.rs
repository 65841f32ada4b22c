//! The sketch as a linear system `b = Φ f`.
//!
//! [`SketchOperator`] exposes the exact measurement matrix a counter grid
//! implements — `k` nonzeros per column at the key's hashed buckets — via
//! matrix-free apply/adjoint. Dense comparison ensembles, the range/null
//! decomposition, restricted-isometry probes, and sparse/least-squares
//! recovery baselines all speak the same [`LinearOp`] vocabulary.

pub mod decompose;
pub mod ensembles;
pub mod omp;
pub mod rip;
pub mod solve;

pub use decompose::{decompose_range_null, Decomposition, RangeProjector};
pub use ensembles::{make_cs_matrix, DenseEnsembleSpec, EnsembleKind};
pub use omp::{omp_solve, OmpOutcome};
pub use rip::rip_distance;
pub use solve::{lsq_solve, LsqOutcome};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sketch::hash::{fingerprint64, SignFamily};
use crate::sketch::{CountMin, CountSketch};
use crate::stream::KeyIndex;

/// A real linear map with matrix-free application and adjoint.
pub trait LinearOp {
    /// Output dimension `m`.
    fn rows(&self) -> usize;
    /// Input dimension `N`.
    fn cols(&self) -> usize;
    /// `A f`, length `m`.
    fn apply(&self, f: &[f64]) -> Vec<f64>;
    /// `Aᵀ y`, length `N`.
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;

    /// Materializes the matrix column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.rows(), self.cols());
        let mut dense = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            for (i, v) in col.into_iter().enumerate() {
                dense[(i, j)] = v;
            }
        }
        dense
    }
}

impl LinearOp for DMatrix<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.ncols(), "input length");
        let x = nalgebra::DVector::from_column_slice(f);
        (self * x).data.into()
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows(), "input length");
        let x = nalgebra::DVector::from_column_slice(y);
        (self.transpose() * x).data.into()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Whether columns carry plain 0/1 footprints or ±1 signed footprints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMode {
    CountMin,
    CountSketch,
}

/// The exact measurement matrix of a counter grid over an indexed key set.
///
/// Column `j` holds key `j`'s update footprint: one entry per grid row, at
/// the key's hashed bucket, valued `+1` (count-min) or the key's row sign
/// (count sketch). Stored as per-column index/sign pairs, so apply and
/// adjoint run in `O(kN)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchOperator {
    mode: OperatorMode,
    m: usize,
    n: usize,
    k: usize,
    /// `k` entries per column: flat counter index and sign.
    entries: Vec<(u32, i8)>,
}

impl SketchOperator {
    fn build(
        mode: OperatorMode,
        rows: usize,
        width: usize,
        hash: &crate::sketch::HashFamily,
        signs: Option<&SignFamily>,
        index: &KeyIndex,
    ) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::param("index", 0usize, "operator needs at least one key column"));
        }
        let mut entries = Vec::with_capacity(index.len() * rows);
        for key in index.iter() {
            let fp = fingerprint64(key);
            for row in 0..rows {
                let flat = row * width + hash.bucket(row, fp);
                let sign = match signs {
                    Some(s) => s.sign(row, fp) as i8,
                    None => 1,
                };
                entries.push((u32::try_from(flat).expect("counter index fits u32"), sign));
            }
        }
        Ok(SketchOperator {
            mode,
            m: rows * width,
            n: index.len(),
            k: rows,
            entries,
        })
    }

    /// Operator of a count-min grid: same seeds, same buckets.
    pub fn for_count_min(cm: &CountMin, index: &KeyIndex) -> Result<Self> {
        Self::build(
            OperatorMode::CountMin,
            cm.rows(),
            cm.width(),
            cm.hash(),
            None,
            index,
        )
    }

    /// Operator of a count-sketch grid, signs included.
    pub fn for_count_sketch(cs: &CountSketch, index: &KeyIndex) -> Result<Self> {
        Self::build(
            OperatorMode::CountSketch,
            cs.rows(),
            cs.width(),
            cs.hash(),
            Some(cs.signs()),
            index,
        )
    }

    /// Standalone count-min operator from geometry and seed alone.
    pub fn count_min(rows: usize, width: usize, seed: u64, index: &KeyIndex) -> Result<Self> {
        Self::for_count_min(&CountMin::new(rows, width, seed)?, index)
    }

    pub fn mode(&self) -> OperatorMode {
        self.mode
    }

    /// Nonzeros per column.
    pub fn nnz_per_col(&self) -> usize {
        self.k
    }

    /// The `k` (measurement slot, sign) pairs backing column `j`.
    pub(crate) fn col(&self, j: usize) -> &[(u32, i8)] {
        &self.entries[j * self.k..(j + 1) * self.k]
    }

    /// Entry-weighted column sum `Σ_i |Φ_{i,j}|` — equal to `k` for both
    /// modes, exposed for refinement code that normalizes by it.
    pub fn column_weight(&self, _j: usize) -> f64 {
        self.k as f64
    }
}

impl LinearOp for SketchOperator {
    fn rows(&self) -> usize {
        self.m
    }

    fn cols(&self) -> usize {
        self.n
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n, "input length");
        let mut out = vec![0.0; self.m];
        for (j, &fj) in f.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            for &(flat, sign) in self.col(j) {
                out[flat as usize] += f64::from(sign) * fj;
            }
        }
        out
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.m, "input length");
        let mut out = vec![0.0; self.n];
        for (j, out_j) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(flat, sign) in self.col(j) {
                acc += f64::from(sign) * y[flat as usize];
            }
            *out_j = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{generate_stream, key_from_id, true_frequencies, SyntheticSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn index_of(n: u64) -> KeyIndex {
        let mut index = KeyIndex::new();
        for id in 0..n {
            index.insert(&key_from_id(id, 4));
        }
        index
    }

    #[test]
    fn identity_layout_materializes_as_identity() {
        // One row, width 2, two keys in distinct buckets in order.
        let index = index_of(2);
        let (fa, fb) = (
            fingerprint64(index.key(0)),
            fingerprint64(index.key(1)),
        );
        let cm = (0..1_000_000u64)
            .map(|seed| CountMin::new(1, 2, seed).unwrap())
            .find(|cm| cm.hash().bucket(0, fa) == 0 && cm.hash().bucket(0, fb) == 1)
            .expect("no fixture seed found");
        let op = SketchOperator::for_count_min(&cm, &index).unwrap();
        let dense = op.to_dense();
        assert_eq!(dense, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn count_sketch_mode_carries_signs() {
        let index = index_of(3);
        let cs = CountSketch::new(2, 8, 11).unwrap();
        let op = SketchOperator::for_count_sketch(&cs, &index).unwrap();
        let dense = op.to_dense();
        for j in 0..3 {
            let fp = fingerprint64(index.key(j));
            for row in 0..2 {
                let flat = row * 8 + cs.hash().bucket(row, fp);
                assert_eq!(dense[(flat, j as usize)], cs.signs().sign(row, fp) as f64);
            }
            let nonzeros = dense.column(j as usize).iter().filter(|&&v| v != 0.0).count();
            assert_eq!(nonzeros, 2, "one signed entry per row band");
        }
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let op = SketchOperator::count_min(3, 16, 5, &index_of(20)).unwrap();
        assert_eq!(op.apply(&vec![0.0; 20]), vec![0.0; 48]);
    }

    #[test]
    fn basis_vector_hits_exactly_k_buckets() {
        let op = SketchOperator::count_min(4, 16, 9, &index_of(50)).unwrap();
        for j in [0usize, 7, 49] {
            let mut e = vec![0.0; 50];
            e[j] = 1.0;
            let b = op.apply(&e);
            let ones = b.iter().filter(|&&v| v == 1.0).count();
            let zeros = b.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(ones, 4);
            assert_eq!(zeros, 64 - 4);
        }
    }

    #[test]
    fn adjoint_identity_holds_to_machine_precision() {
        let index = index_of(60);
        let ops: Vec<SketchOperator> = vec![
            SketchOperator::count_min(4, 16, 3, &index).unwrap(),
            SketchOperator::for_count_sketch(&CountSketch::new(3, 16, 4).unwrap(), &index)
                .unwrap(),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for op in &ops {
            for _ in 0..100 {
                let f: Vec<f64> = (0..op.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..op.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let af = op.apply(&f);
                let aty = op.apply_transpose(&y);
                let lhs: f64 = af.iter().zip(&y).map(|(a, b)| a * b).sum();
                let rhs: f64 = f.iter().zip(&aty).map(|(a, b)| a * b).sum();
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                // Relative to the dot products' natural magnitude, not the
                // (possibly cancelled) values themselves.
                let scale = (norm(&af) * norm(&y)).max(norm(&f) * norm(&aty)).max(1e-30);
                assert!(
                    (lhs - rhs).abs() / scale <= 1e-12,
                    "adjoint identity violated: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn operator_reproduces_streamed_counters_bit_exactly() {
        // Stream a zipf workload into a plain grid; the operator applied
        // to the exact frequencies must equal the flattened counters with
        // no floating-point slack (all values are exact integers).
        let (trace, truth) =
            generate_stream(&SyntheticSpec::zipf(500, 40_000, 1.2, 31)).unwrap();
        let mut cm = CountMin::new(4, 32, 77).unwrap();
        for (key, value) in trace.iter() {
            cm.update(key, value as u64).unwrap();
        }
        let f = true_frequencies(&trace, &truth.index).unwrap();
        let op = SketchOperator::for_count_min(&cm, &truth.index).unwrap();
        assert_eq!(op.apply(&f), cm.flatten());
    }

    #[test]
    fn count_sketch_operator_matches_streamed_signed_counters() {
        let (trace, truth) =
            generate_stream(&SyntheticSpec::zipf(300, 20_000, 1.2, 8)).unwrap();
        let mut cs = CountSketch::new(3, 32, 55).unwrap();
        for (key, value) in trace.iter() {
            cs.update(key, value).unwrap();
        }
        let f = true_frequencies(&trace, &truth.index).unwrap();
        let op = SketchOperator::for_count_sketch(&cs, &truth.index).unwrap();
        assert_eq!(op.apply(&f), cs.flatten());
    }

    #[test]
    fn dense_view_agrees_with_matrix_free_paths() {
        let index = index_of(30);
        let op = SketchOperator::count_min(3, 8, 21, &index).unwrap();
        let dense = op.to_dense();
        let f: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        let y: Vec<f64> = (0..24).map(|i| ((i * 7) % 3) as f64 - 1.0).collect();
        assert_eq!(LinearOp::apply(&dense, &f), op.apply(&f));
        assert_eq!(
            LinearOp::apply_transpose(&dense, &y),
            op.apply_transpose(&y)
        );
    }

    #[test]
    fn empty_index_is_rejected() {
        let empty = KeyIndex::new();
        assert!(SketchOperator::count_min(2, 8, 1, &empty).is_err());
    }
}
