//! Dense measurement-matrix ensembles used as recovery baselines and as
//! comparison points for sketch operators.
//!
//! All ensembles produce an `m × N` matrix (`m ≤ N`) normalized so that
//! `E ‖A x‖₂² = ‖x‖₂²` — equivalently `‖A‖_F² = N` exactly or in
//! expectation — which makes their isometry behavior directly comparable.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Measurement-matrix family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    /// Independent `±1/√m` entries.
    Bernoulli,
    /// Independent `N(0, 1/m)` entries.
    Gaussian,
    /// `m` distinct rows of the real orthonormal Fourier basis, scaled by
    /// `√(N/m)`.
    Fourier,
    /// `m` orthonormal rows from the QR factorization of a random
    /// Gaussian matrix, scaled by `√(N/m)`.
    Incoherence,
}

/// Geometry and seed for a dense ensemble draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseEnsembleSpec {
    pub kind: EnsembleKind,
    /// Measurement count `m`.
    pub rows: usize,
    /// Signal dimension `N`.
    pub cols: usize,
    pub seed: u64,
}

impl DenseEnsembleSpec {
    pub fn new(kind: EnsembleKind, rows: usize, cols: usize, seed: u64) -> Self {
        DenseEnsembleSpec {
            kind,
            rows,
            cols,
            seed,
        }
    }
}

/// Real orthonormal Fourier basis row `q` of length `n`, written into `out`.
///
/// Row layout: constant row first, then interleaved cosine/sine pairs per
/// frequency, then (for even `n`) the alternating-sign row.
fn fourier_basis_row(q: usize, n: usize, out: &mut [f64]) {
    let nf = n as f64;
    if q == 0 {
        let v = 1.0 / nf.sqrt();
        out.fill(v);
        return;
    }
    if n % 2 == 0 && q == n - 1 {
        let v = 1.0 / nf.sqrt();
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = if j % 2 == 0 { v } else { -v };
        }
        return;
    }
    let freq = (q + 1) / 2;
    let is_cos = q % 2 == 1;
    let amp = (2.0 / nf).sqrt();
    for (j, slot) in out.iter_mut().enumerate() {
        let angle = 2.0 * PI * (freq * j) as f64 / nf;
        *slot = amp * if is_cos { angle.cos() } else { angle.sin() };
    }
}

/// Draws a dense compressed-sensing measurement matrix.
pub fn make_cs_matrix(spec: &DenseEnsembleSpec) -> Result<DMatrix<f64>> {
    let (m, n) = (spec.rows, spec.cols);
    if m == 0 {
        return Err(Error::param("rows", m, "must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("cols", n, "must be at least 1"));
    }
    if m > n {
        return Err(Error::param(
            "rows",
            format!("{m} > {n} cols"),
            "measurement count must not exceed the signal dimension",
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let matrix = match spec.kind {
        EnsembleKind::Bernoulli => {
            let amp = 1.0 / (m as f64).sqrt();
            DMatrix::from_fn(m, n, |_, _| if rng.random::<bool>() { amp } else { -amp })
        }
        EnsembleKind::Gaussian => {
            let scale = 1.0 / (m as f64).sqrt();
            DMatrix::from_fn(m, n, |_, _| {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            })
        }
        EnsembleKind::Fourier => {
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_vec();
            picked.sort_unstable();
            let scale = (n as f64 / m as f64).sqrt();
            let mut out = DMatrix::zeros(m, n);
            let mut row = vec![0.0; n];
            for (i, &q) in picked.iter().enumerate() {
                fourier_basis_row(q, n, &mut row);
                for (j, &v) in row.iter().enumerate() {
                    out[(i, j)] = scale * v;
                }
            }
            out
        }
        EnsembleKind::Incoherence => {
            // Orthonormalize N×m Gaussian columns, then use them as rows.
            let g = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = g.qr().q();
            let scale = (n as f64 / m as f64).sqrt();
            (q.transpose()) * scale
        }
    };
    Ok(matrix)
}
