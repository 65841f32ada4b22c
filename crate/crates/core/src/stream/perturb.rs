//! Workload drift scenarios applied to a ground-truth frequency vector.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::stream::FrequencyVector;

/// Drift families for stress-testing recovery accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Per-key fluctuation: a sampled 10–20% of keys receive additive
    /// Gaussian noise `factor · N(0, f_i)` (std `factor·√f_i`), clamped
    /// at zero and rounded back to integers.
    Temporal,
    /// Mass reassignment: the top-10% hot keys are scaled down to carry
    /// `factor` of their original volume (per-key floor), and the removed
    /// mass is spread round-robin over a sampled 10–20% of the remaining
    /// keys. Total mass is conserved exactly.
    Spatial,
}

fn sampled_fraction_indices(
    rng: &mut ChaCha12Rng,
    pool: &[usize],
) -> Vec<usize> {
    if pool.is_empty() {
        return Vec::new();
    }
    let fraction = rng.random_range(0.10..=0.20);
    let count = ((pool.len() as f64 * fraction).round() as usize)
        .clamp(1, pool.len());
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picks.sort_unstable();
    picks
}

/// Indices of the `k` largest entries, ties toward the lower index.
fn hot_indices(f: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..f.len()).collect();
    idx.sort_by(|&a, &b| {
        f[b].partial_cmp(&f[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

fn perturb_temporal(f: &[f64], factor: f64, seed: u64) -> FrequencyVector {
    let mut out = f.to_vec();
    if factor == 0.0 || f.is_empty() {
        return out;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pool: Vec<usize> = (0..f.len()).collect();
    for i in sampled_fraction_indices(&mut rng, &pool) {
        let sigma = f[i].max(0.0).sqrt();
        if sigma == 0.0 {
            continue;
        }
        let noise: f64 = rng.sample(Normal::new(0.0, sigma).expect("finite sigma"));
        out[i] = (f[i] + factor * noise).max(0.0).round();
    }
    out
}

fn perturb_spatial(f: &[f64], proportion: f64, seed: u64) -> FrequencyVector {
    let mut out = f.to_vec();
    let n = f.len();
    if n == 0 {
        return out;
    }
    let hot_count = ((n as f64) * 0.10).ceil() as usize;
    let hot = hot_indices(f, hot_count.max(1).min(n));
    let is_hot: std::collections::HashSet<usize> = hot.iter().copied().collect();
    let cold: Vec<usize> = (0..n).filter(|i| !is_hot.contains(i)).collect();
    if cold.is_empty() {
        return out;
    }

    let mut removed = 0u64;
    for &i in &hot {
        let kept = (proportion * f[i]).floor();
        removed += (f[i] - kept) as u64;
        out[i] = kept;
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let receivers = sampled_fraction_indices(&mut rng, &cold);
    let r = receivers.len() as u64;
    let base = removed / r;
    let extra = (removed % r) as usize;
    for (slot, &i) in receivers.iter().enumerate() {
        out[i] += (base + u64::from(slot < extra)) as f64;
    }
    out
}

/// Applies one drift scenario to a frequency vector.
///
/// Temporal accepts any `factor ≥ 0` (0 is the identity); spatial requires
/// a proportion in `(0, 1]`. Both are deterministic in `seed`.
pub fn perturb_stream(
    truth: &FrequencyVector,
    mode: PerturbMode,
    factor: f64,
    seed: u64,
) -> Result<FrequencyVector> {
    if !factor.is_finite() {
        return Err(Error::param("factor", factor, "must be finite"));
    }
    match mode {
        PerturbMode::Temporal => {
            if factor < 0.0 {
                return Err(Error::param("factor", factor, "temporal factor must be >= 0"));
            }
            Ok(perturb_temporal(truth, factor, seed))
        }
        PerturbMode::Spatial => {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::param(
                    "factor",
                    factor,
                    "spatial proportion must be in (0, 1]",
                ));
            }
            Ok(perturb_spatial(truth, factor, seed))
        }
    }
}
