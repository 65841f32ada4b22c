//! Synthetic workload generation with skewed frequency profiles.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp, LogNormal, Pareto};

use crate::error::{Error, Result};
use crate::stream::{key_from_id, FrequencyVector, GroundTruth, KeyIndex, StreamTrace};

/// Frequency profile families for synthetic streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Rank-frequency law `f_i ∝ 1/i^alpha`.
    Zipf { alpha: f64 },
    /// Integer-floored rank law `f_i ∝ ⌊N/i^alpha⌋`.
    ZipfIcml { alpha: f64 },
    /// Heavy-tailed law with tail `P(F > x) = (x_m/x)^alpha`.
    Pareto { alpha: f64, x_m: f64 },
    /// `ln F ~ Normal(mu, sigma^2)`.
    LogNormal { mu: f64, sigma: f64 },
    /// `F ~ Exp(lambda)`.
    Exp { lambda: f64 },
}

/// Recipe for one synthetic stream.
///
/// `permute_seed = None` leaves frequencies in rank order (largest first);
/// otherwise ranks are shuffled across key ids. `rng_seed` drives both the
/// distribution sampling (for the sampled families) and the item interleave.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub keys: usize,
    pub total_items: u64,
    pub distribution: Distribution,
    pub key_len: usize,
    pub permute_seed: Option<u64>,
    pub rng_seed: u64,
}

impl SyntheticSpec {
    pub fn zipf(keys: usize, total_items: u64, alpha: f64, rng_seed: u64) -> Self {
        SyntheticSpec {
            keys,
            total_items,
            distribution: Distribution::Zipf { alpha },
            key_len: 4,
            permute_seed: Some(rng_seed ^ 0xa5a5_5a5a),
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.keys == 0 {
            return Err(Error::param("keys", self.keys, "must be positive"));
        }
        if self.total_items == 0 {
            return Err(Error::param("total_items", self.total_items, "must be positive"));
        }
        if self.key_len == 0 || self.key_len > 64 {
            return Err(Error::param("key_len", self.key_len, "must be in 1..=64"));
        }
        let ok = match self.distribution {
            Distribution::Zipf { alpha } | Distribution::ZipfIcml { alpha } => alpha > 0.0,
            Distribution::Pareto { alpha, x_m } => alpha > 0.0 && x_m > 0.0,
            Distribution::LogNormal { sigma, .. } => sigma > 0.0,
            Distribution::Exp { lambda } => lambda > 0.0,
        };
        if !ok {
            return Err(Error::param(
                "distribution",
                format!("{:?}", self.distribution),
                "shape parameters must be positive",
            ));
        }
        Ok(())
    }
}

/// Raw rank weights before scaling to the item budget, largest first.
///
/// Deterministic families are computed in closed form; sampled families draw
/// `keys` variates from the seeded generator and sort them descending so the
/// pre-permutation profile is always in rank order.
pub fn rank_weights(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.keys;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.rng_seed);
    let mut w: Vec<f64> = match spec.distribution {
        Distribution::Zipf { alpha } => {
            (1..=n).map(|i| (i as f64).powf(-alpha)).collect()
        }
        Distribution::ZipfIcml { alpha } => (1..=n)
            .map(|i| (n as f64 / (i as f64).powf(alpha)).floor())
            .collect(),
        Distribution::Pareto { alpha, x_m } => {
            let dist = Pareto::new(x_m, alpha)
                .map_err(|e| Error::param("pareto", format!("{e:?}"), "invalid shape"))?;
            (0..n).map(|_| rng.sample(dist)).collect()
        }
        Distribution::LogNormal { mu, sigma } => {
            let dist = LogNormal::new(mu, sigma)
                .map_err(|e| Error::param("lognormal", format!("{e:?}"), "invalid shape"))?;
            (0..n).map(|_| rng.sample(dist)).collect()
        }
        Distribution::Exp { lambda } => {
            let dist = Exp::new(lambda)
                .map_err(|e| Error::param("exp", format!("{e:?}"), "invalid rate"))?;
            (0..n).map(|_| rng.sample(dist)).collect()
        }
    };
    if matches!(
        spec.distribution,
        Distribution::Pareto { .. } | Distribution::LogNormal { .. } | Distribution::Exp { .. }
    ) {
        w.sort_by(|a, b| b.partial_cmp(a).unwrap());
    }
    Ok(w)
}

/// Integer frequencies scaled so the total approximates `spec.total_items`.
///
/// Scaling floors `total * w_i / Σw` with a minimum of 1 so every key
/// appears at least once. Returned in rank order (before permutation).
pub fn rank_frequencies(spec: &SyntheticSpec) -> Result<Vec<u64>> {
    let w = rank_weights(spec)?;
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err(Error::param("weights", sum, "weight sum must be positive"));
    }
    let total = spec.total_items as f64;
    Ok(w.iter()
        .map(|wi| ((total * wi / sum).floor() as u64).max(1))
        .collect())
}

/// Generates a synthetic stream and its exact ground truth.
///
/// The trace expands each key to unit-value items and interleaves them with
/// a seeded shuffle, so `true_frequencies(trace, truth.index)` reproduces
/// `truth.frequencies` exactly for every seed.
pub fn generate_stream(spec: &SyntheticSpec) -> Result<(StreamTrace, GroundTruth)> {
    let ranked = rank_frequencies(spec)?;
    let n = spec.keys;

    // Assign rank r's frequency to key `assign[r]`.
    let mut assign: Vec<usize> = (0..n).collect();
    if let Some(seed) = spec.permute_seed {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        assign.shuffle(&mut rng);
    }
    let mut freqs = vec![0u64; n];
    for (rank, &key_id) in assign.iter().enumerate() {
        freqs[key_id] = ranked[rank];
    }

    let total: u64 = freqs.iter().sum();
    let mut order: Vec<u32> = Vec::with_capacity(total as usize);
    for (key_id, &f) in freqs.iter().enumerate() {
        for _ in 0..f {
            order.push(key_id as u32);
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.rng_seed ^ 0x5117_3a1e_9b0d_c84f);
    order.shuffle(&mut rng);

    let mut trace = StreamTrace::new(spec.key_len)?;
    let mut index = KeyIndex::new();
    for key_id in 0..n {
        index.insert(&key_from_id(key_id as u64, spec.key_len));
    }
    for key_id in order {
        trace.push(index.key(key_id), 1)?;
    }

    let frequencies: FrequencyVector = freqs.iter().map(|&f| f as f64).collect();
    Ok((trace, GroundTruth { index, frequencies }))
}
