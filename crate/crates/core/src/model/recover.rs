//! Frequency recovery: turn a data plane's counters into integer
//! per-key estimates through the trained generator, then merge the
//! exactly-tracked heavy keys back in.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::net::FloreModel;
use crate::error::{Error, Result};
use crate::sketch::FloreDataPlane;
use crate::stream::KeyIndex;

/// Result of one recovery pass over a data plane.
#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    /// One estimate per key of the index passed in, in index order.
    /// Always non-negative integers (stored as `f64`).
    pub estimates: Vec<f64>,
    /// True when the counter grid held no mass, in which case the
    /// estimates are exactly the filter contents (zeros elsewhere).
    pub sketch_empty: bool,
}

/// Recovers per-key frequency estimates from the plane's counter grid
/// with the generator, then adds the filter's exact contents.
///
/// The index names the keys to estimate, in the order the model was
/// trained over; its length must equal the model's output width. Keys
/// the plane has never admitted are reported as zero.
pub fn recover(
    plane: &FloreDataPlane,
    model: &FloreModel,
    index: &KeyIndex,
    seed: u64,
) -> Result<RecoveryOutcome> {
    let cfg = model.config();
    if index.len() != cfg.n {
        return Err(Error::DimensionMismatch {
            context: "recovery index size",
            expected: cfg.n,
            actual: index.len(),
        });
    }
    let counters = plane.cm().flatten();
    if counters.len() != cfg.m {
        return Err(Error::DimensionMismatch {
            context: "recovery counter grid",
            expected: cfg.m,
            actual: counters.len(),
        });
    }

    let (mut estimates, sketch_empty) = match plane.cm().instance_scale() {
        Ok(scale) => {
            let normalized: Vec<f64> = counters.iter().map(|v| v / scale).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..cfg.noise_dim())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let generated = model.forward_flow(&normalized, &noise, None)?;
            let estimates = generated
                .into_iter()
                .map(|v| (scale * v).max(0.0).round())
                .collect();
            (estimates, false)
        }
        Err(Error::EmptySketch { .. }) => (vec![0.0; cfg.n], true),
        Err(other) => return Err(other),
    };

    // Keys the plane has never seen carry no evidence; report zero for
    // them rather than generator noise.
    for (i, key) in index.iter().enumerate() {
        if !plane.bloom().contains(key) {
            estimates[i] = 0.0;
        }
    }

    // Heavy keys live in the filter with exact counts; add them on top
    // of the grid-derived part.
    for (key, value) in plane.filter_contents_by_key() {
        if let Some(i) = index.lookup(&key) {
            estimates[i as usize] += value as f64;
        }
    }

    Ok(RecoveryOutcome {
        estimates,
        sketch_empty,
    })
}
