//! Count sketch: signed counters with a median point query.

use crate::error::{Error, Result};
use crate::sketch::hash::{fingerprint64, HashFamily, SignFamily};

/// A `k × width` grid of signed 32-bit counters with per-row ±1 sign hashes.
///
/// Each update adds `sign × value` to one counter per row; the point query
/// takes the median of the per-row sign-corrected counters, which is an
/// unbiased estimate of the true frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSketch {
    hash: HashFamily,
    signs: SignFamily,
    counters: Vec<i32>,
}

impl CountSketch {
    pub fn new(rows: usize, width: usize, seed: u64) -> Result<Self> {
        let hash = HashFamily::new(rows, width, seed)?;
        // Derive the sign seeds from the same master seed through a fixed
        // tweak so one seed reproduces the whole structure.
        let signs = SignFamily::new(rows, seed ^ 0x5167_0000_0000_0001)?;
        Ok(CountSketch {
            counters: vec![0; rows * width],
            hash,
            signs,
        })
    }

    pub fn rows(&self) -> usize {
        self.hash.rows()
    }

    pub fn width(&self) -> usize {
        self.hash.width()
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.iter().all(|&c| c == 0)
    }

    pub fn seed(&self) -> u64 {
        self.hash.seed()
    }

    pub fn hash(&self) -> &HashFamily {
        &self.hash
    }

    pub fn signs(&self) -> &SignFamily {
        &self.signs
    }

    pub fn counters(&self) -> &[i32] {
        &self.counters
    }

    /// Adds `sign_row(key) × value` to the key's counter in every row.
    pub fn update(&mut self, key: &[u8], value: i64) -> Result<()> {
        let fp = fingerprint64(key);
        for row in 0..self.rows() {
            let slot = row * self.width() + self.hash.bucket(row, fp);
            let sum = i64::from(self.counters[slot]) + self.signs.sign(row, fp) * value;
            self.counters[slot] = i32::try_from(sum).map_err(|_| Error::CounterSaturation {
                context: "count-sketch counter",
                delta: value.unsigned_abs(),
            })?;
        }
        Ok(())
    }

    /// Per-row sign-corrected estimates `g_row(key) × counter`.
    pub fn row_estimates(&self, key: &[u8]) -> Vec<i64> {
        let fp = fingerprint64(key);
        (0..self.rows())
            .map(|row| {
                let slot = row * self.width() + self.hash.bucket(row, fp);
                self.signs.sign(row, fp) * i64::from(self.counters[slot])
            })
            .collect()
    }

    /// Point estimate: median of the per-row estimates (mean of the two
    /// central values when the row count is even).
    pub fn query(&self, key: &[u8]) -> f64 {
        let mut est = self.row_estimates(key);
        est.sort_unstable();
        let k = est.len();
        if k % 2 == 1 {
            est[k / 2] as f64
        } else {
            (est[k / 2 - 1] as f64 + est[k / 2] as f64) / 2.0
        }
    }

    /// The counter grid as a measurement vector, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.counters.iter().map(|&c| f64::from(c)).collect()
    }
}
