//! Count-min sketch with plain and conservative update policies.

use crate::error::{Error, Result};
use crate::sketch::hash::{fingerprint64, HashFamily};

/// A `k × width` grid of non-negative 32-bit counters.
///
/// Every key touches exactly one counter per row; a point query returns the
/// minimum over its `k` counters, which upper-bounds the true frequency for
/// insert-only streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMin {
    hash: HashFamily,
    counters: Vec<u32>,
}

impl CountMin {
    pub fn new(rows: usize, width: usize, seed: u64) -> Result<Self> {
        let hash = HashFamily::new(rows, width, seed)?;
        Ok(CountMin {
            counters: vec![0; rows * width],
            hash,
        })
    }

    pub fn rows(&self) -> usize {
        self.hash.rows()
    }

    pub fn width(&self) -> usize {
        self.hash.width()
    }

    /// Total number of counters (`rows × width`).
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

    /// Raw counter storage, row-major.
    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    pub(crate) fn load_counters(&mut self, counters: Vec<u32>) -> Result<()> {
        if counters.len() != self.counters.len() {
            return Err(Error::DimensionMismatch {
                context: "count-min counter load",
                expected: self.counters.len(),
                actual: counters.len(),
            });
        }
        self.counters = counters;
        Ok(())
    }

    fn slot(&self, row: usize, fp: u64) -> usize {
        row * self.width() + self.hash.bucket(row, fp)
    }

    fn checked_add(&mut self, slot: usize, value: u64) -> Result<()> {
        let sum = u64::from(self.counters[slot]) + value;
        self.counters[slot] = u32::try_from(sum).map_err(|_| Error::CounterSaturation {
            context: "count-min counter",
            delta: value,
        })?;
        Ok(())
    }

    /// Adds `value` to the key's counter in every row.
    pub fn update(&mut self, key: &[u8], value: u64) -> Result<()> {
        let fp = fingerprint64(key);
        for row in 0..self.rows() {
            let slot = self.slot(row, fp);
            self.checked_add(slot, value)?;
        }
        Ok(())
    }

    /// Conservative update: raises only the counters that would otherwise
    /// fall below `query(key) + value`, leaving larger counters untouched.
    /// The resulting query is still an upper bound on the true frequency.
    pub fn update_conservative(&mut self, key: &[u8], value: u64) -> Result<()> {
        if value == 0 {
            return Err(Error::param("value", value, "conservative update needs value > 0"));
        }
        let fp = fingerprint64(key);
        let target = self.query(key) + value;
        let ceiling = u32::try_from(target).map_err(|_| Error::CounterSaturation {
            context: "conservative-update counter",
            delta: value,
        })?;
        for row in 0..self.rows() {
            let slot = self.slot(row, fp);
            self.counters[slot] = self.counters[slot].max(ceiling);
        }
        Ok(())
    }

    /// Point estimate: minimum of the key's `k` counters.
    pub fn query(&self, key: &[u8]) -> u64 {
        let fp = fingerprint64(key);
        (0..self.rows())
            .map(|row| u64::from(self.counters[self.slot(row, fp)]))
            .min()
            .unwrap_or(0)
    }

    /// The counter grid as a length-`rows × width` measurement vector,
    /// row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.counters.iter().map(|&c| f64::from(c)).collect()
    }

    /// Normalization constant for recovery: the smallest row-wise maximum.
    ///
    /// Every key contributes its full mass to one counter per row, so each
    /// row's maximum is at least the largest true frequency; the minimum
    /// over rows is the tightest such bound the grid exposes.
    pub fn instance_scale(&self) -> Result<f64> {
        let mut scale = u32::MAX;
        for row in 0..self.rows() {
            let row_max = self.counters[row * self.width()..(row + 1) * self.width()]
                .iter()
                .copied()
                .max()
                .unwrap_or(0);
            scale = scale.min(row_max);
        }
        if scale == 0 {
            return Err(Error::EmptySketch {
                context: "instance scale of an all-zero sketch",
            });
        }
        Ok(f64::from(scale))
    }
}
