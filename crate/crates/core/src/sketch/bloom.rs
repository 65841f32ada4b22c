//! Bloom filter for tracking which keys have entered the data plane.

use crate::error::{Error, Result};
use crate::sketch::hash::{fingerprint64, HashFamily};

/// A plain `m`-bit Bloom filter with `k` hash probes.
///
/// Bits are only ever set, so membership answers have no false negatives
/// and the insert's `was_new` flag is monotone: a key reports new at most
/// once (modulo false positives against earlier keys).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    hash: HashFamily,
    blocks: Vec<u64>,
    bits: usize,
    distinct: u64,
}

impl BloomFilter {
    pub fn new(bits: usize, hashes: usize, seed: u64) -> Result<Self> {
        if bits == 0 {
            return Err(Error::param("bits", bits, "bit array must be non-empty"));
        }
        let hash = HashFamily::new(hashes, bits, seed)?;
        Ok(BloomFilter {
            hash,
            blocks: vec![0; bits.div_ceil(64)],
            bits,
            distinct: 0,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn hashes(&self) -> usize {
        self.hash.rows()
    }

    pub fn seed(&self) -> u64 {
        self.hash.seed()
    }

    /// Number of inserts that found at least one unset bit, i.e. distinct
    /// keys as the filter itself can tell them apart.
    pub fn distinct_inserted(&self) -> u64 {
        self.distinct
    }

    pub(crate) fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    pub(crate) fn load(&mut self, blocks: Vec<u64>, distinct: u64) -> Result<()> {
        if blocks.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                context: "bloom bit-block load",
                expected: self.blocks.len(),
                actual: blocks.len(),
            });
        }
        self.blocks = blocks;
        self.distinct = distinct;
        Ok(())
    }

    fn probe(&self, fp: u64, row: usize) -> (usize, u64) {
        let bit = self.hash.bucket(row, fp);
        (bit / 64, 1u64 << (bit % 64))
    }

    /// Sets the key's bits; returns true iff any bit was previously unset.
    pub fn insert(&mut self, key: &[u8]) -> bool {
        let fp = fingerprint64(key);
        let mut was_new = false;
        for row in 0..self.hashes() {
            let (block, mask) = self.probe(fp, row);
            if self.blocks[block] & mask == 0 {
                was_new = true;
                self.blocks[block] |= mask;
            }
        }
        if was_new {
            self.distinct += 1;
        }
        was_new
    }

    /// True if every bit for the key is set (definitely-absent keys report
    /// false; present keys always report true).
    pub fn contains(&self, key: &[u8]) -> bool {
        let fp = fingerprint64(key);
        (0..self.hashes()).all(|row| {
            let (block, mask) = self.probe(fp, row);
            self.blocks[block] & mask != 0
        })
    }

    /// Expected false-positive rate after `n` distinct inserts:
    /// `(1 - e^{-k·n/m})^k`.
    pub fn analytic_fpr(&self, n: u64) -> f64 {
        let k = self.hashes() as f64;
        let m = self.bits as f64;
        (1.0 - (-k * n as f64 / m).exp()).powf(k)
    }
}
