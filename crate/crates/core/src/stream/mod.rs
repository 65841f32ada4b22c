//! Stream data model: traces, key indexing, ground truth, metrics,
//! synthetic workload generation, and perturbation helpers.

pub mod metrics;
pub mod perturb;
pub mod synth;
pub mod trace_io;

pub use metrics::{compute_metrics, default_hh_count, MetricsReport};
pub use perturb::{perturb_stream, PerturbMode};
pub use synth::{generate_stream, Distribution, SyntheticSpec};
pub use trace_io::{load_trace, save_trace};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense non-negative frequency vector aligned with a [`KeyIndex`].
pub type FrequencyVector = Vec<f64>;

/// A replayable stream of `(key, value)` items with a fixed key length.
///
/// Keys are stored in one contiguous buffer so iteration allocates nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTrace {
    key_len: usize,
    key_bytes: Vec<u8>,
    values: Vec<i64>,
}

impl StreamTrace {
    pub fn new(key_len: usize) -> Result<Self> {
        if key_len == 0 || key_len > 64 {
            return Err(Error::param("key_len", key_len, "must be in 1..=64 bytes"));
        }
        Ok(StreamTrace {
            key_len,
            key_bytes: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn push(&mut self, key: &[u8], value: i64) -> Result<()> {
        if key.len() != self.key_len {
            return Err(Error::DimensionMismatch {
                context: "trace key length",
                expected: self.key_len,
                actual: key.len(),
            });
        }
        if value == 0 {
            return Err(Error::param("value", value, "stream items must be non-zero"));
        }
        self.key_bytes.extend_from_slice(key);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn item(&self, i: usize) -> (&[u8], i64) {
        let start = i * self.key_len;
        (&self.key_bytes[start..start + self.key_len], self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], i64)> + '_ {
        self.key_bytes
            .chunks_exact(self.key_len)
            .zip(self.values.iter().copied())
    }

    /// Sum of all item values.
    pub fn total_value(&self) -> i64 {
        self.values.iter().sum()
    }
}

/// Ordered bijection between keys and dense column indices `0..N`.
///
/// Insertion order defines the index; re-inserting a key is a no-op that
/// returns its existing index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyIndex {
    keys: Vec<Box<[u8]>>,
    by_key: HashMap<Box<[u8]>, u32>,
}

impl KeyIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from a trace in first-appearance order.
    pub fn from_trace(trace: &StreamTrace) -> Self {
        let mut index = Self::new();
        for (key, _) in trace.iter() {
            index.insert(key);
        }
        index
    }

    pub fn insert(&mut self, key: &[u8]) -> u32 {
        if let Some(&i) = self.by_key.get(key) {
            return i;
        }
        let i = self.keys.len() as u32;
        let owned: Box<[u8]> = key.into();
        self.keys.push(owned.clone());
        self.by_key.insert(owned, i);
        i
    }

    pub fn lookup(&self, key: &[u8]) -> Option<u32> {
        self.by_key.get(key).copied()
    }

    pub fn key(&self, i: u32) -> &[u8] {
        &self.keys[i as usize]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.keys.iter().map(|k| k.as_ref())
    }
}

/// A key index together with the exact frequencies of a stream.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub index: KeyIndex,
    pub frequencies: FrequencyVector,
}

/// Sums item values per key under the given index.
///
/// Every trace key must already be present in `index`; an unknown key is an
/// error rather than a silent extension so that truth vectors stay aligned
/// with operators built from the same index.
pub fn true_frequencies(trace: &StreamTrace, index: &KeyIndex) -> Result<FrequencyVector> {
    let mut f = vec![0.0; index.len()];
    for (key, value) in trace.iter() {
        match index.lookup(key) {
            Some(i) => f[i as usize] += value as f64,
            None => {
                return Err(Error::Unsupported {
                    reason: format!("key {} not present in index", to_hex(key)),
                })
            }
        }
    }
    Ok(f)
}

/// Encodes `id` as a fixed-length big-endian key.
pub fn key_from_id(id: u64, key_len: usize) -> Vec<u8> {
    let mut key = vec![0u8; key_len];
    let be = id.to_be_bytes();
    let n = key_len.min(8);
    key[key_len - n..].copy_from_slice(&be[8 - n..]);
    key
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub(crate) fn from_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok())
        .collect()
}
