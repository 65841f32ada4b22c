//! Augmented pre-filter that guards hot keys behind negative-vote eviction.
//!
//! Keys hash to one small array of dedicated `(fingerprint, counter)`
//! entries. Residents accumulate exactly; non-residents accumulate negative
//! votes against the array, and once the vote-to-minimum-resident ratio
//! crosses a threshold the coldest resident is evicted (its mass moves to
//! the backing sketch) and the newcomer takes the slot. Misses below the
//! threshold are forwarded to the backing sketch unchanged.

use crate::error::{Error, Result};
use crate::sketch::hash::{fingerprint32, fingerprint64, HashFamily};

/// What the filter did with one incoming `(key, value)` item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    /// The key was resident; its counter absorbed the value exactly.
    Absorbed { array: usize, slot: usize },
    /// An empty slot accepted the key.
    Installed { array: usize, slot: usize },
    /// Vote ratio below threshold: the item belongs in the backing sketch.
    Forwarded,
    /// The coldest resident was evicted; the newcomer took its slot. The
    /// evicted tuple must be credited to the backing sketch by the caller.
    Evicted {
        array: usize,
        slot: usize,
        evicted_fp: u32,
        evicted_value: u32,
    },
}

/// Hash-addressed arrays of exact hot-key entries with negative votes.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedFilter {
    hash: HashFamily,
    entries_per_array: usize,
    lambda_thr: f64,
    votes: Vec<u32>,
    fps: Vec<u32>,
    counters: Vec<u32>,
}

impl AugmentedFilter {
    pub fn new(
        arrays: usize,
        entries_per_array: usize,
        lambda_thr: f64,
        seed: u64,
    ) -> Result<Self> {
        if arrays == 0 {
            return Err(Error::param("arrays", arrays, "need at least one array"));
        }
        if entries_per_array == 0 {
            return Err(Error::param(
                "entries_per_array",
                entries_per_array,
                "need at least one dedicated entry",
            ));
        }
        if !(lambda_thr.is_finite() && lambda_thr > 0.0) {
            return Err(Error::param(
                "lambda_thr",
                lambda_thr,
                "eviction threshold must be positive and finite",
            ));
        }
        Ok(AugmentedFilter {
            hash: HashFamily::new(1, arrays, seed)?,
            entries_per_array,
            lambda_thr,
            votes: vec![0; arrays],
            fps: vec![0; arrays * entries_per_array],
            counters: vec![0; arrays * entries_per_array],
        })
    }

    pub fn arrays(&self) -> usize {
        self.votes.len()
    }

    pub fn entries_per_array(&self) -> usize {
        self.entries_per_array
    }

    pub fn lambda_thr(&self) -> f64 {
        self.lambda_thr
    }

    pub fn seed(&self) -> u64 {
        self.hash.seed()
    }

    pub fn votes(&self) -> &[u32] {
        &self.votes
    }

    pub(crate) fn raw_fps(&self) -> &[u32] {
        &self.fps
    }

    pub(crate) fn raw_counters(&self) -> &[u32] {
        &self.counters
    }

    pub(crate) fn load(
        &mut self,
        votes: Vec<u32>,
        fps: Vec<u32>,
        counters: Vec<u32>,
    ) -> Result<()> {
        if votes.len() != self.votes.len() || fps.len() != self.fps.len() {
            return Err(Error::DimensionMismatch {
                context: "augmented-filter state load",
                expected: self.votes.len() + self.fps.len(),
                actual: votes.len() + fps.len(),
            });
        }
        if counters.len() != self.counters.len() {
            return Err(Error::DimensionMismatch {
                context: "augmented-filter counter load",
                expected: self.counters.len(),
                actual: counters.len(),
            });
        }
        self.votes = votes;
        self.fps = fps;
        self.counters = counters;
        Ok(())
    }

    /// Array index a key hashes to.
    pub fn array_of(&self, key: &[u8]) -> usize {
        self.hash.bucket(0, fingerprint64(key))
    }

    fn span(&self, array: usize) -> std::ops::Range<usize> {
        array * self.entries_per_array..(array + 1) * self.entries_per_array
    }

    /// Routes one item through the resident/install/vote cases.
    pub fn insert(&mut self, key: &[u8], value: u64) -> Result<FilterOutcome> {
        if value == 0 {
            return Err(Error::param("value", value, "filter inserts need value > 0"));
        }
        let value = u32::try_from(value).map_err(|_| Error::CounterSaturation {
            context: "augmented-filter insert value",
            delta: value,
        })?;
        let array = self.array_of(key);
        let fp = fingerprint32(key);
        let span = self.span(array);

        // Resident fingerprint: absorb exactly.
        for slot in span.clone() {
            if self.counters[slot] > 0 && self.fps[slot] == fp {
                self.counters[slot] =
                    self.counters[slot]
                        .checked_add(value)
                        .ok_or(Error::CounterSaturation {
                            context: "augmented-filter counter",
                            delta: u64::from(value),
                        })?;
                return Ok(FilterOutcome::Absorbed {
                    array,
                    slot: slot - span.start,
                });
            }
        }

        // Empty slot: install.
        for slot in span.clone() {
            if self.counters[slot] == 0 {
                self.fps[slot] = fp;
                self.counters[slot] = value;
                return Ok(FilterOutcome::Installed {
                    array,
                    slot: slot - span.start,
                });
            }
        }

        // Full array: vote against it, then compare the vote mass to the
        // coldest resident. Votes are bookkeeping only, so they saturate
        // instead of erroring.
        self.votes[array] = self.votes[array].saturating_add(value);
        let (min_slot, min_count) = span
            .clone()
            .map(|slot| (slot, self.counters[slot]))
            .min_by_key(|&(slot, count)| (count, slot))
            .expect("arrays have at least one entry");
        let lambda = f64::from(self.votes[array]) / f64::from(min_count);
        if lambda > self.lambda_thr {
            let evicted_fp = self.fps[min_slot];
            let evicted_value = self.counters[min_slot];
            self.fps[min_slot] = fp;
            self.counters[min_slot] = value;
            self.votes[array] = 0;
            Ok(FilterOutcome::Evicted {
                array,
                slot: min_slot - span.start,
                evicted_fp,
                evicted_value,
            })
        } else {
            Ok(FilterOutcome::Forwarded)
        }
    }

    /// Exact resident counter, or 0 when the key is not resident.
    pub fn query(&self, key: &[u8]) -> u64 {
        let array = self.array_of(key);
        let fp = fingerprint32(key);
        for slot in self.span(array) {
            if self.counters[slot] > 0 && self.fps[slot] == fp {
                return u64::from(self.counters[slot]);
            }
        }
        0
    }

    /// All live entries as `(array, fingerprint, counter)`.
    pub fn contents(&self) -> impl Iterator<Item = (usize, u32, u32)> + '_ {
        let e = self.entries_per_array;
        self.counters
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(move |(slot, &c)| (slot / e, self.fps[slot], c))
    }

    /// Sum of all dedicated counters (votes excluded).
    pub fn dedicated_mass(&self) -> u64 {
        self.counters.iter().map(|&c| u64::from(c)).sum()
    }
}
