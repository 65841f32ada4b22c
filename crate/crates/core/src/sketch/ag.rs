//! Augmented sketch baseline: a small exact pre-filter over a count-min
//! grid, with hot/cold exchange between them.

use crate::error::{Error, Result};
use crate::sketch::count_min::CountMin;

/// Default pre-filter capacity in entries.
pub const DEFAULT_AG_ENTRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
struct AgEntry {
    key: Box<[u8]>,
    /// Estimate at install plus exact increments since residence began.
    new_count: u32,
    /// Estimate at install; `new - old` is the exact residence delta.
    old_count: u32,
}

/// Exact pre-filter + count-min backing store with exchange on hot misses.
///
/// A key resident in the pre-filter is counted exactly for as long as it
/// stays; misses go to the count-min grid, and a missing key whose grid
/// estimate overtakes the coldest resident swaps in, flushing the evicted
/// resident's exact residence delta back to the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgSketch {
    entries: Vec<AgEntry>,
    capacity: usize,
    cm: CountMin,
    cm_inserted: u64,
}

impl AgSketch {
    /// Builds from an explicit geometry.
    pub fn with_geometry(capacity: usize, rows: usize, width: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("capacity", capacity, "pre-filter needs at least one entry"));
        }
        Ok(AgSketch {
            entries: Vec::with_capacity(capacity),
            capacity,
            cm: CountMin::new(rows, width, seed)?,
            cm_inserted: 0,
        })
    }

    /// Splits a byte budget between the default-size pre-filter and the
    /// grid. Each entry costs `key_len + 8` bytes; the pre-filter shrinks
    /// below its default capacity rather than starve the grid of half the
    /// budget.
    pub fn new(total_bytes: usize, rows: usize, key_len: usize, seed: u64) -> Result<Self> {
        let entry_bytes = key_len + 8;
        let capacity = DEFAULT_AG_ENTRIES
            .min((total_bytes / 2) / entry_bytes)
            .max(1);
        let cm_bytes = total_bytes
            .checked_sub(capacity * entry_bytes)
            .ok_or_else(|| Error::param("total_bytes", total_bytes, "budget too small"))?;
        let width = cm_bytes / (4 * rows);
        if width == 0 {
            return Err(Error::param(
                "total_bytes",
                total_bytes,
                "budget leaves no room for grid counters",
            ));
        }
        Self::with_geometry(capacity, rows, width, seed)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn resident_keys(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.entries.iter().map(|e| &*e.key)
    }

    pub fn cm(&self) -> &CountMin {
        &self.cm
    }

    /// Total mass ever inserted into the backing grid.
    pub fn cm_inserted_mass(&self) -> u64 {
        self.cm_inserted
    }

    /// Exact mass currently held by the pre-filter (residence deltas).
    pub fn filter_mass(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| u64::from(e.new_count - e.old_count))
            .sum()
    }

    fn cm_update(&mut self, key: &[u8], value: u64) -> Result<()> {
        self.cm.update(key, value)?;
        self.cm_inserted += value;
        Ok(())
    }

    /// Processes one stream item.
    pub fn process(&mut self, key: &[u8], value: u64) -> Result<()> {
        if value == 0 {
            return Err(Error::param("value", value, "items must carry value > 0"));
        }
        if let Some(entry) = self.entries.iter_mut().find(|e| &*e.key == key) {
            entry.new_count = u32::try_from(u64::from(entry.new_count) + value).map_err(|_| {
                Error::CounterSaturation {
                    context: "pre-filter counter",
                    delta: value,
                }
            })?;
            return Ok(());
        }
        if self.entries.len() < self.capacity {
            let v = u32::try_from(value).map_err(|_| Error::CounterSaturation {
                context: "pre-filter install",
                delta: value,
            })?;
            self.entries.push(AgEntry {
                key: key.into(),
                new_count: v,
                old_count: 0,
            });
            return Ok(());
        }
        self.cm_update(key, value)?;
        let est = self.cm.query(key);
        let min_idx = (0..self.entries.len())
            .min_by_key(|&i| (self.entries[i].new_count, i))
            .expect("filter is full here");
        if est > u64::from(self.entries[min_idx].new_count) {
            let evicted = self.entries[min_idx].clone();
            let delta = u64::from(evicted.new_count - evicted.old_count);
            if delta > 0 {
                let evicted_key = evicted.key.clone();
                self.cm_update(&evicted_key, delta)?;
            }
            let est32 = u32::try_from(est).map_err(|_| Error::CounterSaturation {
                context: "pre-filter exchange",
                delta: est,
            })?;
            self.entries[min_idx] = AgEntry {
                key: key.into(),
                new_count: est32,
                old_count: est32,
            };
        }
        Ok(())
    }

    /// Point estimate: exact pre-filter counter when resident, grid
    /// estimate otherwise.
    pub fn query(&self, key: &[u8]) -> u64 {
        match self.entries.iter().find(|e| &*e.key == key) {
            Some(entry) => u64::from(entry.new_count),
            None => self.cm.query(key),
        }
    }
}
