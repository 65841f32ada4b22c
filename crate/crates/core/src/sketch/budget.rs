//! Byte-budget split across the data plane's three structures.

use crate::error::{Error, Result};

/// Minimum total budget the plane can operate in.
pub const MIN_TOTAL_BYTES: usize = 1024;

/// Hard cap on the count-min portion.
pub const CM_CAP_BYTES: usize = 256 * 1024;

/// Bloom tracking budget per expected key, in bits.
pub const BLOOM_BITS_PER_KEY: f64 = 9.6;

/// How a total byte budget is carved up between the Bloom tracker, the
/// count-min grid, and the augmented filter.
///
/// The base rule gives the Bloom filter half and splits the rest evenly,
/// but the Bloom share never exceeds what `9.6` bits per expected key can
/// use, and the count-min share is hard-capped; all slack flows to the
/// filter, so the three parts always sum to the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub total_bytes: usize,
    pub bloom_bytes: usize,
    pub cm_bytes: usize,
    pub filter_bytes: usize,
}

/// Splits `total_bytes` for a stream with roughly `expected_keys` distinct
/// keys.
pub fn allocate_memory(total_bytes: usize, expected_keys: usize) -> Result<MemoryBudget> {
    if total_bytes < MIN_TOTAL_BYTES {
        return Err(Error::param(
            "total_bytes",
            total_bytes,
            "budget below the 1 KB minimum",
        ));
    }
    if expected_keys == 0 {
        return Err(Error::param("expected_keys", expected_keys, "must be positive"));
    }
    let bloom_cap = ((BLOOM_BITS_PER_KEY * expected_keys as f64) / 8.0).ceil() as usize;
    let bloom_bytes = (total_bytes / 2).min(bloom_cap).max(1);
    let cm_bytes = (total_bytes / 4).min(CM_CAP_BYTES);
    let filter_bytes = total_bytes - bloom_bytes - cm_bytes;
    Ok(MemoryBudget {
        total_bytes,
        bloom_bytes,
        cm_bytes,
        filter_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_key_count_yields_half_quarter_quarter() {
        // With enough expected keys the Bloom cap does not bind: 64 KB
        // splits 32/16/16 KB.
        let b = allocate_memory(64 * 1024, 100_000).unwrap();
        assert_eq!(b.bloom_bytes, 32 * 1024);
        assert_eq!(b.cm_bytes, 16 * 1024);
        assert_eq!(b.filter_bytes, 16 * 1024);
        assert_eq!(b.bloom_bytes + b.cm_bytes + b.filter_bytes, b.total_bytes);
    }

    #[test]
    fn count_min_cap_routes_residual_to_filter() {
        let b = allocate_memory(4 * 1024 * 1024, 10_000_000).unwrap();
        assert_eq!(b.cm_bytes, CM_CAP_BYTES);
        assert_eq!(b.bloom_bytes, 2 * 1024 * 1024);
        assert_eq!(
            b.filter_bytes,
            4 * 1024 * 1024 - CM_CAP_BYTES - 2 * 1024 * 1024
        );
        assert!(b.filter_bytes > b.cm_bytes);
    }

    #[test]
    fn bloom_cap_binds_for_small_key_counts() {
        // 1024 expected keys need ceil(9.6*1024/8) = 1229 bloom bytes.
        let b = allocate_memory(4096, 1024).unwrap();
        assert_eq!(b.bloom_bytes, 1229);
        assert_eq!(b.cm_bytes, 1024);
        assert_eq!(b.filter_bytes, 4096 - 1229 - 1024);
        assert_eq!(b.bloom_bytes + b.cm_bytes + b.filter_bytes, b.total_bytes);
    }

    #[test]
    fn below_minimum_budget_is_rejected() {
        assert!(allocate_memory(512, 1000).is_err());
        assert!(allocate_memory(1023, 1000).is_err());
        assert!(allocate_memory(1024, 1000).is_ok());
        assert!(allocate_memory(4096, 0).is_err());
    }

    #[test]
    fn split_always_sums_to_total() {
        for total in [1024usize, 2048, 65_536, 1 << 20, 3 << 20] {
            for keys in [10usize, 1000, 160_000] {
                let b = allocate_memory(total, keys).unwrap();
                assert_eq!(b.bloom_bytes + b.cm_bytes + b.filter_bytes, total);
                assert!(b.cm_bytes <= CM_CAP_BYTES);
                assert!(b.bloom_bytes <= total / 2);
            }
        }
    }
}
