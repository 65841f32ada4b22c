//! Constant-time data-plane summaries and their composition.
//!
//! The individual structures — count-min, count sketch, Bloom filter,
//! augmented hot-key filter, and the augmented-sketch baseline — are usable
//! on their own; [`FloreDataPlane`] wires the first four behind a single
//! byte budget for the recovery pipeline.

pub mod ag;
pub mod bloom;
pub mod budget;
pub mod count_min;
pub mod count_sketch;
pub mod filter;
pub mod hash;
pub mod plane;

pub use ag::{AgSketch, DEFAULT_AG_ENTRIES};
pub use bloom::BloomFilter;
pub use budget::{allocate_memory, MemoryBudget, BLOOM_BITS_PER_KEY, CM_CAP_BYTES, MIN_TOTAL_BYTES};
pub use count_min::CountMin;
pub use count_sketch::CountSketch;
pub use filter::{AugmentedFilter, FilterOutcome};
pub use hash::{fingerprint32, fingerprint64, HashFamily, SignFamily};
pub use plane::{FloreDataPlane, PlaneConfig, PlaneStats};
