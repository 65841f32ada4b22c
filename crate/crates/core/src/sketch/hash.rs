//! Seeded multiply-shift hashing over 64-bit key fingerprints.
//!
//! Every data-plane structure hashes the same way: a key's bytes are folded
//! once into a 64-bit fingerprint, and each row/array owns a `(a, b)`
//! multiply-shift pair that maps the fingerprint to a bucket. The layout is
//! platform-independent, so identical seeds reproduce identical structures
//! everywhere.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Folds key bytes to a 64-bit fingerprint (FNV-1a).
pub fn fingerprint64(key: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in key {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates fingerprints fed to short hashes.
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// 32-bit key fingerprint used by the augmented filter's entries.
///
/// Derived independently of the bucket hashes so that fingerprint equality
/// carries ~32 bits of evidence even for keys that collide in a bucket.
pub fn fingerprint32(key: &[u8]) -> u32 {
    (mix64(fingerprint64(key) ^ 0x9e37_79b9_7f4a_7c15) >> 32) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PairSeeds {
    a: u64,
    b: u64,
}

impl PairSeeds {
    fn draw(rng: &mut ChaCha12Rng) -> Self {
        PairSeeds {
            a: rng.random::<u64>() | 1,
            b: rng.random::<u64>(),
        }
    }

    fn mix(&self, x: u64) -> u64 {
        mix64(self.a.wrapping_mul(x).wrapping_add(self.b))
    }
}

/// `k` independent multiply-shift hash functions onto `[0, width)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    width: usize,
    rows: Vec<PairSeeds>,
    seed: u64,
}

impl HashFamily {
    /// Builds `k` row hashes of the given bucket width from one master seed.
    pub fn new(k: usize, width: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", k, "need at least one hash row"));
        }
        if width == 0 {
            return Err(Error::param("width", width, "bucket width must be positive"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let rows = (0..k).map(|_| PairSeeds::draw(&mut rng)).collect();
        Ok(HashFamily { width, rows, seed })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The master seed this family was derived from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket of a fingerprint in the given row, in `[0, width)`.
    ///
    /// The mixed 64-bit value is folded onto the width by 128-bit
    /// multiply-high, which is unbiased to within `width / 2^64`.
    pub fn bucket(&self, row: usize, fp: u64) -> usize {
        let mixed = self.rows[row].mix(fp);
        ((u128::from(mixed) * self.width as u128) >> 64) as usize
    }
}

/// `k` independent ±1 sign hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignFamily {
    rows: Vec<PairSeeds>,
    seed: u64,
}

impl SignFamily {
    pub fn new(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", k, "need at least one sign row"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let rows = (0..k).map(|_| PairSeeds::draw(&mut rng)).collect();
        Ok(SignFamily { rows, seed })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sign of a fingerprint in the given row: `+1` or `-1`.
    pub fn sign(&self, row: usize, fp: u64) -> i64 {
        if self.rows[row].mix(fp) >> 63 == 0 {
            1
        } else {
            -1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::key_from_id;

    #[test]
    fn fingerprints_are_stable_and_length_sensitive() {
        assert_eq!(fingerprint64(b"abc"), fingerprint64(b"abc"));
        assert_ne!(fingerprint64(b"abc"), fingerprint64(b"abd"));
        assert_ne!(fingerprint64(b"\x00"), fingerprint64(b"\x00\x00"));
        assert_eq!(fingerprint32(b"abc"), fingerprint32(b"abc"));
        assert_ne!(fingerprint32(b"abc"), fingerprint32(b"abd"));
    }

    #[test]
    fn buckets_are_deterministic_per_seed() {
        let h1 = HashFamily::new(4, 64, 7).unwrap();
        let h2 = HashFamily::new(4, 64, 7).unwrap();
        let h3 = HashFamily::new(4, 64, 8).unwrap();
        let fp = fingerprint64(b"key");
        let mut differs = false;
        for row in 0..4 {
            assert_eq!(h1.bucket(row, fp), h2.bucket(row, fp));
            differs |= h1.bucket(row, fp) != h3.bucket(row, fp);
        }
        assert!(differs, "seed change did not move any bucket");
    }

    #[test]
    fn buckets_stay_in_range() {
        let h = HashFamily::new(3, 17, 123).unwrap();
        for id in 0..10_000u64 {
            let fp = fingerprint64(&key_from_id(id, 4));
            for row in 0..3 {
                assert!(h.bucket(row, fp) < 17);
            }
        }
    }

    #[test]
    fn buckets_are_uniform_by_chi_square() {
        // 10^5 sequential keys into 64 buckets: chi-square with df = 63 has
        // mean 63 and std ~11.2; stay under the ~5-sigma bound of 120.
        let h = HashFamily::new(2, 64, 2024).unwrap();
        for row in 0..2 {
            let mut counts = vec![0f64; 64];
            let n = 100_000u64;
            for id in 0..n {
                counts[h.bucket(row, fingerprint64(&key_from_id(id, 4)))] += 1.0;
            }
            let expected = n as f64 / 64.0;
            let chi2: f64 = counts
                .iter()
                .map(|c| (c - expected) * (c - expected) / expected)
                .sum();
            assert!(chi2 < 120.0, "row {row}: chi-square {chi2}");
        }
    }

    #[test]
    fn signs_are_deterministic_and_balanced() {
        let s = SignFamily::new(2, 5).unwrap();
        let mut pos = 0i64;
        let n = 20_000u64;
        for id in 0..n {
            let fp = fingerprint64(&key_from_id(id, 4));
            let g = s.sign(0, fp);
            assert!(g == 1 || g == -1);
            assert_eq!(g, s.sign(0, fp));
            if g == 1 {
                pos += 1;
            }
        }
        // Balanced to within 5 binomial sigmas (sigma = sqrt(n)/2 ~ 71).
        let dev = (pos - n as i64 / 2).abs();
        assert!(dev < 360, "sign bias: {pos} positives of {n}");
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        assert!(HashFamily::new(0, 4, 1).is_err());
        assert!(HashFamily::new(2, 0, 1).is_err());
        assert!(SignFamily::new(0, 1).is_err());
    }
}
