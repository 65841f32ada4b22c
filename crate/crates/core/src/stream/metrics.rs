//! Accuracy metrics comparing an estimated frequency vector to ground truth.

use crate::error::{Error, Result};

/// Summary of estimation accuracy over one frequency vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Mean absolute error over all keys.
    pub aae: f64,
    /// Mean of `|est - truth| / max(truth, 1)` over all keys.
    pub are: f64,
    /// Weighted mean relative error between the rounded frequency
    /// histograms: `Σ|n_j - n̂_j| / Σ((n_j + n̂_j)/2)`.
    pub wmre: f64,
    /// Absolute difference of the empirical entropies (natural log).
    pub entropy_ae: f64,
    /// F1 of the top-`hh_count` heavy-hitter sets.
    pub hh_f1: f64,
    /// Number of heavy hitters used for the F1 term.
    pub hh_count: usize,
}

/// Default heavy-hitter set size for an `n`-key workload: `⌈log2 n⌉`,
/// with a floor of 1.
pub fn default_hh_count(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        (n as f64).log2().ceil() as usize
    }
}

/// Empirical entropy of a non-negative frequency vector in nats.
///
/// Zero entries contribute nothing; an all-zero vector has entropy 0.
fn entropy(f: &[f64]) -> f64 {
    let total: f64 = f.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -f.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| {
            let p = x / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Frequency-of-frequencies histogram over positive rounded values:
/// `hist[j]` = number of keys with rounded frequency `j+1`.
fn rounded_histogram(f: &[f64]) -> Vec<u64> {
    let mut hist: Vec<u64> = Vec::new();
    for &x in f {
        let v = x.round();
        if v >= 1.0 {
            let j = v as usize;
            if hist.len() < j {
                hist.resize(j, 0);
            }
            hist[j - 1] += 1;
        }
    }
    hist
}

/// Weighted mean relative error between the rounded frequency histograms
/// of `est` and `truth`. Ranges over `[0, 2]`, symmetric in its arguments,
/// and 0 when both histograms are empty.
fn wmre(est: &[f64], truth: &[f64]) -> f64 {
    let he = rounded_histogram(est);
    let ht = rounded_histogram(truth);
    let len = he.len().max(ht.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..len {
        let a = he.get(j).copied().unwrap_or(0) as f64;
        let b = ht.get(j).copied().unwrap_or(0) as f64;
        num += (a - b).abs();
        den += (a + b) / 2.0;
    }
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Indices of the `k` largest entries, ties broken toward the lower index.
fn top_k(f: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..f.len()).collect();
    idx.sort_by(|&a, &b| {
        f[b].partial_cmp(&f[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

fn hh_f1(est: &[f64], truth: &[f64], k: usize) -> f64 {
    if k == 0 || est.is_empty() {
        return 0.0;
    }
    let pred: std::collections::HashSet<usize> = top_k(est, k).into_iter().collect();
    let real: std::collections::HashSet<usize> = top_k(truth, k).into_iter().collect();
    let tp = pred.intersection(&real).count() as f64;
    let precision = tp / pred.len() as f64;
    let recall = tp / real.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Computes all accuracy metrics for `est` against `truth`.
///
/// `hh_count = None` uses [`default_hh_count`] on the vector length.
pub fn compute_metrics(
    est: &[f64],
    truth: &[f64],
    hh_count: Option<usize>,
) -> Result<MetricsReport> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "compute_metrics".into(),
            expected: truth.len(),
            actual: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::param("est", 0usize, "vectors must be non-empty"));
    }
    let n = est.len() as f64;
    let aae = est
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs())
        .sum::<f64>()
        / n;
    let are = est
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs() / t.max(1.0))
        .sum::<f64>()
        / n;
    let k = hh_count.unwrap_or_else(|| default_hh_count(est.len()));
    Ok(MetricsReport {
        aae,
        are,
        wmre: wmre(est, truth),
        entropy_ae: (entropy(est) - entropy(truth)).abs(),
        hh_f1: hh_f1(est, truth, k),
        hh_count: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn aae_and_are_match_hand_example() {
        // est=[1,4], truth=[1,2]: errors are 0 and 2, so AAE = 1;
        // relative errors are 0 and 1, so ARE = 0.5.
        let r = compute_metrics(&[1.0, 4.0], &[1.0, 2.0], Some(1)).unwrap();
        assert_abs_diff_eq!(r.aae, 1.0);
        assert_abs_diff_eq!(r.are, 0.5);
    }

    #[test]
    fn are_denominator_floors_at_one() {
        // truth=0 must not divide by zero: |3-0|/max(0,1) = 3.
        let r = compute_metrics(&[3.0], &[0.0], Some(1)).unwrap();
        assert_abs_diff_eq!(r.are, 3.0);
    }

    #[test]
    fn perfect_estimate_scores_zero_error_and_full_f1() {
        let f = [5.0, 3.0, 2.0, 1.0];
        let r = compute_metrics(&f, &f, None).unwrap();
        assert_eq!(r.aae, 0.0);
        assert_eq!(r.are, 0.0);
        assert_eq!(r.wmre, 0.0);
        assert_eq!(r.entropy_ae, 0.0);
        assert_eq!(r.hh_f1, 1.0);
    }

    #[test]
    fn wmre_is_symmetric_and_bounded() {
        let a = [5.0, 3.0, 2.0, 1.0, 1.0];
        let b = [9.0, 1.0, 1.0, 0.0, 0.0];
        let rab = compute_metrics(&a, &b, Some(1)).unwrap().wmre;
        let rba = compute_metrics(&b, &a, Some(1)).unwrap().wmre;
        assert_abs_diff_eq!(rab, rba, epsilon = 1e-15);
        assert!((0.0..=2.0).contains(&rab));
        // Disjoint histograms reach the upper bound of 2.
        let r = compute_metrics(&[1.0, 1.0], &[2.0, 2.0], Some(1)).unwrap();
        assert_abs_diff_eq!(r.wmre, 2.0);
    }

    #[test]
    fn wmre_matches_hand_computed_histograms() {
        // truth [3,1,1]: hist n = {1:2, 3:1}. est [2,1,1]: hist n̂ = {1:2, 2:1}.
        // num = |0| + |1| + |1| = 2 over j=1..3; den = (4 + 1 + 1)/2 = 3.
        let r = compute_metrics(&[2.0, 1.0, 1.0], &[3.0, 1.0, 1.0], Some(1)).unwrap();
        assert_abs_diff_eq!(r.wmre, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_handles_zero_entries_and_zero_vectors() {
        // Uniform over 4 symbols: H = ln 4. Degenerate: H = 0.
        let r = compute_metrics(&[1.0, 1.0, 1.0, 1.0], &[4.0, 0.0, 0.0, 0.0], Some(1)).unwrap();
        assert_abs_diff_eq!(r.entropy_ae, 4.0f64.ln(), epsilon = 1e-12);
        let z = compute_metrics(&[0.0, 0.0], &[0.0, 0.0], Some(1)).unwrap();
        assert_eq!(z.entropy_ae, 0.0);
        assert_eq!(z.wmre, 0.0);
    }

    #[test]
    fn entropy_matches_independent_formula() {
        // Cross-check against a direct Σ p ln p accumulation written
        // differently from the implementation.
        let f = [7.0, 3.0, 2.0, 1.0, 1.0];
        let total: f64 = f.iter().sum();
        let mut h = 0.0;
        for x in f {
            if x > 0.0 {
                h -= x / total * (x / total).ln();
            }
        }
        let r = compute_metrics(&f, &[1.0; 5], Some(1)).unwrap();
        let uniform = 5.0f64.ln();
        assert_abs_diff_eq!(r.entropy_ae, (h - uniform).abs(), epsilon = 1e-12);
    }

    #[test]
    fn hh_f1_counts_set_overlap_with_tie_break() {
        // truth top-2 = {0,1}; est ranks key 2 above key 1, top-2 = {0,2}.
        // Overlap 1 of 2 on both sides: precision = recall = F1 = 0.5.
        let r = compute_metrics(&[9.0, 1.0, 5.0], &[9.0, 5.0, 1.0], Some(2)).unwrap();
        assert_abs_diff_eq!(r.hh_f1, 0.5);
        // Ties resolve toward the lower index on both vectors: est and
        // truth both pick {0} at k=1 despite the tie between 0 and 1.
        let t = compute_metrics(&[4.0, 4.0], &[4.0, 4.0], Some(1)).unwrap();
        assert_abs_diff_eq!(t.hh_f1, 1.0);
    }

    #[test]
    fn default_hh_count_is_ceil_log2() {
        assert_eq!(default_hh_count(1), 1);
        assert_eq!(default_hh_count(2), 1);
        assert_eq!(default_hh_count(1024), 10);
        assert_eq!(default_hh_count(1000), 10);
        assert_eq!(default_hh_count(1025), 11);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0], None).is_err());
        assert!(compute_metrics(&[], &[], None).is_err());
    }
}
