//! One-sided Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{DsvError, Result};

/// Sample sizes above this use the normal approximation.
pub const EXACT_MAX_N: usize = 25;
pub const MIN_N: usize = 5;
/// Absolute differences closer than this (relative) share a rank, so values
/// that differ only by decimal-to-binary rounding are treated as ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub zeros_dropped: usize,
    /// Sum of ranks of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs())
}

/// Tie-averaged ranks of `|d|` and the tie-group sizes.
fn abs_ranks(d: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && close(d[order[j + 1]].abs(), d[order[i]].abs()) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    (ranks, groups)
}

/// Tests whether `x` tends to exceed `y`. Returns the one-sided p-value of
/// the signed-rank statistic; zero differences are dropped first.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(DsvError::Precondition(format!("paired samples of length {} and {}", x.len(), y.len())));
    }
    let all: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if let Some(i) = all.iter().position(|v| !v.is_finite()) {
        return Err(DsvError::NonFinite { index: i, component: 0 });
    }
    let d: Vec<f64> = all.iter().copied().filter(|v| *v != 0.0).collect();
    let zeros_dropped = all.len() - d.len();
    if d.is_empty() {
        return Err(DsvError::NoEvidence);
    }
    let n = d.len();
    if n < MIN_N {
        return Err(DsvError::Precondition(format!(
            "{n} non-zero differences; at least {MIN_N} are required"
        )));
    }
    let (ranks, groups) = abs_ranks(&d);
    let statistic: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_upper_tail(&ranks, statistic), WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie: f64 = groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie;
        let z = (statistic - mean - 0.5) / var.sqrt();
        let normal = Normal::standard();
        (normal.sf(z), WilcoxonMethod::Normal)
    };
    Ok(WilcoxonResult {
        n,
        zeros_dropped,
        statistic,
        p_value: p_value.clamp(f64::MIN_POSITIVE, 1.0),
        method,
    })
}

/// `P(T+ >= t)` under the null that every sign is a fair coin, by counting
/// subsets of the (doubled, hence integral) ranks.
fn exact_upper_tail(ranks: &[f64], t: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let threshold = (2.0 * t).round() as usize;
    let tail: f64 = counts[threshold.min(total + 1)..].iter().sum();
    tail / 2f64.powi(ranks.len() as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
        let (ranks, _) = abs_ranks(&d);
        let observed: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
        let n = d.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if s >= observed - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn all_positive_n10() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v - 0.5 - 0.01 * v).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert!((r.p_value - 1.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(wilcoxon_signed_rank(&[1.0; 6], &[1.0; 6]), Err(DsvError::NoEvidence)));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]),
            Err(DsvError::Precondition(_))
        ));
        assert!(wilcoxon_signed_rank(&[1.0; 6], &[1.0; 5]).is_err());
    }

    #[test]
    fn null_behaviour_averages_one_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let reps = 2000;
        let mut total = 0.0;
        for _ in 0..reps {
            let x: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
            total += wilcoxon_signed_rank(&x, &y).unwrap().p_value;
        }
        let mean = total / reps as f64;
        // the discrete statistic puts mass at the observed value, nudging the
        // mean slightly above one half
        assert!((mean - 0.5).abs() < 0.03, "{mean}");
    }

    #[test]
    fn normal_approximation_large_n() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() - 0.05 + 0.1 * ((i * 7 % 5) as f64 - 2.0) / 2.0).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn rounding_noise_counts_as_tie() {
        let d = [0.815 - 0.814, 0.9 - 0.899, 0.5, -0.25, 0.75];
        let (ranks, groups) = abs_ranks(&d);
        assert_eq!(ranks[0], ranks[1]);
        assert_eq!(groups[0], 2);
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(pairs in prop::collection::vec(((-4i32..5), (-4i32..5)), 5..=12)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64 * 0.25).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64 * 0.25).collect();
            let nz = x.iter().zip(&y).filter(|(a, b)| a != b).count();
            prop_assume!(nz >= MIN_N);
            let r = wilcoxon_signed_rank(&x, &y).unwrap();
            prop_assert!((r.p_value - brute(&x, &y)).abs() < 1e-12);
        }
    }
}
