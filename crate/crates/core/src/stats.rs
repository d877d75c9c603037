//! Monte Carlo reductions: batch-means standard errors and the
//! Kolmogorov–Smirnov statistic.

use serde::Serialize;

use crate::special::compensated_sum;

/// Number of batches used for every batch-means standard error.
pub const BATCHES: usize = 32;

/// Half-width multiplier for Monte Carlo confidence intervals.
pub const CI_SE: f64 = 3.0;

/// A sample mean with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// `3·SE`
    pub fn ci(&self) -> f64 {
        CI_SE * self.std_error
    }
}

/// Mean and batch-means standard error of `values`, which must be in a
/// fixed (path-index) order. Values are split into [`BATCHES`] contiguous
/// batches; the standard error is the spread of batch means over √B.
///
/// All sums are compensated, so the result depends only on the values and
/// their order, not on how they were produced.
pub fn batch_means(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let batches = BATCHES.min(n);
    if batches < 2 {
        return MeanEstimate {
            mean,
            std_error: f64::INFINITY,
            n,
        };
    }
    let bounds: Vec<usize> = (0..=batches).map(|b| b * n / batches).collect();
    let batch_means: Vec<f64> = bounds
        .windows(2)
        .map(|w| compensated_sum(values[w[0]..w[1]].iter().copied()) / (w[1] - w[0]) as f64)
        .collect();
    let grand = compensated_sum(batch_means.iter().copied()) / batches as f64;
    let var = compensated_sum(batch_means.iter().map(|m| (m - grand) * (m - grand)))
        / (batches - 1) as f64;
    MeanEstimate {
        mean,
        std_error: (var / batches as f64).sqrt(),
        n,
    }
}

/// Batch-means estimate of `E[g(item)]` over an ordered slice.
pub fn mean_of<T, F: Fn(&T) -> f64>(items: &[T], g: F) -> MeanEstimate {
    let values: Vec<f64> = items.iter().map(g).collect();
    batch_means(&values)
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical CDF of
/// `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS distance.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn batch_means_of_constant_has_zero_error() {
        let est = batch_means(&vec![0.25; 1000]);
        assert_eq!(est.mean, 0.25);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn batch_means_se_tracks_iid_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..64_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let est = batch_means(&xs);
        let iid = 1.0 / (xs.len() as f64).sqrt();
        assert!(est.std_error > 0.6 * iid && est.std_error < 1.4 * iid);
        assert!(est.mean.abs() < 4.0 * iid);
    }

    #[test]
    fn ks_accepts_gaussian_rejects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let crit = ks_critical_1pct(xs.len());
        assert!(ks_statistic(&xs, norm_cdf) < crit);
        assert!(ks_statistic(&xs, |x| norm_cdf(x - 0.1)) > crit);
    }

    #[test]
    fn empty_input_is_nan() {
        assert!(batch_means(&[]).mean.is_nan());
    }
}
