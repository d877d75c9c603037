//! Special functions and numerically careful reductions.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

/// `ln(sqrt(2π))`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `P(G > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// `ln P(G > x)` for a standard Gaussian `G`, accurate far into the tail.
///
/// Uses `erfc` while the result is comfortably representable and a
/// continued fraction for the Mills ratio beyond that, so `x` in the
/// hundreds still yields a finite answer.
pub fn ln_norm_sf(x: f64) -> f64 {
    if x < 20.0 {
        return norm_sf(x).ln();
    }
    // Mills ratio R(x) = sf(x)/pdf(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    -0.5 * x * x - LN_SQRT_2PI - tail.ln()
}

/// `ln Φ(x)`.
pub fn ln_norm_cdf(x: f64) -> f64 {
    ln_norm_sf(-x)
}

/// Gaussian mass of the interval `(a, b]`, computed from whichever tail
/// keeps the subtraction well conditioned.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

/// Numerically stable `ln Σ exp(x_i)`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Modified Bessel functions of the first kind `I_0(x), …, I_{len-1}(x)`.
///
/// Power series; intended for the moderate arguments used by the
/// sinusoidal density family (|x| up to a few units).
pub fn bessel_i_seq(x: f64, len: usize) -> Vec<f64> {
    let half = 0.5 * x;
    let q = half * half;
    let mut out = Vec::with_capacity(len);
    // (x/2)^j / j!
    let mut lead = 1.0;
    for j in 0..len {
        if j > 0 {
            lead *= half / j as f64;
        }
        let mut term = lead;
        let mut sum = term;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs() && k < 500.0 {
            term *= q / (k * (k + j as f64));
            sum += term;
            k += 1.0;
        }
        out.push(sum);
    }
    out
}

/// Neumaier-compensated accumulator. Sums of up to ~10^7 terms stay
/// within a few ulps of the exact result, independent of grouping.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_tail_reference_values() {
        assert_relative_eq!(norm_sf(1.5), 0.066_807_201_268_858_07, max_relative = 1e-12);
        assert_relative_eq!(norm_sf(4.0), 3.167_124_183_311_986e-5, max_relative = 1e-12);
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-16);
    }

    #[test]
    fn log_tail_is_continuous_across_switch() {
        let below = ln_norm_sf(20.0 - 1e-9);
        let above = ln_norm_sf(20.0);
        assert!((below - above).abs() < 1e-7, "{below} vs {above}");
        // far tail: asymptote -x^2/2 - ln x - ln sqrt(2π)
        let x: f64 = 200.0;
        let asym = -0.5 * x * x - x.ln() - LN_SQRT_2PI;
        assert!((ln_norm_sf(x) - asym).abs() < 1e-4);
    }

    #[test]
    fn interval_mass_matches_difference() {
        let m = norm_interval(-1.0, 2.0);
        assert_relative_eq!(m, norm_cdf(2.0) - norm_cdf(-1.0), max_relative = 1e-14);
        assert_eq!(norm_interval(1.0, 1.0), 0.0);
        assert_relative_eq!(norm_interval(f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn bessel_reference_values() {
        let i = bessel_i_seq(1.0, 3);
        assert_relative_eq!(i[0], 1.266_065_877_752_008_4, max_relative = 1e-14);
        assert_relative_eq!(i[1], 0.565_159_103_992_485_0, max_relative = 1e-14);
        assert_relative_eq!(i[2], 0.135_747_669_767_038_3, max_relative = 1e-13);
    }

    #[test]
    fn log_sum_exp_handles_large_and_empty() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }
}
