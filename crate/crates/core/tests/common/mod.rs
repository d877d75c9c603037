#![allow(dead_code)]

/// `P(G > x)` by composite Simpson on `φ` over `[x, x + 14]`, independent
/// of any library error function. Accurate to ~1e-12 relative for
/// `x ∈ [0, 8]`.
pub fn gauss_upper_tail(x: f64) -> f64 {
    // P(G > x) = φ(x) ∫_0^∞ exp(−x u − u²/2) du
    let h = 14.0 / 200_000.0;
    let g = |u: f64| (-x * u - 0.5 * u * u).exp();
    let mut s = g(0.0) + g(14.0);
    for i in 1..200_000 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(i as f64 * h);
    }
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi * s * h / 3.0
}

/// `P(G ≤ x)`.
pub fn gauss_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - gauss_upper_tail(x)
    } else {
        gauss_upper_tail(-x)
    }
}

pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// The symmetric mixture `½N(−m, s) + ½N(m, s)` after Ornstein–Uhlenbeck
/// time `t`: again a mixture, with means `±m e^{−t}` and variance
/// `s e^{−2t} + 1 − e^{−2t}`. Returns `(mean, variance)`.
pub fn ou_mixture_law(m: f64, s: f64, t: f64) -> (f64, f64) {
    let a = (-t).exp();
    (m * a, s * a * a + 1.0 - a * a)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `γ_1({g > level})`: crossings located on a grid of step `1e−3` over
/// `[−12, 12]`, refined by bisection, masses from [`gauss_cdf`].
pub fn gamma_super_level<G: Fn(f64) -> f64>(g: G, level: f64) -> f64 {
    let above = |x: f64| g(x) > level;
    let n = 24_000;
    let mut mass = 0.0;
    let mut open: Option<f64> = if above(-12.0) { Some(f64::NEG_INFINITY) } else { None };
    let mut prev = -12.0;
    for i in 1..=n {
        let x = -12.0 + i as f64 * 1e-3;
        if above(x) != above(prev) {
            let (mut lo, mut hi) = (prev, x);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if above(mid) == above(lo) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            match open.take() {
                Some(a) => mass += gauss_cdf(root) - if a.is_finite() { gauss_cdf(a) } else { 0.0 },
                None => open = Some(root),
            }
        }
        prev = x;
    }
    if let Some(a) = open {
        mass += gauss_upper_tail(a);
    }
    mass
}

/// Fast `P(G ≤ x)` for bulk use (Kolmogorov–Smirnov oracles).
pub fn fast_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of `e^{−t}X + √(1−e^{−2t})G` with `X` of density `p0` (given on
/// `[−12, 12]`, unnormalized), tabulated with step `0.01` and linearly
/// interpolated.
pub struct TabulatedCdf {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl TabulatedCdf {
    pub fn ou_push_forward<P: Fn(f64) -> f64>(p0: P, t: f64) -> Self {
        let h = 2e-3;
        let ys: Vec<f64> = (0..12_000).map(|i| -12.0 + (i as f64 + 0.5) * h).collect();
        let ws: Vec<f64> = ys.iter().map(|&y| p0(y)).collect();
        let total: f64 = ws.iter().sum();
        let a = (-t).exp();
        let sd = (1.0 - a * a).sqrt();
        let (lo, step) = (-12.0, 0.01);
        let values = (0..=2400)
            .map(|i| {
                let x = lo + i as f64 * step;
                let s: f64 = ys
                    .iter()
                    .zip(&ws)
                    .map(|(&y, &w)| {
                        if sd == 0.0 {
                            if y <= x { w } else { 0.0 }
                        } else {
                            w * fast_cdf((x - a * y) / sd)
                        }
                    })
                    .sum();
                s / total
            })
            .collect();
        TabulatedCdf { lo, step, values }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.step;
        if u <= 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.values.len() {
            return 1.0;
        }
        let frac = u - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}
