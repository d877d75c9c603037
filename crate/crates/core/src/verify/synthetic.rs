//! Laws of `Z` with closed-form `E[e^Z]`, `E[Z]` and `P(Z ≤ −2)`, on which
//! `P(Z ≤ −2) ≤ −E[Z]` is checked without sampling.

use crate::error::{Error, Result};
use crate::report::{BoundReport, Params};
use crate::special::norm_cdf;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLaw {
    pub name: String,
    pub exp_mean: f64,
    pub mean: f64,
    pub prob_below: f64,
}

/// `Z = c − E` with `E ~ Exp(1)`; `E[e^Z] = e^c/2`.
pub fn shifted_exponential(c: f64) -> SyntheticLaw {
    SyntheticLaw {
        name: format!("shifted_exponential(c={c})"),
        exp_mean: 0.5 * c.exp(),
        mean: c - 1.0,
        prob_below: (-(c + 2.0)).exp().min(1.0),
    }
}

/// `Z ~ N(m, −2m)` for `m < 0`, so that `E[e^Z] = 1`.
pub fn critical_gaussian(m: f64) -> Result<SyntheticLaw> {
    if !(m < 0.0) {
        return Err(Error::invalid("m", "must be negative"));
    }
    let sd = (-2.0 * m).sqrt();
    Ok(SyntheticLaw {
        name: format!("gaussian(m={m})"),
        exp_mean: (m + 0.5 * sd * sd).exp(),
        mean: m,
        prob_below: norm_cdf((-2.0 - m) / sd),
    })
}

/// `Z = a` with probability `p`, otherwise the `b` that makes `E[e^Z] = 1`.
pub fn critical_two_point(a: f64, p: f64) -> Result<SyntheticLaw> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", "must lie in (0, 1)"));
    }
    let rest = 1.0 - p * a.exp();
    if !(rest > 0.0) {
        return Err(Error::invalid("a", "p·e^a must be below 1"));
    }
    let b = (rest / (1.0 - p)).ln();
    let below = |z: f64| if z <= -2.0 { 1.0 } else { 0.0 };
    Ok(SyntheticLaw {
        name: format!("two_point(a={a},p={p})"),
        exp_mean: p * a.exp() + (1.0 - p) * b.exp(),
        mean: p * a + (1.0 - p) * b,
        prob_below: p * below(a) + (1.0 - p) * below(b),
    })
}

/// `P(Z ≤ −2) ≤ −E[Z]` for a law with `E[e^Z] ≤ 1`.
pub fn lemma3_report(law: &SyntheticLaw) -> Result<BoundReport> {
    if law.exp_mean > 1.0 + 1e-12 {
        return Err(Error::invalid("law", format!("E[e^Z] = {} exceeds 1", law.exp_mean)));
    }
    let params = Params::new(law.name.clone(), 1);
    Ok(BoundReport::new("z_lemma3_exact", params, law.prob_below, 0.0, -law.mean))
}

/// The battery used by the test suite: shifted exponentials with
/// `c ≤ ln 2`, critical Gaussians and critical two-point laws.
pub fn synthetic_battery() -> Vec<SyntheticLaw> {
    let mut laws: Vec<SyntheticLaw> = [std::f64::consts::LN_2, 0.5, 0.0, -1.0, -2.0, -4.0]
        .into_iter()
        .map(shifted_exponential)
        .collect();
    for m in [-0.01, -0.1, -0.5, -1.0, -2.0, -5.0] {
        laws.push(critical_gaussian(m).expect("negative mean"));
    }
    for a in [-6.0, -3.0, -2.0, -1.5, 0.5] {
        for p in [0.05, 0.3, 0.6, 0.9] {
            if let Ok(law) = critical_two_point(a, p) {
                laws.push(law);
            }
        }
    }
    laws
}
