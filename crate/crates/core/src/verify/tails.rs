//! Level-set measures `γ_n({Q_t f > r})` and the constants of the tail
//! bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::DensityModel;
use crate::report::{BoundReport, Params};
use crate::special::{ln_norm_sf, norm_interval};
use crate::stats::batch_means;

/// Half-width of the scan window of the 1-D quadrature CDF.
pub const SCAN_HALF_WIDTH: f64 = 12.0;
const SCAN_STEP: f64 = 0.005;

/// Minimum number of hits for a Monte Carlo tail estimate.
pub const MIN_TAIL_HITS: usize = 10;

/// Desk-scale floor for the sharpness constant `ĉ′`.
pub const SHARPNESS_FLOOR: f64 = 0.1;

/// Desk-scale ceiling for normalized tail ratios and shell constants.
pub const DESK_CONSTANT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    ExactTilt,
    QuadratureCdf,
    MonteCarlo { samples: usize, seed: u64 },
}

impl TailMethod {
    pub fn label(&self) -> &'static str {
        match self {
            TailMethod::ExactTilt => "exact_tilt",
            TailMethod::QuadratureCdf => "quadrature_cdf",
            TailMethod::MonteCarlo { .. } => "monte_carlo",
        }
    }

    /// Exact for tilts, quadrature in one dimension, otherwise `None`.
    pub fn deterministic_for(d: &DensityModel) -> Option<Self> {
        if d.effective_tilt().is_some() {
            Some(TailMethod::ExactTilt)
        } else if d.dim() == 1 {
            Some(TailMethod::QuadratureCdf)
        } else {
            None
        }
    }
}

/// The model whose level sets are measured: `d` itself at `t = 0`,
/// `Q_t d` otherwise.
pub fn smoothed_model(d: &DensityModel, t: f64) -> Result<DensityModel> {
    if t == 0.0 {
        Ok(d.clone())
    } else if t > 0.0 {
        d.ou_image(t)
    } else {
        Err(Error::invalid("t", "must be non-negative"))
    }
}

/// `ln γ_n({Q_t f_u > r}) = ln Φ̄(log r/α′ + α′/2)` with `α′ = |u|e^{−t}`.
pub fn log_tilt_tail(alpha: f64, r: f64) -> f64 {
    if alpha == 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_norm_sf(r.ln() / alpha + 0.5 * alpha)
}

/// Estimate of `γ_n({Q_t f > r})` with its uncertainty (3 SE for Monte
/// Carlo, a fixed numerical tolerance otherwise).
pub fn tail_probability(d: &DensityModel, t: f64, r: f64, method: TailMethod) -> Result<(f64, f64)> {
    if !(r > 1.0) {
        return Err(Error::invalid("r", "must exceed 1"));
    }
    let m = smoothed_model(d, t)?;
    match method {
        TailMethod::ExactTilt => {
            let u = m.effective_tilt().ok_or(Error::NoClosedForm { family: m.name() })?;
            let alpha = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok((log_tilt_tail(alpha, r).exp(), 0.0))
        }
        TailMethod::QuadratureCdf => {
            if m.dim() != 1 {
                return Err(Error::DimensionTooLarge { max: 1, got: m.dim() });
            }
            Ok((super_level_mass(&m, r.ln())?, 1e-10))
        }
        TailMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("samples", "must be positive"));
            }
            let level = r.ln();
            let n = m.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut y = vec![0.0; n];
            let hits: Vec<f64> = (0..samples)
                .map(|_| {
                    for yi in y.iter_mut() {
                        *yi = StandardNormal.sample(&mut rng);
                    }
                    if m.log_f(&y) > level {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let est = batch_means(&hits);
            if (est.mean * samples as f64).round() < MIN_TAIL_HITS as f64 {
                return Err(Error::BelowResolution {
                    estimate: est.mean,
                    samples,
                });
            }
            Ok((est.mean, est.ci()))
        }
    }
}

/// `γ_1({log f > level})` from the roots of `log f − level` on a fine scan
/// refined by bisection. Outside the window the sign at the edge is
/// extended to infinity.
fn super_level_mass(m: &DensityModel, level: f64) -> Result<f64> {
    let g = |x: f64| m.log_f(&[x]) - level;
    let steps = (2.0 * SCAN_HALF_WIDTH / SCAN_STEP).round() as usize;
    let mut start = if g(-SCAN_HALF_WIDTH) > 0.0 {
        Some(f64::NEG_INFINITY)
    } else {
        None
    };
    let mut prev_x = -SCAN_HALF_WIDTH;
    let mut prev_g = g(prev_x);
    if !prev_g.is_finite() {
        return Err(Error::NonFinite { context: "log Q_t f on the scan grid" });
    }
    let mut mass = 0.0;
    for i in 1..=steps {
        let x = -SCAN_HALF_WIDTH + i as f64 * SCAN_STEP;
        let gx = g(x);
        if !gx.is_finite() {
            return Err(Error::NonFinite { context: "log Q_t f on the scan grid" });
        }
        if (prev_g > 0.0) != (gx > 0.0) {
            let root = bisect(&g, prev_x, x);
            match start.take() {
                Some(a) => mass += norm_interval(a, root),
                None => start = Some(root),
            }
        }
        prev_x = x;
        prev_g = gx;
    }
    if let Some(a) = start {
        mass += norm_interval(a, f64::INFINITY);
    }
    Ok(mass)
}

fn bisect<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64) -> f64 {
    let lo_pos = g(lo) > 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == lo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Tail estimates over an increasing grid of levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub family: String,
    pub t: f64,
    pub beta: f64,
    pub r_grid: Vec<f64>,
    pub tail: Vec<f64>,
    pub ci: Vec<f64>,
    pub method: TailMethod,
    /// `tail·r·√(log r)·min(1, t)`; at `t = 0` the factor is 1.
    pub normalized_ratio: Vec<f64>,
    /// `tail·r·√(log r)/max(β, 1)` with `β` the certificate of `Q_t f`.
    pub beta_ratio: Vec<f64>,
}

impl TailCurve {
    /// `Ĉ`, the largest normalized ratio.
    pub fn c_hat(&self) -> f64 {
        self.normalized_ratio.iter().copied().fold(0.0, f64::max)
    }

    /// Largest increase of the tail between consecutive levels, net of
    /// the uncertainty of both estimates.
    pub fn monotonicity_violation(&self) -> f64 {
        self.tail
            .windows(2)
            .zip(self.ci.windows(2))
            .map(|(t, c)| t[1] - t[0] - c[0] - c[1])
            .fold(0.0, f64::max)
    }

    /// Largest `tail − 1/r − ci`.
    pub fn markov_violation(&self) -> f64 {
        self.tail
            .iter()
            .zip(&self.ci)
            .zip(&self.r_grid)
            .map(|((t, c), r)| t - 1.0 / r - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the normalized ratios never increase along the grid.
    pub fn ratios_non_increasing(&self) -> bool {
        self.normalized_ratio.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
    }
}

pub fn tail_curve(d: &DensityModel, t: f64, r_grid: &[f64], method: TailMethod) -> Result<TailCurve> {
    if r_grid.is_empty() {
        return Err(Error::invalid("r", "grid must be non-empty"));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("r", "grid must be increasing"));
    }
    let m = smoothed_model(d, t)?;
    let time_factor = if t == 0.0 { 1.0 } else { t.min(1.0) };
    let mut tail = Vec::with_capacity(r_grid.len());
    let mut ci = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let (p, c) = tail_probability(d, t, r, method)?;
        tail.push(p);
        ci.push(c);
    }
    let scale: Vec<f64> = r_grid.iter().map(|r| r * r.ln().sqrt()).collect();
    Ok(TailCurve {
        family: d.name().to_string(),
        t,
        beta: m.beta(),
        r_grid: r_grid.to_vec(),
        normalized_ratio: tail.iter().zip(&scale).map(|(p, s)| p * s * time_factor).collect(),
        beta_ratio: tail.iter().zip(&scale).map(|(p, s)| p * s / m.beta().max(1.0)).collect(),
        tail,
        ci,
        method,
    })
}

/// Reports for a tail curve: one `tail ≤ 1/r` row per level, then
/// monotone decrease, the worst Markov gap, and `Ĉ` against the
/// desk-scale ceiling.
pub fn tail_curve_reports(curve: &TailCurve, dim: usize) -> Vec<BoundReport> {
    let params = Params::new(curve.family.clone(), dim).t(curve.t).beta(curve.beta);
    let mut rows: Vec<BoundReport> = curve
        .r_grid
        .iter()
        .zip(curve.tail.iter().zip(&curve.ci))
        .map(|(&r, (&p, &c))| BoundReport::new("tail", params.clone().r(r), p, c, 1.0 / r))
        .collect();
    let r_max = *curve.r_grid.last().expect("non-empty grid");
    let c_idx = curve
        .normalized_ratio
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > curve.normalized_ratio[best] { i } else { best });
    let c_ci = curve.ci[c_idx] * curve.r_grid[c_idx] * curve.r_grid[c_idx].ln().sqrt();
    rows.extend([
        BoundReport::new("tail_monotone", params.clone().r(r_max), curve.monotonicity_violation(), 0.0, 0.0),
        BoundReport::new("tail_markov", params.clone().r(r_max), curve.markov_violation(), 0.0, 0.0),
        BoundReport::new(
            "tail_c_hat",
            params.r(curve.r_grid[c_idx]),
            curve.c_hat(),
            c_ci,
            DESK_CONSTANT,
        )
        .convention(),
    ]);
    if let TailMethod::MonteCarlo { samples, seed } = curve.method {
        rows = rows.into_iter().map(|r| r.samples(samples, Some(seed))).collect();
    }
    rows
}

/// `ĉ′(r) = Φ̄(√(2 log r))·r·√(log r)`, the normalized tail of the tilt
/// with `α = √(2 log r)` at `t = 0`, computed in log space.
pub fn sharpness_constant(r: f64) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::invalid("r", "must exceed 1"));
    }
    let l = r.ln();
    let alpha = (2.0 * l).sqrt();
    Ok((log_tilt_tail(alpha, r) + l + 0.5 * l.ln()).exp())
}

/// `inf_r ĉ′(r)` over the grid against the desk-scale floor 0.1.
pub fn sharpness_report(r_grid: &[f64]) -> Result<BoundReport> {
    if r_grid.is_empty() {
        return Err(Error::invalid("r", "grid must be non-empty"));
    }
    let mut worst = (f64::INFINITY, r_grid[0]);
    for &r in r_grid {
        let c = sharpness_constant(r)?;
        if c < worst.0 {
            worst = (c, r);
        }
    }
    let params = Params::new("tilt", 1).t(0.0).r(worst.1).beta(0.0);
    Ok(BoundReport::new("sharpness", params, SHARPNESS_FLOOR, 0.0, worst.0).convention())
}
