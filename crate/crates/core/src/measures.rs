//! Probability densities relative to the standard Gaussian measure `γ_n`.
//!
//! Every family is an exponential, hence strictly positive, and carries a
//! weak log-convexity certificate `β` with `∇² log f ≥ −β·id`. A
//! [`DensityModel`] may additionally be the image of a family under a
//! Gaussian smoothing map `x ↦ E[f(a·x + √v·G)]`; both the heat and the
//! Ornstein–Uhlenbeck semigroups are of this form and compose within it.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::numdiff::{hessian_from_gradient, min_eigenvalue};
use crate::quadrature::{QuadratureRule, MAX_QUADRATURE_DIM};
use crate::semigroup::{self, Method};
use crate::special::{bessel_i_seq, log_sum_exp};

/// Inflation applied to the numerically probed mixture defect.
pub const MIXTURE_BETA_INFLATION: f64 = 1.1;

/// The Gaussian map `h ↦ E[h(scale·x + √var·G)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub scale: f64,
    pub var: f64,
}

impl Smoothing {
    pub const IDENTITY: Smoothing = Smoothing { scale: 1.0, var: 0.0 };

    /// Heat semigroup `P_s`.
    pub fn heat(s: f64) -> Self {
        Smoothing { scale: 1.0, var: s }
    }

    /// Ornstein–Uhlenbeck semigroup `Q_t`.
    pub fn ou(t: f64) -> Self {
        let rho = (-t).exp();
        Smoothing {
            scale: rho,
            var: -(-2.0 * t).exp_m1(),
        }
    }

    /// The map `h ↦ self(outer(h))`, i.e. `outer` applied first to the
    /// function and `self` applied to the result.
    pub fn then(self, outer: Smoothing) -> Smoothing {
        Smoothing {
            scale: self.scale * outer.scale,
            var: self.scale * self.scale * outer.var + self.var,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.var == 0.0
    }
}

/// Log-linear density `f_u(x) = exp(⟨u,x⟩ − |u|²/2)`; `β = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltDensity {
    pub u: Vec<f64>,
}

impl TiltDensity {
    pub fn norm_sq(&self) -> f64 {
        self.u.iter().map(|v| v * v).sum()
    }
}

/// Finite mixture of Gaussian laws `N(m_i, s·id)` written as densities
/// against `γ_n`. Each component is `N(y; m, s)/φ(y)`, a quadratic
/// exponential with curvature `c = 1/s − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDensity {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub spread: f64,
    log_weights: Vec<f64>,
}

impl MixtureDensity {
    fn curvature(&self) -> f64 {
        1.0 / self.spread - 1.0
    }
}

/// `f(x) = exp(ε·sin⟨k,x⟩)/Z`; `β = ε|k|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinBumpDensity {
    pub eps: f64,
    pub k: Vec<f64>,
    log_norm: f64,
    /// `2·I_j(ε)` for `j ≥ 1`, with `I_0(ε)` in slot 0.
    coeffs: Vec<f64>,
}

impl SinBumpDensity {
    fn k_norm_sq(&self) -> f64 {
        self.k.iter().map(|v| v * v).sum()
    }

    /// `S(φ, τ²) = E[exp(ε sin(φ + τG))]` and `∂S/∂φ`, from the
    /// Jacobi–Anger expansion `e^{ε sin θ} = I_0 + 2Σ I_j cos(j(θ − π/2))`.
    fn smoothed(&self, phi: f64, tau_sq: f64) -> (f64, f64) {
        let psi = phi - FRAC_PI_2;
        let (s1, c1) = psi.sin_cos();
        let (mut sj, mut cj) = (0.0f64, 1.0f64);
        let damp_step = (-0.5 * tau_sq).exp();
        let damp_step_sq = damp_step * damp_step;
        // e^{-j²τ²/2} = e^{-(j-1)²τ²/2}·e^{-(2j-1)τ²/2}
        let mut damp = 1.0;
        let mut ratio = damp_step;
        let mut value = self.coeffs[0];
        let mut deriv = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().skip(1) {
            let next_c = cj * c1 - sj * s1;
            sj = sj * c1 + cj * s1;
            cj = next_c;
            damp *= ratio;
            ratio *= damp_step_sq;
            value += c * damp * cj;
            deriv -= c * damp * j as f64 * sj;
        }
        (value, deriv)
    }
}

/// Which closed forms a model supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedForms {
    /// Heat and Ornstein–Uhlenbeck transforms (exact or rapidly convergent series).
    pub transforms: bool,
    /// Exact level-set measure `γ_n({f > r})`.
    pub exact_tail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Constant { dim: usize },
    Tilt(TiltDensity),
    Mixture(MixtureDensity),
    SinBump(SinBumpDensity),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::Tilt(_) => "tilt",
            Family::Mixture(_) => "mixture",
            Family::SinBump(_) => "sin",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::Constant { dim } => *dim,
            Family::Tilt(t) => t.u.len(),
            Family::Mixture(m) => m.means[0].len(),
            Family::SinBump(s) => s.k.len(),
        }
    }

    /// Pointwise `log f(y)`, and `∇ log f(y)` into `grad` when given.
    pub fn log_f(&self, y: &[f64], grad: Option<&mut [f64]>) -> f64 {
        self.log_transform(y, Smoothing::IDENTITY, grad)
    }

    /// Closed-form `log E[f(a·x + √v·G)]` and its gradient in `x`.
    pub fn log_transform(&self, x: &[f64], sm: Smoothing, grad: Option<&mut [f64]>) -> f64 {
        let Smoothing { scale: a, var: v } = sm;
        match self {
            Family::Constant { .. } => {
                if let Some(g) = grad {
                    g.fill(0.0);
                }
                0.0
            }
            Family::Tilt(t) => {
                let u2 = t.norm_sq();
                let dot: f64 = t.u.iter().zip(x).map(|(u, x)| u * x).sum();
                if let Some(g) = grad {
                    for (gi, ui) in g.iter_mut().zip(&t.u) {
                        *gi = a * ui;
                    }
                }
                a * dot - 0.5 * u2 + 0.5 * v * u2
            }
            Family::Mixture(m) => mixture_log_transform(m, x, a, v, grad),
            Family::SinBump(s) => {
                let theta: f64 = s.k.iter().zip(x).map(|(k, x)| k * x).sum();
                let (val, deriv) = s.smoothed(a * theta, v * s.k_norm_sq());
                if let Some(g) = grad {
                    let slope = a * deriv / val;
                    for (gi, ki) in g.iter_mut().zip(&s.k) {
                        *gi = slope * ki;
                    }
                }
                val.ln() - s.log_norm
            }
        }
    }
}

fn mixture_log_transform(m: &MixtureDensity, x: &[f64], a: f64, v: f64, grad: Option<&mut [f64]>) -> f64 {
    let n = x.len();
    let s = m.spread;
    let c = m.curvature();
    let denom = 1.0 + c * v;
    let common = -0.5 * n as f64 * (denom.ln() + s.ln());
    let mut terms = Vec::with_capacity(m.means.len());
    let mut z2 = 0.0;
    for xi in x {
        z2 += (a * xi) * (a * xi);
    }
    for (mean, lw) in m.means.iter().zip(&m.log_weights) {
        let mut resid2 = 0.0;
        let mut bz = 0.0;
        let mut m2 = 0.0;
        for (mi, xi) in mean.iter().zip(x) {
            let z = a * xi;
            let b = mi / s;
            let r = b - c * z;
            resid2 += r * r;
            bz += b * z;
            m2 += mi * mi;
        }
        terms.push(lw + common + v * resid2 / (2.0 * denom) - 0.5 * c * z2 + bz - m2 / (2.0 * s));
    }
    let total = log_sum_exp(&terms);
    if let Some(g) = grad {
        g.fill(0.0);
        for (mean, t) in m.means.iter().zip(&terms) {
            let p = (t - total).exp();
            for (gi, (mi, xi)) in g.iter_mut().zip(mean.iter().zip(x)) {
                *gi += p * a * (mi / s - c * a * xi) / denom;
            }
        }
    }
    total
}

/// A density `f` against `γ_n` with its convexity certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    family: Family,
    beta: f64,
    smoothing: Smoothing,
    closed_forms: bool,
}

impl DensityModel {
    /// `f ≡ 1`.
    pub fn constant(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        Ok(Self::from_family(Family::Constant { dim }, 0.0))
    }

    pub fn tilt(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::invalid("u", "must be non-empty"));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("u", "must be finite"));
        }
        Ok(Self::from_family(Family::Tilt(TiltDensity { u }), 0.0))
    }

    /// Mixture of `N(m_i, spread·id)` laws. `β` is probed numerically on a
    /// grid around the means and inflated by 10%.
    pub fn mixture(weights: Vec<f64>, means: Vec<Vec<f64>>, spread: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::invalid("weights", "need one weight per mean"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("weights", "must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", format!("sum to {total}, not 1")));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("means", "all means need the same positive dimension"));
        }
        if !(spread > 0.0 && spread < 1.0) {
            return Err(Error::invalid("spread", "must lie in (0, 1)"));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let mix = MixtureDensity {
            weights,
            means,
            spread,
            log_weights,
        };
        let beta = MIXTURE_BETA_INFLATION * probe_mixture_defect(&mix);
        Ok(Self::from_family(Family::Mixture(mix), beta))
    }

    /// `exp(ε sin⟨k,x⟩)/Z` with `β = ε|k|²`.
    pub fn sin_bump(eps: f64, k: Vec<f64>) -> Result<Self> {
        if !(eps >= 0.0 && eps <= 20.0) {
            return Err(Error::invalid("eps", "must lie in [0, 20]"));
        }
        if k.is_empty() || k.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("k", "must be a finite non-empty vector"));
        }
        let mut len = 4;
        let coeffs = loop {
            let i = bessel_i_seq(eps, len);
            if i[len - 1] < 1e-17 * i[0] || len > 200 {
                break i;
            }
            len *= 2;
        };
        let cut = coeffs
            .iter()
            .rposition(|c| *c >= 1e-17 * coeffs[0])
            .unwrap_or(0);
        let mut coeffs: Vec<f64> = coeffs[..=cut].to_vec();
        for c in coeffs.iter_mut().skip(1) {
            *c *= 2.0;
        }
        let mut s = SinBumpDensity {
            eps,
            k,
            log_norm: 0.0,
            coeffs,
        };
        let k2 = s.k_norm_sq();
        s.log_norm = s.smoothed(0.0, k2).0.ln();
        let beta = eps * k2;
        Ok(Self::from_family(Family::SinBump(s), beta))
    }

    fn from_family(family: Family, beta: f64) -> Self {
        Self {
            family,
            beta,
            smoothing: Smoothing::IDENTITY,
            closed_forms: true,
        }
    }

    /// Same density with a different declared `β` (negative controls).
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Same density, but every transform goes through generic quadrature.
    pub fn without_closed_forms(mut self) -> Self {
        self.closed_forms = false;
        self
    }

    /// The density `Q_t f`, again a probability density against `γ_n`.
    ///
    /// Its certificate is `min(e^{−2t}β, 1/(2t))`: averaging preserves
    /// semi-convexity up to the contraction `e^{−t}`, and the
    /// Ornstein–Uhlenbeck Hessian bound applies regardless of `f`.
    pub fn ou_image(&self, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid("t", "must be positive and finite"));
        }
        if !self.closed_forms && self.dim() > MAX_QUADRATURE_DIM {
            return Err(Error::DimensionTooLarge {
                max: MAX_QUADRATURE_DIM,
                got: self.dim(),
            });
        }
        let beta = ((-2.0 * t).exp() * self.beta).min(0.5 / t);
        Ok(Self {
            family: self.family.clone(),
            beta,
            smoothing: self.smoothing.then(Smoothing::ou(t)),
            closed_forms: self.closed_forms,
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &'static str {
        self.family.name()
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn closed_forms(&self) -> Option<ClosedForms> {
        if !self.closed_forms {
            return None;
        }
        Some(ClosedForms {
            transforms: true,
            exact_tail: matches!(self.family, Family::Constant { .. } | Family::Tilt(_)),
        })
    }

    /// The tilt vector of `Q_t f_u = f_{e^{-t}u}` when this model is a
    /// (possibly smoothed) tilt, `None` otherwise.
    pub fn effective_tilt(&self) -> Option<Vec<f64>> {
        match &self.family {
            Family::Tilt(t) if (self.smoothing.var + self.smoothing.scale.powi(2) - 1.0).abs() < 1e-12 => {
                Some(t.u.iter().map(|u| u * self.smoothing.scale).collect())
            }
            Family::Constant { dim } => Some(vec![0.0; *dim]),
            _ => None,
        }
    }

    /// `log f(x)`.
    pub fn log_f(&self, x: &[f64]) -> f64 {
        self.log_f_grad(x, None)
    }

    /// `f(x)`.
    pub fn f(&self, x: &[f64]) -> f64 {
        self.log_f(x).exp()
    }

    /// `∇ log f(x)` into `out`; returns `log f(x)`.
    pub fn grad_log_f(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.log_f_grad(x, Some(out))
    }

    fn log_f_grad(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let method = if self.closed_forms {
            Method::ClosedForm
        } else {
            Method::Quadrature
        };
        semigroup::log_transform(self, x, Smoothing::IDENTITY, &method, grad)
            .unwrap_or(f64::NAN)
    }
}

fn probe_mixture_defect(m: &MixtureDensity) -> f64 {
    let dim = m.means[0].len();
    let fam = Family::Mixture(m.clone());
    let grad = |y: &[f64], out: &mut [f64]| {
        fam.log_f(y, Some(out));
    };
    let mut worst = 0.0f64;
    if dim <= MAX_QUADRATURE_DIM {
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                let lo = m.means.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min) - 3.0;
                let hi = m.means.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max) + 3.0;
                let steps = ((hi - lo) / 0.25).round() as usize;
                (0..=steps).map(|j| lo + j as f64 * 0.25).collect()
            })
            .collect();
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        loop {
            for i in 0..dim {
                point[i] = axes[i][idx[i]];
            }
            let lam = min_eigenvalue(&hessian_from_gradient(grad, &point));
            worst = worst.max(-lam);
            let mut carry = true;
            for i in (0..dim).rev() {
                if !carry {
                    break;
                }
                idx[i] += 1;
                if idx[i] < axes[i].len() {
                    carry = false;
                } else {
                    idx[i] = 0;
                }
            }
            if carry {
                break;
            }
        }
    } else {
        // Probing a grid in high dimension is infeasible; the component
        // curvature bounds the defect from above.
        worst = m.curvature();
    }
    worst
}

/// `|∫ f dγ_n − 1|` under the rule `q`.
pub fn validate_normalization(d: &DensityModel, q: &QuadratureRule) -> Result<f64> {
    q.check(d.dim())?;
    let total = q.integrate(|y| d.f(y));
    crate::error::finite(total, "normalization integral").map(|t| (t - 1.0).abs())
}

/// `min_x [λ_min(∇² log f(x)) + β]` over the probe points, with the
/// Hessian taken by central differences of the analytic gradient.
pub fn beta_probe(d: &DensityModel, points: &[Vec<f64>], h: Option<f64>) -> Result<f64> {
    if let Some(h) = h {
        if !(h > 0.0) {
            return Err(Error::invalid("h", "must be positive"));
        }
    }
    let n = d.dim();
    let mut worst = f64::INFINITY;
    for p in points {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("points", "must be finite"));
        }
        crate::error::finite(d.log_f(p), "log f at probe point")?;
        let hess = match h {
            None => hessian_from_gradient(|y, out| {
                d.grad_log_f(y, out);
            }, p),
            Some(h) => fixed_step_hessian(d, p, h),
        };
        let lam = crate::error::finite(min_eigenvalue(&hess), "finite-difference Hessian")?;
        worst = worst.min(lam + d.beta());
    }
    Ok(worst)
}

fn fixed_step_hessian(d: &DensityModel, x: &[f64], h: f64) -> nalgebra::DMatrix<f64> {
    let n = x.len();
    let mut hess = nalgebra::DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    for j in 0..n {
        probe[j] = x[j] + h;
        d.grad_log_f(&probe, &mut up);
        probe[j] = x[j] - h;
        d.grad_log_f(&probe, &mut down);
        probe[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    let t = hess.transpose();
    (hess + t) * 0.5
}

/// Uniform probe grid `[lo, hi]^dim` with the given step.
pub fn probe_grid(dim: usize, lo: f64, hi: f64, step: f64) -> Vec<Vec<f64>> {
    let count = ((hi - lo) / step).round() as usize + 1;
    let axis: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}
