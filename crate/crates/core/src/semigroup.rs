//! Ornstein–Uhlenbeck and heat semigroups applied to a [`DensityModel`].
//!
//! `Q_t f(x) = E[f(e^{-t}x + √(1−e^{-2t})·G)]` and `P_s f(x) = E[f(x + √s·G)]`
//! are both Gaussian smoothings, evaluated by closed form, tensorized
//! Gauss–Hermite quadrature, or plain Monte Carlo. Values are carried in
//! log-scale and exponentiated only at the public boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{finite, Error, Result};
use crate::measures::{DensityModel, Smoothing};
use crate::numdiff::{hessian_from_values, hessian_step, min_eigenvalue};
use crate::quadrature::QuadratureRule;
use crate::report::{BoundReport, Params};
use crate::special::{log_sum_exp, CompensatedSum};
use crate::stats::{batch_means, MeanEstimate};

/// Below this total smoothing variance the kernel-derivative gradient is
/// replaced by its `s → 0` limit `∇ log f`.
pub const S_MIN: f64 = 1e-4;

/// How a semigroup value is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// A single semigroup evaluation request.
#[derive(Debug, Clone, Copy)]
pub struct SemigroupQuery<'a> {
    pub density: &'a DensityModel,
    /// `t` for `Q_t`, `s` for `P_s`.
    pub time: f64,
    pub point: &'a [f64],
    pub method: Method,
}

impl<'a> SemigroupQuery<'a> {
    pub fn new(density: &'a DensityModel, time: f64, point: &'a [f64], method: Method) -> Self {
        Self {
            density,
            time,
            point,
            method,
        }
    }
}

/// `log E[f_d(a·x + √v·G)]` for the smoothing `outer` applied to the
/// model `d`, with the gradient in `x` written to `grad` when given.
pub fn log_transform(
    d: &DensityModel,
    x: &[f64],
    outer: Smoothing,
    method: &Method,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    if x.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: x.len(),
        });
    }
    let total = d.smoothing().then(outer);
    let family = d.family();
    match *method {
        Method::ClosedForm => {
            if d.closed_forms().is_none() {
                return Err(Error::NoClosedForm {
                    family: family.name(),
                });
            }
            Ok(family.log_transform(x, total, grad))
        }
        Method::Quadrature => {
            if total.var == 0.0 {
                return Ok(pointwise(d, x, total.scale, grad));
            }
            let rule = QuadratureRule::standard(d.dim())?;
            Ok(quadrature_transform(d, x, total, rule, grad))
        }
        Method::MonteCarlo { samples, seed } => {
            let est = mc_transform(d, x, total, samples, seed)?;
            if let Some(g) = grad {
                g.fill(f64::NAN);
            }
            Ok(est.mean.ln())
        }
    }
}

fn pointwise(d: &DensityModel, x: &[f64], scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let z: Vec<f64> = x.iter().map(|v| scale * v).collect();
    match grad {
        Some(g) => {
            let lf = d.family().log_f(&z, Some(g));
            for gi in g.iter_mut() {
                *gi *= scale;
            }
            lf
        }
        None => d.family().log_f(&z, None),
    }
}

/// Quadrature over the base family's pointwise density. The gradient is
/// the derivative of the Gaussian kernel, `(a/√v)·E_w[G]` under the
/// quadrature weights tilted by `f`; below [`S_MIN`] it falls back to the
/// pointwise gradient.
pub(crate) fn quadrature_transform(
    d: &DensityModel,
    x: &[f64],
    sm: Smoothing,
    rule: &QuadratureRule,
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = x.len();
    let sd = sm.var.sqrt();
    let mut z = vec![0.0; n];
    let mut terms = Vec::with_capacity(rule.len());
    for (y, lw) in rule.nodes().zip(rule.log_weights()) {
        for i in 0..n {
            z[i] = sm.scale * x[i] + sd * y[i];
        }
        terms.push(lw + d.family().log_f(&z, None));
    }
    let total = log_sum_exp(&terms);
    if let Some(g) = grad {
        if sm.var < S_MIN {
            pointwise(d, x, sm.scale, Some(g));
        } else {
            g.fill(0.0);
            for (y, t) in rule.nodes().zip(&terms) {
                let p = (t - total).exp();
                for i in 0..n {
                    g[i] += p * y[i];
                }
            }
            for gi in g.iter_mut() {
                *gi *= sm.scale / sd;
            }
        }
    }
    total
}

fn mc_transform(d: &DensityModel, x: &[f64], sm: Smoothing, samples: usize, seed: u64) -> Result<MeanEstimate> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    let n = x.len();
    let sd = sm.var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; n];
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            for i in 0..n {
                let g: f64 = StandardNormal.sample(&mut rng);
                z[i] = sm.scale * x[i] + sd * g;
            }
            d.family().log_f(&z, None).exp()
        })
        .collect();
    Ok(batch_means(&values))
}

fn check_ou_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("t", "must be positive and finite"))
    }
}

fn check_heat_time(s: f64) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("s", "must lie in (0, 1]"))
    }
}

/// `log Q_t f(x)`.
pub fn log_ou_apply(q: &SemigroupQuery) -> Result<f64> {
    check_ou_time(q.time)?;
    let v = log_transform(q.density, q.point, Smoothing::ou(q.time), &q.method, None)?;
    finite(v, "log Q_t f")
}

/// `Q_t f(x)`.
pub fn ou_apply(q: &SemigroupQuery) -> Result<f64> {
    finite(log_ou_apply(q)?.exp(), "Q_t f")
}

/// Monte Carlo `Q_t f(x)` with its standard error.
pub fn ou_apply_mc(d: &DensityModel, t: f64, x: &[f64], samples: usize, seed: u64) -> Result<MeanEstimate> {
    check_ou_time(t)?;
    if x.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: x.len(),
        });
    }
    mc_transform(d, x, d.smoothing().then(Smoothing::ou(t)), samples, seed)
}

/// `log P_s f(x)`.
pub fn log_heat_apply(q: &SemigroupQuery) -> Result<f64> {
    check_heat_time(q.time)?;
    let v = log_transform(q.density, q.point, Smoothing::heat(q.time), &q.method, None)?;
    finite(v, "log P_s f")
}

/// `P_s f(x)`.
pub fn heat_apply(q: &SemigroupQuery) -> Result<f64> {
    finite(log_heat_apply(q)?.exp(), "P_s f")
}

/// `∇ log P_s f(x)`, differentiated through the kernel.
pub fn heat_grad_log(q: &SemigroupQuery) -> Result<Vec<f64>> {
    check_heat_time(q.time)?;
    if q.method == Method::Quadrature && q.time < S_MIN {
        return Err(Error::invalid(
            "s",
            format!("below the quadrature bandwidth floor {S_MIN}; use the closed form or the s → 0 limit"),
        ));
    }
    if matches!(q.method, Method::MonteCarlo { .. }) {
        return Err(Error::invalid("method", "gradients need closed form or quadrature"));
    }
    let mut g = vec![0.0; q.density.dim()];
    log_transform(q.density, q.point, Smoothing::heat(q.time), &q.method, Some(&mut g))?;
    for v in &g {
        finite(*v, "∇ log P_s f")?;
    }
    Ok(g)
}

/// `λ_min(∇² log Q_t f(x)) + 1/(2t)`; non-negative by the
/// Ornstein–Uhlenbeck Hessian bound.
pub fn ou_log_hessian_min_eig(q: &SemigroupQuery) -> Result<f64> {
    check_ou_time(q.time)?;
    let sm = Smoothing::ou(q.time);
    let mut failure = None;
    let hess = hessian_from_values(
        |y| match log_transform(q.density, y, sm, &q.method, None) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        q.point,
        hessian_step,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let lam = finite(min_eigenvalue(&hess), "finite-difference Hessian of log Q_t f")?;
    Ok(lam + 0.5 / q.time)
}

/// `q = 1 + e^{2t}(p − 1)`.
pub fn nelson_exponent(p: f64, t: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::invalid("p", "must exceed 1"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    Ok(1.0 + (2.0 * t).exp() * (p - 1.0))
}

/// `log ‖g‖_{L_p(γ)}` for `log g` given pointwise.
fn log_lp_norm<F: FnMut(&[f64]) -> f64>(rule: &QuadratureRule, p: f64, mut log_g: F) -> f64 {
    rule.log_integrate(|y| p * log_g(y)) / p
}

fn default_method(d: &DensityModel) -> Method {
    if d.closed_forms().is_some() {
        Method::ClosedForm
    } else {
        Method::Quadrature
    }
}

/// Checks `‖Q_t f‖_{L_q(γ)} ≤ ‖f‖_{L_p(γ)}` with `q` the hypercontractive
/// exponent. Tolerance is relative `1e-8`.
pub fn hypercontractivity_check(d: &DensityModel, p: f64, t: f64, rule: &QuadratureRule) -> Result<BoundReport> {
    let q_exp = nelson_exponent(p, t)?;
    rule.check(d.dim())?;
    if d.dim() > 2 {
        return Err(Error::DimensionTooLarge { max: 2, got: d.dim() });
    }
    let method = default_method(d);
    let sm = Smoothing::ou(t);
    let mut failure = None;
    let lhs = log_lp_norm(rule, q_exp, |y| match log_transform(d, y, sm, &method, None) {
        Ok(v) => v,
        Err(e) => {
            failure = Some(e);
            f64::NAN
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let rhs = log_lp_norm(rule, p, |y| d.log_f(y));
    let lhs = finite(lhs.exp(), "‖Q_t f‖_q")?;
    let rhs = finite(rhs.exp(), "‖f‖_p")?;
    let params = Params::new(d.name(), d.dim()).t(t).beta(d.beta());
    Ok(BoundReport::new("hypercontractivity", params, lhs, 1e-8 * rhs, rhs).samples(rule.len(), None))
}

/// `∫ Q_t f dγ_n` under `rule`.
pub fn ou_mass(d: &DensityModel, t: f64, rule: &QuadratureRule) -> Result<f64> {
    check_ou_time(t)?;
    rule.check(d.dim())?;
    let method = default_method(d);
    let sm = Smoothing::ou(t);
    let mut acc = CompensatedSum::new();
    for (y, w) in rule.nodes().zip(rule.weights()) {
        acc.add(w * log_transform(d, y, sm, &method, None)?.exp());
    }
    finite(acc.value(), "∫ Q_t f dγ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mixture_1d() -> DensityModel {
        DensityModel::mixture(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], 0.5).unwrap()
    }

    #[test]
    fn constant_is_fixed_point() {
        let d = DensityModel::constant(2).unwrap();
        for method in [Method::ClosedForm, Method::Quadrature] {
            let q = SemigroupQuery::new(&d, 0.7, &[1.0, -3.0], method);
            assert_relative_eq!(ou_apply(&q).unwrap(), 1.0, max_relative = 1e-14);
            let h = SemigroupQuery::new(&d, 0.3, &[1.0, -3.0], method);
            assert_relative_eq!(heat_apply(&h).unwrap(), 1.0, max_relative = 1e-14);
            assert!(heat_grad_log(&h).unwrap().iter().all(|g| g.abs() < 1e-14));
        }
    }

    #[test]
    fn tilt_ou_value_at_log_two() {
        let d = DensityModel::tilt(vec![1.0]).unwrap();
        let want = (-0.125f64).exp();
        for method in [Method::ClosedForm, Method::Quadrature] {
            let q = SemigroupQuery::new(&d, 2f64.ln(), &[0.0], method);
            assert_relative_eq!(ou_apply(&q).unwrap(), want, max_relative = 1e-12);
        }
        assert!((want - 0.882_497).abs() < 1e-6);
    }

    #[test]
    fn mixture_quadrature_agrees_with_monte_carlo() {
        let d = mixture_1d().without_closed_forms();
        let q = SemigroupQuery::new(&d, 0.5, &[0.3], Method::Quadrature);
        let quad = ou_apply(&q).unwrap();
        let mc = ou_apply_mc(&d, 0.5, &[0.3], 1_000_000, 5).unwrap();
        assert!((quad - mc.mean).abs() <= 3.0 * mc.std_error, "{quad} vs {mc:?}");
        let closed = ou_apply(&SemigroupQuery::new(&mixture_1d(), 0.5, &[0.3], Method::ClosedForm)).unwrap();
        assert_relative_eq!(closed, quad, max_relative = 1e-10);
    }

    #[test]
    fn closed_form_missing_is_an_error() {
        let d = mixture_1d().without_closed_forms();
        let q = SemigroupQuery::new(&d, 0.5, &[0.0], Method::ClosedForm);
        assert!(matches!(ou_apply(&q), Err(Error::NoClosedForm { family: "mixture" })));
    }

    #[test]
    fn heat_of_smooth_density_at_tiny_time() {
        let d = DensityModel::sin_bump(0.5, vec![1.0]).unwrap().without_closed_forms();
        let x = [0.4];
        let q = SemigroupQuery::new(&d, 1e-6, &x, Method::Quadrature);
        assert!((heat_apply(&q).unwrap() - d.f(&x)).abs() < 1e-4);
    }

    #[test]
    fn tilt_heat_closed_form_and_gradient() {
        let alpha: f64 = 1.3;
        let d = DensityModel::tilt(vec![alpha]).unwrap();
        for &(s, x) in &[(0.1, -1.0), (0.5, 0.2), (1.0, 2.5)] {
            let want = (alpha * x - alpha * alpha / 2.0 + alpha * alpha * s / 2.0).exp();
            for method in [Method::ClosedForm, Method::Quadrature] {
                let q = SemigroupQuery::new(&d, s, std::slice::from_ref(&x), method);
                assert_relative_eq!(heat_apply(&q).unwrap(), want, max_relative = 1e-12);
                assert_relative_eq!(heat_grad_log(&q).unwrap()[0], alpha, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn mixture_heat_gradient_matches_finite_differences() {
        let d = mixture_1d();
        let g = heat_grad_log(&SemigroupQuery::new(&d, 0.5, &[0.0], Method::Quadrature)).unwrap();
        let h = 1e-5;
        let lp = log_heat_apply(&SemigroupQuery::new(&d, 0.5, &[h], Method::Quadrature)).unwrap();
        let lm = log_heat_apply(&SemigroupQuery::new(&d, 0.5, &[-h], Method::Quadrature)).unwrap();
        assert!((g[0] - (lp - lm) / (2.0 * h)).abs() < 1e-6);
        // off-center point where the gradient is non-trivial
        let x = [0.7];
        let g = heat_grad_log(&SemigroupQuery::new(&d, 0.5, &x, Method::Quadrature)).unwrap();
        let lp = log_heat_apply(&SemigroupQuery::new(&d, 0.5, &[0.7 + h], Method::Quadrature)).unwrap();
        let lm = log_heat_apply(&SemigroupQuery::new(&d, 0.5, &[0.7 - h], Method::Quadrature)).unwrap();
        assert!((g[0] - (lp - lm) / (2.0 * h)).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn heat_grad_below_floor_is_rejected_for_quadrature() {
        let d = mixture_1d();
        let q = SemigroupQuery::new(&d, 1e-5, &[0.0], Method::Quadrature);
        assert!(heat_grad_log(&q).is_err());
        let q = SemigroupQuery::new(&d, 1e-5, &[0.0], Method::ClosedForm);
        assert!(heat_grad_log(&q).is_ok());
    }

    #[test]
    fn heat_time_domain() {
        let d = mixture_1d();
        assert!(heat_apply(&SemigroupQuery::new(&d, 0.0, &[0.0], Method::ClosedForm)).is_err());
        assert!(heat_apply(&SemigroupQuery::new(&d, 1.5, &[0.0], Method::ClosedForm)).is_err());
    }

    #[test]
    fn hessian_margin_trivial_cases() {
        let c = DensityModel::constant(1).unwrap();
        let m = ou_log_hessian_min_eig(&SemigroupQuery::new(&c, 0.25, &[0.3], Method::Quadrature)).unwrap();
        assert_eq!(m, 2.0);
        let d = DensityModel::tilt(vec![1.5]).unwrap();
        let m = ou_log_hessian_min_eig(&SemigroupQuery::new(&d, 0.5, &[0.3], Method::ClosedForm)).unwrap();
        assert!((m - 1.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn hessian_margin_mixture_grid() {
        let d = mixture_1d().without_closed_forms();
        for t in [0.1, 0.5, 1.0] {
            for i in 0..50 {
                let x = [-4.0 + 8.0 * i as f64 / 49.0];
                let m = ou_log_hessian_min_eig(&SemigroupQuery::new(&d, t, &x, Method::Quadrature)).unwrap();
                assert!(m >= -1e-5, "t={t} x={x:?} margin={m}");
            }
        }
    }

    #[test]
    fn nelson_exponent_values() {
        assert_relative_eq!(nelson_exponent(2.0, 2f64.ln()).unwrap(), 5.0, max_relative = 1e-15);
        assert_relative_eq!(nelson_exponent(2.0, 1e-12).unwrap(), 2.0, max_relative = 1e-11);
        assert_relative_eq!(
            nelson_exponent(1.5, 1.0).unwrap(),
            1.0 + 0.5 * 1f64.exp().powi(2),
            max_relative = 1e-15
        );
        assert!((nelson_exponent(1.5, 1.0).unwrap() - 4.6945).abs() < 1e-4);
        assert!(nelson_exponent(1.0, 1.0).is_err());
    }

    #[test]
    fn hypercontractivity_constant_and_tilt() {
        let rule = QuadratureRule::standard(1).unwrap();
        let c = DensityModel::constant(1).unwrap();
        let r = hypercontractivity_check(&c, 2.0, 0.5, rule).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.estimate, 1.0, max_relative = 1e-14);
        // Gaussian L_p norm of a tilt: e^{α²(p−1)/2}; tilts attain equality.
        let d = DensityModel::tilt(vec![1.0]).unwrap();
        let r = hypercontractivity_check(&d, 2.0, 0.5, rule).unwrap();
        assert_relative_eq!(r.bound, 0.5f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(r.estimate, r.bound, max_relative = 1e-10);
        assert!(r.pass);
    }

    #[test]
    fn hypercontractivity_mixture_strict() {
        let rule = QuadratureRule::standard(1).unwrap();
        let r = hypercontractivity_check(&mixture_1d(), 2.0, 0.3, rule).unwrap();
        assert!(r.pass && r.margin > 0.0, "{r:?}");
    }

    #[test]
    fn mass_is_conserved() {
        let fams = [
            mixture_1d(),
            DensityModel::sin_bump(0.5, vec![1.0]).unwrap(),
            DensityModel::tilt(vec![1.0]).unwrap(),
        ];
        let rule = QuadratureRule::standard(1).unwrap();
        for d in &fams {
            for t in [0.1, 1.0, 3.0] {
                let m = ou_mass(d, t, rule).unwrap();
                assert!((m - 1.0).abs() < 1e-10, "{} t={t}: {m}", d.name());
                let m = ou_mass(&d.clone().without_closed_forms(), t, rule).unwrap();
                assert!((m - 1.0).abs() < 1e-10, "{} t={t}: {m}", d.name());
            }
        }
    }

    #[test]
    fn tilt_semigroup_property() {
        let d = DensityModel::tilt(vec![0.8, -0.3]).unwrap();
        let x = [0.5, 1.0];
        let (t, s) = (0.4, 0.7);
        let direct = ou_apply(&SemigroupQuery::new(&d, t + s, &x, Method::Quadrature)).unwrap();
        let inner = d.ou_image(s).unwrap();
        let composed = ou_apply(&SemigroupQuery::new(&inner, t, &x, Method::Quadrature)).unwrap();
        assert_relative_eq!(direct, composed, max_relative = 1e-12);
    }
}
