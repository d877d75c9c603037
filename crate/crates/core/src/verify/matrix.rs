use std::f64::consts::E;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::foellmer::{simulate_batch, PathBatch, PathConfig, DEFAULT_STEPS};
use crate::measures::DensityModel;
use crate::quadrature::QuadratureRule;
use crate::report::{BoundReport, Params};
use crate::semigroup::{hypercontractivity_check, ou_log_hessian_min_eig, Method, SemigroupQuery};
use crate::verify::paths::*;
use crate::verify::tails::{sharpness_report, tail_curve, tail_curve_reports, TailMethod};

/// `δ = 5/(2 log r)`.
pub fn delta_paper_rule(r: f64) -> f64 {
    2.5 / r.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    Fixed(f64),
    PaperRule,
}

impl DeltaRule {
    pub fn delta(&self, r: f64) -> f64 {
        match *self {
            DeltaRule::Fixed(d) => d,
            DeltaRule::PaperRule => delta_paper_rule(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Tail,
    Sharpness,
    Entropy,
    Energy,
    Z,
    Tv,
    Prop2,
    Composite,
    Hessian,
    Hyper,
    Law,
    Martingale,
    Girsanov,
}

impl Check {
    /// The checks selected by `all`: everything except Girsanov.
    pub const ALL: [Check; 12] = [
        Check::Tail,
        Check::Sharpness,
        Check::Entropy,
        Check::Energy,
        Check::Z,
        Check::Tv,
        Check::Prop2,
        Check::Composite,
        Check::Hessian,
        Check::Hyper,
        Check::Law,
        Check::Martingale,
    ];

    pub fn parse(s: &str) -> Option<Vec<Check>> {
        let c = match s {
            "all" => return Some(Self::ALL.to_vec()),
            "tail" => Check::Tail,
            "sharpness" => Check::Sharpness,
            "entropy" => Check::Entropy,
            "energy" => Check::Energy,
            "z" => Check::Z,
            "tv" => Check::Tv,
            "prop2" => Check::Prop2,
            "composite" => Check::Composite,
            "hessian" => Check::Hessian,
            "hyper" => Check::Hyper,
            "law" => Check::Law,
            "martingale" => Check::Martingale,
            "girsanov" => Check::Girsanov,
            _ => return None,
        };
        Some(vec![c])
    }

    fn needs_paths(self) -> bool {
        !matches!(self, Check::Tail | Check::Sharpness | Check::Hessian | Check::Hyper)
    }
}

/// One family swept over `t` and `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    /// The density before smoothing. Paths at time `t` sample `Q_t f`
    /// (`f` itself when `t = 0`).
    pub base: DensityModel,
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub delta: DeltaRule,
    /// Multiplies every `β` certificate passed to the checks. Values below
    /// 1 understate convexity and serve as negative controls.
    pub beta_factor: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Tail method; `None` picks the deterministic method when one exists
    /// and Monte Carlo with `paths` samples otherwise.
    pub tail_method: Option<TailMethod>,
}

impl Experiment {
    pub fn new(base: DensityModel, t_grid: Vec<f64>, r_grid: Vec<f64>) -> Self {
        Experiment {
            base,
            t_grid,
            r_grid,
            delta: DeltaRule::PaperRule,
            beta_factor: 1.0,
            paths: 100_000,
            steps: DEFAULT_STEPS,
            seed: 42,
            checks: Check::ALL.to_vec(),
            tail_method: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() {
            return Err(Error::invalid("t", "list must be non-empty"));
        }
        if self.t_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::invalid("t", "values must be finite and non-negative"));
        }
        if self.r_grid.is_empty() {
            return Err(Error::invalid("r", "list must be non-empty"));
        }
        if self.r_grid.iter().any(|r| !(*r > 1.0) || !r.is_finite()) {
            return Err(Error::invalid("r", "values must be finite and exceed 1"));
        }
        if self.checks.is_empty() {
            return Err(Error::invalid("checks", "list must be non-empty"));
        }
        if !(self.beta_factor >= 0.0) {
            return Err(Error::invalid("beta_factor", "must be non-negative"));
        }
        if self.checks.iter().any(|c| c.needs_paths()) && self.paths < 1000 {
            return Err(Error::invalid("paths", "Monte Carlo checks need at least 1000 paths"));
        }
        if let DeltaRule::Fixed(d) = self.delta {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::invalid("delta", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn has(&self, c: Check) -> bool {
        self.checks.contains(&c)
    }
}

/// The default matrix: tilt `α = 2`, the symmetric two-point mixture
/// (means `±1`, spread `1/2`) and the sinusoidal perturbation `ε = 1/2`,
/// `k = 1`, each at `t ∈ {0.1, 0.5, 1}` and `r ∈ {e, e², e⁴}`.
pub fn default_matrix(seed: u64, paths: usize, steps: usize) -> Vec<Experiment> {
    let families = [
        DensityModel::tilt(vec![2.0]).expect("valid tilt"),
        DensityModel::mixture(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], 0.5).expect("valid mixture"),
        DensityModel::sin_bump(0.5, vec![1.0]).expect("valid sin"),
    ];
    families
        .into_iter()
        .map(|base| Experiment {
            paths,
            steps,
            seed,
            ..Experiment::new(base, vec![0.1, 0.5, 1.0], vec![E, E * E, E.powi(4)])
        })
        .collect()
}

/// 50 probe points: an even grid on `[−4, 4]` in one dimension, seeded
/// Gaussian draws scaled by 2 otherwise.
fn lemma2_points(dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..50).map(|i| vec![-4.0 + 8.0 * i as f64 / 49.0]).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..50)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    2.0 * g
                })
                .collect()
        })
        .collect()
}

/// `min_x λ_min(∇² log Q_t f(x)) + 1/(2t) ≥ 0` over 50 points, up to the
/// finite-difference tolerance `1e−5`.
pub fn lemma2_check(base: &DensityModel, t: f64) -> Result<BoundReport> {
    let method = if base.closed_forms().is_some() {
        Method::ClosedForm
    } else {
        Method::Quadrature
    };
    let points = lemma2_points(base.dim());
    let mut worst = f64::INFINITY;
    for x in &points {
        let q = SemigroupQuery::new(base, t, x, method);
        worst = worst.min(ou_log_hessian_min_eig(&q)?);
    }
    let params = Params::new(base.name(), base.dim()).t(t).beta(base.beta());
    Ok(BoundReport::new("lemma2_hessian", params, -worst, 1e-5, 0.0).samples(points.len(), None))
}

fn beyond_resolution_row(params: Params, err: &Error) -> BoundReport {
    let estimate = match err {
        Error::BelowResolution { estimate, .. } => *estimate,
        _ => f64::NAN,
    };
    BoundReport::new("tail_method_exact_required", params, estimate, 0.0, f64::NAN).convention()
}

/// `Q_t f` for the experiment's base (`f` itself at `t = 0`).
pub fn cell_model(exp: &Experiment, t: f64) -> Result<DensityModel> {
    if t == 0.0 {
        Ok(exp.base.clone())
    } else {
        exp.base.ou_image(t)
    }
}

/// Simulates the batch of cell `t`, tracking every level of the `r` grid.
pub fn simulate_cell(exp: &Experiment, model: &DensityModel) -> Result<PathBatch> {
    let delta0 = exp.delta.delta(exp.r_grid[0]);
    let cfg = PathConfig::for_density(model, exp.r_grid[0], delta0, exp.seed).steps(exp.steps);
    simulate_batch(model, &cfg, &exp.r_grid, exp.paths)
}

/// Rows of cell `t`: the deterministic checks, then the per-cell path
/// checks, then for each `r` the stopped-path checks. `batch` must come
/// from [`simulate_cell`] when any path check is selected.
pub fn cell_rows(exp: &Experiment, t: f64, model: &DensityModel, batch: Option<&PathBatch>) -> Result<Vec<BoundReport>> {
    let mut rows = Vec::new();
    let base = &exp.base;
    let t_echo = Params::new(base.name(), base.dim()).t(t).beta(model.beta());
    if exp.has(Check::Hessian) && t > 0.0 {
        rows.push(lemma2_check(base, t)?);
    }
    if exp.has(Check::Hyper) && t > 0.0 && base.dim() <= 2 {
        let rule = QuadratureRule::standard(base.dim())?;
        rows.push(hypercontractivity_check(base, 2.0, t, rule)?);
    }
    if exp.has(Check::Tail) {
        let method = exp
            .tail_method
            .or_else(|| TailMethod::deterministic_for(model))
            .unwrap_or(TailMethod::MonteCarlo {
                samples: exp.paths,
                seed: exp.seed,
            });
        match tail_curve(base, t, &exp.r_grid, method) {
            Ok(curve) => rows.extend(tail_curve_reports(&curve, base.dim())),
            Err(e @ Error::BelowResolution { .. }) => rows.push(beyond_resolution_row(t_echo, &e)),
            Err(e) => return Err(e),
        }
    }
    if !exp.checks.iter().any(|c| c.needs_paths()) {
        return Ok(rows);
    }
    let batch = batch.ok_or_else(|| Error::invalid("paths", "path checks need a simulated batch"))?;
    let cell = PathCell::new(model, batch, Some(t));
    let tag = |rep: BoundReport| rep.samples(batch.len(), Some(batch.seed));
    if exp.has(Check::Entropy) && model.dim() <= 3 {
        rows.push(entropy_identity_check(&cell)?);
    }
    if exp.has(Check::Law) && model.dim() == 1 {
        rows.push(ks_law_check(&cell)?);
    }
    let beta = exp.beta_factor * model.beta();
    for &r in &exp.r_grid {
        let delta = exp.delta.delta(r);
        let params = cell.params().r(r).delta(delta).beta(beta);
        if exp.has(Check::Energy) {
            rows.push(drift_energy_bound_check(&cell, r)?);
            rows.push(stopped_value_check(&cell, r)?);
        }
        if exp.has(Check::Martingale) {
            rows.push(martingale_check(&cell, r)?);
        }
        let wants_records = [Check::Z, Check::Tv, Check::Prop2, Check::Girsanov]
            .iter()
            .any(|c| exp.has(*c));
        if wants_records {
            let records = cell.records(r, delta, beta)?;
            if exp.has(Check::Z) {
                let z: Vec<f64> = records.iter().map(|rec| rec.z).collect();
                rows.push(tag(exp_z_check(&z, params.clone())));
                rows.push(tag(bizarre_check(&z, params.clone())));
                rows.push(tag(z_deviation_check(&z, params.clone(), delta, beta, r)));
            }
            if exp.has(Check::Tv) {
                rows.extend(prop1_tv_check(&records, params.clone(), delta, beta, r).into_iter().map(tag));
            }
            if exp.has(Check::Prop2) {
                rows.push(tag(prop2_check(&records, params.clone(), delta, beta, r)));
                rows.push(tag(convexity_check(&records, params.clone())));
            }
            if exp.has(Check::Girsanov) {
                rows.extend(girsanov_checks(&records, params.clone()).into_iter().map(tag));
            }
        }
        if exp.has(Check::Composite) {
            rows.extend(thm2_composite_check(&cell, r));
        }
    }
    Ok(rows)
}

/// Runs every selected check of `exp`, cell by cell in `t` order.
pub fn run_experiment(exp: &Experiment) -> Result<Vec<BoundReport>> {
    exp.validate()?;
    let mut rows = Vec::new();
    for &t in &exp.t_grid {
        let model = cell_model(exp, t)?;
        let batch = if exp.checks.iter().any(|c| c.needs_paths()) {
            Some(simulate_cell(exp, &model)?)
        } else {
            None
        };
        rows.extend(cell_rows(exp, t, &model, batch.as_ref())?);
    }
    Ok(rows)
}

/// Reports of a whole matrix, in experiment order.
#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub rows: Vec<BoundReport>,
}

impl MatrixOutcome {
    /// Anchored rows that fail.
    pub fn anchored_failures(&self) -> Vec<&BoundReport> {
        self.rows.iter().filter(|r| r.anchored && !r.pass).collect()
    }
}

/// The sharpness row (when any experiment asks for it) followed by every
/// experiment's rows.
pub fn run_matrix(experiments: &[Experiment]) -> Result<MatrixOutcome> {
    let mut rows = Vec::new();
    if experiments.iter().any(|e| e.has(Check::Sharpness)) {
        rows.push(sharpness_report(&[E * E, E.powi(4), E.powi(8), E.powi(16)])?);
    }
    for exp in experiments {
        rows.extend(run_experiment(exp)?);
    }
    Ok(MatrixOutcome { rows })
}
