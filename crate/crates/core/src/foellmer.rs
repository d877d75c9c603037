//! Euler–Maruyama simulation of the Föllmer drift process
//!
//! ```text
//! X_0 = 0,   dX_t = dB_t + ∇ log P_{1−t} f(X_t) dt,   t ∈ [0, 1]
//! ```
//!
//! together with the value process `K_t = log P_{1−t} f(X_t)`, the stopping
//! index at level `log r`, the stopped perturbation `X^δ`, its Girsanov
//! density `D^δ`, and the auxiliary variables `Y` and `Z`.
//!
//! All stochastic integrals are left-endpoint (Itô) sums on the simulation
//! grid. Path `i` of a batch draws its increments from the ChaCha stream
//! `(seed, i)`, so a batch is reproducible under any parallel schedule.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{finite, Error, Result};
use crate::measures::{DensityModel, Smoothing};
use crate::semigroup::{log_transform, Method};

/// Default number of Euler steps on `[0, 1]`.
pub const DEFAULT_STEPS: usize = 2048;

/// Minimum number of Euler steps accepted by [`PathConfig`].
pub const MIN_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftMethod {
    ClosedForm,
    Quadrature,
}

impl DriftMethod {
    fn method(self) -> Method {
        match self {
            DriftMethod::ClosedForm => Method::ClosedForm,
            DriftMethod::Quadrature => Method::Quadrature,
        }
    }

    /// Closed form when the model has one, quadrature otherwise.
    pub fn preferred(d: &DensityModel) -> Self {
        if d.closed_forms().is_some() {
            DriftMethod::ClosedForm
        } else {
            DriftMethod::Quadrature
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub dim: usize,
    pub steps: usize,
    pub r: f64,
    pub delta: f64,
    /// Convexity certificate used by `Y`, `Z` and the convexity check.
    /// Passed explicitly so that a wrong value can be injected.
    pub beta: f64,
    pub seed: u64,
    pub drift_method: DriftMethod,
}

impl PathConfig {
    /// Config for `d` with its own `β` and preferred drift method.
    pub fn for_density(d: &DensityModel, r: f64, delta: f64, seed: u64) -> Self {
        PathConfig {
            dim: d.dim(),
            steps: DEFAULT_STEPS,
            r,
            delta,
            beta: d.beta(),
            seed,
            drift_method: DriftMethod::preferred(d),
        }
    }

    pub fn steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn drift_method(mut self, m: DriftMethod) -> Self {
        self.drift_method = m;
        self
    }

    pub fn validate(&self, d: &DensityModel) -> Result<()> {
        if self.dim != d.dim() {
            return Err(Error::DimensionMismatch {
                expected: d.dim(),
                got: self.dim,
            });
        }
        if self.steps < MIN_STEPS {
            return Err(Error::invalid("steps", format!("need at least {MIN_STEPS}")));
        }
        if !(self.r > 1.0) {
            return Err(Error::invalid("r", "must exceed 1"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite and non-negative"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("beta", "must be non-negative"));
        }
        if self.drift_method == DriftMethod::ClosedForm && d.closed_forms().is_none() {
            return Err(Error::NoClosedForm { family: d.name() });
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }
}

/// `(K, v) = (log P_s f(x), ∇ log P_s f(x))`.
fn drift(d: &DensityModel, method: &Method, s: f64, x: &[f64], v: &mut [f64]) -> Result<f64> {
    let k = log_transform(d, x, Smoothing::heat(s), method, Some(v))?;
    finite(k, "value process K")?;
    for vi in v.iter() {
        finite(*vi, "drift v")?;
    }
    Ok(k)
}

/// State at grid node `i`, with the increment `dB_i` towards node `i+1`
/// (empty at the final node).
struct Node<'a> {
    i: usize,
    x: &'a [f64],
    v: &'a [f64],
    k: f64,
    db: &'a [f64],
}

/// Runs one Euler–Maruyama path and feeds every node to `visit`.
fn run_path<F: FnMut(Node<'_>)>(d: &DensityModel, cfg: &PathConfig, path: u64, mut visit: F) -> Result<()> {
    let n = cfg.dim;
    let m = cfg.steps;
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    let method = cfg.drift_method.method();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path);
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut db = vec![0.0; n];
    for i in 0..=m {
        let s = (m - i) as f64 / m as f64;
        let k = drift(d, &method, s, &x, &mut v)?;
        if i == m {
            visit(Node { i, x: &x, v: &v, k, db: &[] });
            break;
        }
        for b in db.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *b = sqrt_dt * g;
        }
        visit(Node { i, x: &x, v: &v, k, db: &db });
        for j in 0..n {
            x[j] += db[j] + v[j] * dt;
            finite(x[j], "state X")?;
        }
    }
    Ok(())
}

/// A fully recorded path. Vector quantities are stored row-major, one row
/// of length `dim` per grid node (`steps` rows for `db`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub steps: usize,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub db: Vec<f64>,
    pub v: Vec<f64>,
    pub k: Vec<f64>,
    /// Running `Σ_{j<i} ⟨v_j, dB_j⟩`.
    pub stoch_int: Vec<f64>,
    /// Running `Σ_{j<i} |v_j|² Δt`.
    pub energy: Vec<f64>,
}

/// Integrals up to the stopping index `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedSums {
    pub t_index: usize,
    /// `Σ_{i<T} ⟨v_i, dB_i⟩`
    pub stoch: f64,
    /// `Σ_{i<T} |v_i|² Δt`
    pub energy: f64,
    /// `Σ_{i<T} v_i Δt`, so that `X^δ_1 = X_1 + δ·drift_integral`.
    pub drift_integral: Vec<f64>,
    /// `K` at the stopping node.
    pub k_at_stop: f64,
    /// `K` at the node before the stopping node (`K_0` if `T = 0`).
    pub k_before_stop: f64,
}

/// Quantities at the final node.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub x1: Vec<f64>,
    /// `v_1 = ∇ log f(X_1)`
    pub v1: Vec<f64>,
    /// `K_1 = log f(X_1)`
    pub log_f_x1: f64,
    pub k0: f64,
    pub stoch_total: f64,
    pub energy_total: f64,
}

impl Endpoint {
    /// `K_1 − K_0 − Σ⟨v,dB⟩ − ½Σ|v|²Δt`, the Itô-discretization residual of
    /// the exponential representation of `P_{1−t} f(X_t)`.
    pub fn fvt_residual(&self) -> f64 {
        self.log_f_x1 - self.k0 - self.stoch_total - 0.5 * self.energy_total
    }
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn x_at(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn v_at(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }

    pub fn db_at(&self, i: usize) -> &[f64] {
        &self.db[i * self.dim..(i + 1) * self.dim]
    }

    /// `K_i − K_0 − stoch_int_i − ½·energy_i`.
    pub fn fvt_residual(&self, i: usize) -> f64 {
        self.k[i] - self.k[0] - self.stoch_int[i] - 0.5 * self.energy[i]
    }

    pub fn max_fvt_residual(&self) -> f64 {
        (0..=self.steps)
            .map(|i| self.fvt_residual(i).abs())
            .fold(0.0, f64::max)
    }

    pub fn stopped_sums(&self, r: f64) -> StoppedSums {
        let t = stopping_index(self, r);
        let dt = self.dt();
        let mut drift_integral = vec![0.0; self.dim];
        for i in 0..t {
            for (acc, vi) in drift_integral.iter_mut().zip(self.v_at(i)) {
                *acc += vi * dt;
            }
        }
        StoppedSums {
            t_index: t,
            stoch: self.stoch_int[t],
            energy: self.energy[t],
            drift_integral,
            k_at_stop: self.k[t],
            k_before_stop: self.k[t.saturating_sub(1)],
        }
    }

    pub fn endpoint(&self) -> Endpoint {
        let m = self.steps;
        Endpoint {
            x1: self.x_at(m).to_vec(),
            v1: self.v_at(m).to_vec(),
            log_f_x1: self.k[m],
            k0: self.k[0],
            stoch_total: self.stoch_int[m],
            energy_total: self.energy[m],
        }
    }

    /// Debug dump with columns `i, t, x_0.., v_0.., K`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["i".to_string(), "t".to_string()];
        header.extend((0..self.dim).map(|j| format!("x_{j}")));
        header.extend((0..self.dim).map(|j| format!("v_{j}")));
        header.push("K".to_string());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..=self.steps {
            let mut row = vec![i.to_string(), self.times[i].to_string()];
            row.extend(self.x_at(i).iter().map(|v| v.to_string()));
            row.extend(self.v_at(i).iter().map(|v| v.to_string()));
            row.push(self.k[i].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Simulates path `path` of the batch defined by `cfg`.
pub fn simulate_path_indexed(d: &DensityModel, cfg: &PathConfig, path: u64) -> Result<Trajectory> {
    cfg.validate(d)?;
    let n = cfg.dim;
    let m = cfg.steps;
    let dt = cfg.dt();
    let mut traj = Trajectory {
        dim: n,
        steps: m,
        times: (0..=m).map(|i| i as f64 / m as f64).collect(),
        x: Vec::with_capacity((m + 1) * n),
        db: Vec::with_capacity(m * n),
        v: Vec::with_capacity((m + 1) * n),
        k: Vec::with_capacity(m + 1),
        stoch_int: Vec::with_capacity(m + 1),
        energy: Vec::with_capacity(m + 1),
    };
    let (mut stoch, mut energy) = (0.0, 0.0);
    run_path(d, cfg, path, |node| {
        traj.x.extend_from_slice(node.x);
        traj.v.extend_from_slice(node.v);
        traj.db.extend_from_slice(node.db);
        traj.k.push(node.k);
        traj.stoch_int.push(stoch);
        traj.energy.push(energy);
        stoch += dot(node.v, node.db);
        energy += dot(node.v, node.v) * dt;
    })?;
    Ok(traj)
}

/// Simulates path 0 of the stream seeded by `cfg.seed`.
pub fn simulate_path(d: &DensityModel, cfg: &PathConfig) -> Result<Trajectory> {
    simulate_path_indexed(d, cfg, 0)
}

/// `min{i : K_i > log r}`, or `steps` if the level is never exceeded.
pub fn stopping_index(traj: &Trajectory, r: f64) -> usize {
    let level = r.ln();
    traj.k.iter().position(|&k| k > level).unwrap_or(traj.steps)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Derived quantities of one path for a given `(r, δ, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRecord {
    pub t_index: usize,
    pub x1: Vec<f64>,
    pub x_delta_1: Vec<f64>,
    pub log_f_x1: f64,
    pub log_f_xdelta: f64,
    /// `log D^δ_1`
    pub log_d_delta_1: f64,
    pub y: f64,
    pub z: f64,
    /// `Σ_{i<T} ⟨v_i, dB_i⟩`
    pub stoch_t: f64,
    /// `Σ_{i<T} |v_i|² Δt`
    pub energy_t: f64,
    /// `⟨v_1, Σ_{i<T} v_i Δt⟩`
    pub alignment_t: f64,
    pub energy_total: f64,
    pub fvt_residual: f64,
    /// `K_0 = log P_1 f(0)`
    pub k0: f64,
    pub k_at_stop: f64,
    pub k_before_stop: f64,
    pub delta: f64,
    pub beta: f64,
}

impl PerturbationRecord {
    pub fn from_parts(d: &DensityModel, end: &Endpoint, stop: &StoppedSums, delta: f64, beta: f64) -> Self {
        let x_delta_1: Vec<f64> = end
            .x1
            .iter()
            .zip(&stop.drift_integral)
            .map(|(x, w)| x + delta * w)
            .collect();
        let log_f_xdelta = d.log_f(&x_delta_1);
        let alignment_t = dot(&end.v1, &stop.drift_integral);
        let cross_t = alignment_t - stop.energy;
        let (s_t, e_t) = (stop.stoch, stop.energy);
        // ∫(1+δ1_{s≤T})⟨v,dB⟩ and ½∫(1+δ1_{s≤T})²|v|²
        let log_d_delta_1 =
            -(end.stoch_total + delta * s_t) - 0.5 * (end.energy_total + (2.0 * delta + delta * delta) * e_t);
        let y = -2.0 * delta * s_t + delta * cross_t - 0.5 * beta * delta * delta * e_t;
        let z = -delta * s_t + delta * cross_t - 0.5 * (beta + 1.0) * delta * delta * e_t;
        PerturbationRecord {
            t_index: stop.t_index,
            x1: end.x1.clone(),
            x_delta_1,
            log_f_x1: end.log_f_x1,
            log_f_xdelta,
            log_d_delta_1,
            y,
            z,
            stoch_t: s_t,
            energy_t: e_t,
            alignment_t,
            energy_total: end.energy_total,
            fvt_residual: end.fvt_residual(),
            k0: end.k0,
            k_at_stop: stop.k_at_stop,
            k_before_stop: stop.k_before_stop,
            delta,
            beta,
        }
    }

    pub fn f_x1(&self) -> f64 {
        self.log_f_x1.exp()
    }

    pub fn f_xdelta(&self) -> f64 {
        self.log_f_xdelta.exp()
    }

    pub fn d_delta_1(&self) -> f64 {
        self.log_d_delta_1.exp()
    }

    /// `∫₀ᵀ⟨v_1 − v_s, v_s⟩ds`
    pub fn cross_t(&self) -> f64 {
        self.alignment_t - self.energy_t
    }

    /// `log(f(X^δ_1)·D^δ_1) − Z`. Non-negative up to the Itô residual of
    /// the path, which enters additively.
    pub fn product_log_margin(&self) -> f64 {
        self.log_f_xdelta + self.log_d_delta_1 - self.z
    }
}

/// Builds the perturbation record of a recorded path.
pub fn perturb(d: &DensityModel, traj: &Trajectory, cfg: &PathConfig) -> PerturbationRecord {
    PerturbationRecord::from_parts(d, &traj.endpoint(), &traj.stopped_sums(cfg.r), cfg.delta, cfg.beta)
}

/// `log f(X^δ_1) − [log f(X_1) + δ⟨v_1, ∫₀ᵀv⟩ − (βδ²/2)∫₀ᵀ|v|²]`, which the
/// weak convexity of `log f` makes non-negative.
pub fn pathwise_convexity_check(rec: &PerturbationRecord) -> f64 {
    let d = rec.delta;
    rec.log_f_xdelta - (rec.log_f_x1 + d * rec.alignment_t - 0.5 * rec.beta * d * d * rec.energy_t)
}

/// Per-path data retained by a streaming batch: the endpoint, the stopped
/// integrals for every requested level, and `v` at a few probe nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub endpoint: Endpoint,
    pub stops: Vec<StoppedSums>,
    pub probes: Vec<Vec<f64>>,
    pub max_fvt_residual: f64,
}

/// A batch of paths, ordered by path index.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub levels: Vec<f64>,
    pub probe_indices: Vec<usize>,
    pub steps: usize,
    pub seed: u64,
    pub paths: Vec<PathSummary>,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn level_index(&self, r: f64) -> Option<usize> {
        self.levels.iter().position(|&l| l == r)
    }

    /// Records for level `levels[level]` with the given `δ` and `β`.
    pub fn records(&self, d: &DensityModel, level: usize, delta: f64, beta: f64) -> Vec<PerturbationRecord> {
        self.paths
            .par_iter()
            .map(|p| PerturbationRecord::from_parts(d, &p.endpoint, &p.stops[level], delta, beta))
            .collect()
    }
}

/// Probe nodes at `t ∈ {1/4, 1/2, 3/4}`.
pub fn default_probe_indices(steps: usize) -> Vec<usize> {
    vec![steps / 4, steps / 2, 3 * steps / 4]
}

fn summarize_path(d: &DensityModel, cfg: &PathConfig, levels: &[f64], probes: &[usize], path: u64) -> Result<PathSummary> {
    let dt = cfg.dt();
    let n = cfg.dim;
    let log_levels: Vec<f64> = levels.iter().map(|r| r.ln()).collect();
    let mut stops: Vec<Option<StoppedSums>> = vec![None; levels.len()];
    let mut drift_integral = vec![0.0; n];
    let mut probe_v = Vec::with_capacity(probes.len());
    let (mut stoch, mut energy) = (0.0, 0.0);
    let (mut k0, mut prev_k) = (0.0, 0.0);
    let mut max_res = 0.0f64;
    let mut endpoint = None;
    run_path(d, cfg, path, |node| {
        if node.i == 0 {
            k0 = node.k;
            prev_k = node.k;
        }
        max_res = max_res.max((node.k - k0 - stoch - 0.5 * energy).abs());
        for (slot, &level) in stops.iter_mut().zip(&log_levels) {
            if slot.is_none() && (node.k > level || node.i == cfg.steps) {
                *slot = Some(StoppedSums {
                    t_index: node.i,
                    stoch,
                    energy,
                    drift_integral: drift_integral.clone(),
                    k_at_stop: node.k,
                    k_before_stop: prev_k,
                });
            }
        }
        if probes.contains(&node.i) {
            probe_v.push(node.v.to_vec());
        }
        if node.i == cfg.steps {
            endpoint = Some(Endpoint {
                x1: node.x.to_vec(),
                v1: node.v.to_vec(),
                log_f_x1: node.k,
                k0,
                stoch_total: stoch,
                energy_total: energy,
            });
            return;
        }
        stoch += dot(node.v, node.db);
        energy += dot(node.v, node.v) * dt;
        for (acc, vi) in drift_integral.iter_mut().zip(node.v) {
            *acc += vi * dt;
        }
        prev_k = node.k;
    })?;
    Ok(PathSummary {
        endpoint: endpoint.expect("final node visited"),
        stops: stops.into_iter().map(|s| s.expect("final node stops every level")).collect(),
        probes: probe_v,
        max_fvt_residual: max_res,
    })
}

/// Simulates `paths` paths in parallel, keeping only per-path summaries.
/// The result depends on `(seed, steps, paths)` only, never on the number
/// of worker threads.
pub fn simulate_batch(d: &DensityModel, cfg: &PathConfig, levels: &[f64], paths: usize) -> Result<PathBatch> {
    cfg.validate(d)?;
    if levels.iter().any(|r| !(*r > 1.0)) {
        return Err(Error::invalid("r", "every level must exceed 1"));
    }
    let probes = default_probe_indices(cfg.steps);
    let summaries: Result<Vec<PathSummary>> = (0..paths as u64)
        .into_par_iter()
        .map(|i| summarize_path(d, cfg, levels, &probes, i))
        .collect();
    Ok(PathBatch {
        levels: levels.to_vec(),
        probe_indices: probes,
        steps: cfg.steps,
        seed: cfg.seed,
        paths: summaries?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(d: &DensityModel, r: f64, delta: f64) -> PathConfig {
        PathConfig::for_density(d, r, delta, 17).steps(256)
    }

    #[test]
    fn tilt_drift_is_constant_and_fvt_exact() {
        let d = DensityModel::tilt(vec![1.5]).unwrap();
        let traj = simulate_path(&d, &small_cfg(&d, 2.0, 0.1)).unwrap();
        assert!(traj.v.iter().all(|&v| (v - 1.5).abs() < 1e-15));
        assert!(traj.max_fvt_residual() < 1e-12);
        assert!(traj.k[0].abs() < 1e-15);
        let x1 = traj.x_at(traj.steps)[0];
        let b1: f64 = traj.db.iter().sum();
        assert!((x1 - (b1 + 1.5)).abs() < 1e-12);
        assert!((traj.k[traj.steps] - d.log_f(&[x1])).abs() < 1e-12);
    }

    #[test]
    fn constant_has_zero_drift() {
        let d = DensityModel::constant(2).unwrap();
        let cfg = small_cfg(&d, 2.0, 0.3);
        let traj = simulate_path(&d, &cfg).unwrap();
        assert!(traj.v.iter().all(|&v| v == 0.0));
        let rec = perturb(&d, &traj, &cfg);
        assert_eq!(rec.log_d_delta_1, 0.0);
        assert_eq!(rec.y, 0.0);
        assert_eq!(rec.z, 0.0);
        assert_eq!(rec.x_delta_1, rec.x1);
        assert_eq!(rec.t_index, cfg.steps);
    }

    #[test]
    fn deterministic_given_seed_and_index() {
        let d = DensityModel::mixture(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], 0.5).unwrap();
        let cfg = small_cfg(&d, 2.0, 0.1);
        let a = simulate_path_indexed(&d, &cfg, 3).unwrap();
        let b = simulate_path_indexed(&d, &cfg, 3).unwrap();
        let c = simulate_path_indexed(&d, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn stopping_index_conventions() {
        let d = DensityModel::tilt(vec![1.0]).unwrap();
        let mut traj = simulate_path(&d, &small_cfg(&d, 2.0, 0.1)).unwrap();
        traj.k.iter_mut().for_each(|k| *k = 0.1);
        assert_eq!(stopping_index(&traj, 2.0), traj.steps);
        traj.k[0] = 5.0;
        assert_eq!(stopping_index(&traj, 2.0), 0);
        traj.k[0] = 0.1;
        traj.k[7] = 0.7;
        assert_eq!(stopping_index(&traj, 2.0), 7);
    }

    #[test]
    fn unperturbed_record() {
        let d = DensityModel::tilt(vec![2.0]).unwrap();
        let cfg = small_cfg(&d, 2.0, 0.0);
        let traj = simulate_path(&d, &cfg).unwrap();
        let rec = perturb(&d, &traj, &cfg);
        assert_eq!(rec.x_delta_1, rec.x1);
        assert_eq!(rec.y, 0.0);
        assert_eq!(rec.z, 0.0);
        let end = traj.endpoint();
        let want = -end.stoch_total - 0.5 * end.energy_total;
        assert_eq!(rec.log_d_delta_1, want);
        assert_eq!(pathwise_convexity_check(&rec), 0.0);
    }

    #[test]
    fn y_z_identity_holds_in_discretization() {
        let d = DensityModel::mixture(vec![0.3, 0.7], vec![vec![-1.0], vec![1.5]], 0.4).unwrap();
        for path in 0..20 {
            let cfg = small_cfg(&d, 1.5, 0.3);
            let traj = simulate_path_indexed(&d, &cfg, path).unwrap();
            let rec = perturb(&d, &traj, &cfg);
            let dl = rec.delta;
            let rhs = rec.z - dl * rec.stoch_t + 0.5 * dl * dl * rec.energy_t;
            assert!((rec.y - rhs).abs() <= 1e-12 * (1.0 + rec.y.abs()), "{} vs {}", rec.y, rhs);
        }
    }

    #[test]
    fn x_delta_matches_stopped_drift_integral() {
        let d = DensityModel::sin_bump(0.6, vec![1.0]).unwrap();
        let cfg = small_cfg(&d, 1.2, 0.4);
        let traj = simulate_path_indexed(&d, &cfg, 2).unwrap();
        let rec = perturb(&d, &traj, &cfg);
        let t = rec.t_index;
        let sum: f64 = (0..t).map(|i| traj.v_at(i)[0]).sum::<f64>() * traj.dt();
        assert!((rec.x_delta_1[0] - (rec.x1[0] + 0.4 * sum)).abs() < 1e-12);
    }

    #[test]
    fn tilt_convexity_margin_is_zero() {
        let d = DensityModel::tilt(vec![1.2, -0.4]).unwrap();
        let cfg = small_cfg(&d, 1.5, 0.7);
        for path in 0..10 {
            let traj = simulate_path_indexed(&d, &cfg, path).unwrap();
            let rec = perturb(&d, &traj, &cfg);
            assert!(pathwise_convexity_check(&rec).abs() < 1e-12);
            assert!(rec.product_log_margin().abs() < 1e-10);
        }
    }

    #[test]
    fn streaming_summary_matches_recorded_path() {
        let d = DensityModel::mixture(vec![0.5, 0.5], vec![vec![-1.0, 0.0], vec![1.0, 0.5]], 0.5).unwrap();
        let cfg = small_cfg(&d, 1.3, 0.2);
        let levels = [1.05, 1.3, 50.0];
        let batch = simulate_batch(&d, &cfg, &levels, 6).unwrap();
        for (i, summary) in batch.paths.iter().enumerate() {
            let traj = simulate_path_indexed(&d, &cfg, i as u64).unwrap();
            assert_eq!(summary.endpoint, traj.endpoint());
            for (j, &r) in levels.iter().enumerate() {
                let a = &summary.stops[j];
                let b = traj.stopped_sums(r);
                assert_eq!(a.t_index, b.t_index);
                assert!((a.stoch - b.stoch).abs() < 1e-14);
                assert!((a.energy - b.energy).abs() < 1e-14);
                assert!((a.drift_integral[0] - b.drift_integral[0]).abs() < 1e-12);
            }
            assert_eq!(summary.probes[1], traj.v_at(cfg.steps / 2).to_vec());
            assert!((summary.max_fvt_residual - traj.max_fvt_residual()).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        let d = DensityModel::tilt(vec![1.0]).unwrap();
        let base = PathConfig::for_density(&d, 2.0, 0.1, 1);
        assert!(base.clone().steps(50).validate(&d).is_err());
        assert!(PathConfig { r: 1.0, ..base.clone() }.validate(&d).is_err());
        assert!(PathConfig { delta: -0.1, ..base.clone() }.validate(&d).is_err());
        assert!(PathConfig { dim: 2, ..base.clone() }.validate(&d).is_err());
        let generic = d.clone().without_closed_forms();
        assert!(base.validate(&generic).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let d = DensityModel::tilt(vec![1.0, 2.0]).unwrap();
        let traj = simulate_path(&d, &small_cfg(&d, 2.0, 0.1)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "i,t,x_0,x_1,v_0,v_1,K");
        assert_eq!(lines.count(), traj.steps + 1);
    }

    #[test]
    fn quadrature_drift_agrees_with_closed_form() {
        let d = DensityModel::sin_bump(0.5, vec![1.0]).unwrap();
        let cfg = small_cfg(&d, 2.0, 0.1);
        let a = simulate_path(&d, &cfg).unwrap();
        let b = simulate_path(&d, &cfg.clone().drift_method(DriftMethod::Quadrature)).unwrap();
        let x_a = a.x_at(a.steps)[0];
        let x_b = b.x_at(b.steps)[0];
        assert!((x_a - x_b).abs() < 1e-8, "{x_a} vs {x_b}");
    }
}
