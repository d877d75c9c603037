//! Gauss–Hermite rules against the standard Gaussian, tensorized to a
//! few dimensions, plus a Gauss–Legendre rule for finite intervals.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

/// Default number of nodes per coordinate.
pub const DEFAULT_NODES: usize = 64;

/// Largest dimension for which tensorized quadrature is offered.
pub const MAX_QUADRATURE_DIM: usize = 3;

/// A probability rule `Σ w_j g(y_j) ≈ ∫ g dγ_n`.
///
/// Nodes are stored row-major: node `j` is `nodes[j*dim .. (j+1)*dim]`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl QuadratureRule {
    /// One-dimensional `m`-point Gauss–Hermite rule for `N(0, 1)`.
    pub fn gauss_hermite(m: usize) -> Self {
        let (x, w) = hermite_physicists(m);
        let nodes = x.iter().map(|x| x * std::f64::consts::SQRT_2).collect();
        let weights: Vec<f64> = w.iter().map(|w| w / PI.sqrt()).collect();
        Self::from_parts(1, nodes, weights)
    }

    /// Tensor product of `dim` copies of the `m`-point rule.
    pub fn tensor(m: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if dim > MAX_QUADRATURE_DIM {
            return Err(Error::DimensionTooLarge {
                max: MAX_QUADRATURE_DIM,
                got: dim,
            });
        }
        let base = Self::gauss_hermite(m);
        let count = m.pow(dim as u32);
        let mut nodes = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; dim];
        for _ in 0..count {
            let mut w = 1.0;
            for &i in &idx {
                nodes.push(base.nodes[i]);
                w *= base.weights[i];
            }
            weights.push(w);
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < m {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self::from_parts(dim, nodes, weights))
    }

    /// Shared default rule (64 nodes per coordinate) for `dim ≤ 3`.
    pub fn standard(dim: usize) -> Result<&'static QuadratureRule> {
        static RULES: [OnceLock<QuadratureRule>; MAX_QUADRATURE_DIM] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        if dim == 0 || dim > MAX_QUADRATURE_DIM {
            return Err(Error::DimensionTooLarge {
                max: MAX_QUADRATURE_DIM,
                got: dim,
            });
        }
        Ok(RULES[dim - 1].get_or_init(|| {
            QuadratureRule::tensor(DEFAULT_NODES, dim).expect("dimension checked")
        }))
    }

    /// Builds a rule from explicit nodes and weights. An empty rule is
    /// representable so that callers can reject it with `Error::EmptyRule`.
    pub fn from_parts(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(nodes.len(), dim * weights.len(), "node/weight shape");
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Self {
            dim,
            nodes,
            weights,
            log_weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    pub(crate) fn check(&self, dim: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyRule);
        }
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim,
            });
        }
        Ok(())
    }

    /// `Σ w_j g(y_j)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut g: F) -> f64 {
        self.nodes()
            .zip(&self.weights)
            .map(|(y, w)| w * g(y))
            .sum()
    }

    /// `ln Σ w_j exp(h(y_j))` for a log-integrand `h`.
    pub fn log_integrate<F: FnMut(&[f64]) -> f64>(&self, mut h: F) -> f64 {
        let terms: Vec<f64> = self
            .nodes()
            .zip(&self.log_weights)
            .map(|(y, lw)| lw + h(y))
            .collect();
        log_sum_exp(&terms)
    }
}

/// Physicists' Gauss–Hermite nodes/weights (weight `e^{-x²}`), ascending.
///
/// Newton iteration on the orthonormal recurrence with the classical
/// asymptotic initial guesses.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    if n == 0 {
        return (x, w);
    }
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[half - 1] = 0.0;
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `∫_a^b g` by composite Gauss–Legendre on `panels` equal sub-intervals.
pub fn integrate_interval<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, mut g: F) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut part = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            part += wi * g(mid + 0.5 * h * xi);
        }
        total += 0.5 * h * part;
    }
    total
}
