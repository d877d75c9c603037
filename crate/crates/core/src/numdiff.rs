//! Finite-difference derivatives and small symmetric eigenproblems.

use nalgebra::DMatrix;

/// Step for first-derivative central differences: `ε^{1/3}·max(1, |x|)`.
pub fn cbrt_eps_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Step used by the semigroup Hessian checks: `1e-4·max(1, |x|)`.
pub fn hessian_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(mut g: F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = cbrt_eps_step(x[i]);
            probe[i] = x[i] + h;
            let up = g(&probe);
            probe[i] = x[i] - h;
            let down = g(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Hessian from central differences of an analytic gradient, symmetrized.
pub fn hessian_from_gradient<G: FnMut(&[f64], &mut [f64])>(mut grad: G, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    for j in 0..n {
        let h = cbrt_eps_step(x[j]);
        probe[j] = x[j] + h;
        grad(&probe, &mut up);
        probe[j] = x[j] - h;
        grad(&probe, &mut down);
        probe[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    symmetrize(hess)
}

/// Hessian from second-order central differences of function values with
/// per-coordinate step `step(x_i)`, symmetrized.
pub fn hessian_from_values<F, S>(mut g: F, x: &[f64], step: S) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
    S: Fn(f64) -> f64,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|&xi| step(xi)).collect();
    let center = g(x);
    let mut probe = x.to_vec();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        probe[i] = x[i] + h[i];
        let up = g(&probe);
        probe[i] = x[i] - h[i];
        let down = g(&probe);
        probe[i] = x[i];
        hess[(i, i)] = (up - 2.0 * center + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = g(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix. NaN if any entry is non-finite.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
