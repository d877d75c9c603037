use serde::Serialize;

/// Parameters echoed into every report row.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Params {
    pub family: String,
    pub dim: usize,
    pub t: Option<f64>,
    pub r: Option<f64>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
}

impl Params {
    pub fn new(family: impl Into<String>, dim: usize) -> Self {
        Params {
            family: family.into(),
            dim,
            ..Default::default()
        }
    }

    pub fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }
}

/// One checked inequality `estimate ≤ bound`, up to `ci_half_width`.
///
/// Two-sided identities are encoded as `|difference| ≤ 0`. `anchored` marks
/// claims that come from the underlying theory, as opposed to desk-scale
/// conventions (fixed constants) that are reported but never gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub params: Params,
    pub estimate: f64,
    pub ci_half_width: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub anchored: bool,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, params: Params, estimate: f64, ci_half_width: f64, bound: f64) -> Self {
        let ci_half_width = ci_half_width.max(0.0);
        let margin = bound - estimate;
        BoundReport {
            name: name.into(),
            params,
            estimate,
            ci_half_width,
            bound,
            margin,
            pass: Self::passes(margin, ci_half_width),
            n_samples: 0,
            seed: None,
            anchored: true,
        }
    }

    /// `|estimate − target| ≤ tolerance` as a report.
    pub fn identity(name: impl Into<String>, params: Params, estimate: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, params, (estimate - target).abs(), tolerance, 0.0)
    }

    pub fn passes(margin: f64, ci_half_width: f64) -> bool {
        margin + ci_half_width >= 0.0
    }

    pub fn samples(mut self, n: usize, seed: Option<u64>) -> Self {
        self.n_samples = n;
        self.seed = seed;
        self
    }

    /// Marks the bound as a desk-scale convention rather than a claim.
    pub fn convention(mut self) -> Self {
        self.anchored = false;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_margin_plus_ci() {
        let r = BoundReport::new("x", Params::new("tilt", 1), 1.05, 0.1, 1.0);
        assert!(r.pass);
        assert!((r.margin + 0.05).abs() < 1e-15);
        let r = BoundReport::new("x", Params::new("tilt", 1), 1.2, 0.1, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn nan_never_passes() {
        let r = BoundReport::new("x", Params::new("tilt", 1), f64::NAN, 0.1, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn negative_ci_clamped() {
        let r = BoundReport::new("x", Params::new("tilt", 1), 0.0, -1.0, 0.0);
        assert_eq!(r.ci_half_width, 0.0);
        assert!(r.pass);
    }
}
