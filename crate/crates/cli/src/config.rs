//! Experiment config files.
//!
//! A config is TOML with an `[experiment]` table, a `[family]` table and
//! optional per-check tables:
//!
//! ```toml
//! [experiment]
//! t = [0.1, 0.5, 1.0]
//! r = ["e", "e^2", "e^4"]
//! delta = "paper_rule"
//! paths = 100000
//! steps = 2048
//! seed = 42
//! checks = ["all"]
//!
//! [family]
//! name = "mixture"
//! weights = [0.5, 0.5]
//! means = [[-1.0], [1.0]]
//! spread = 0.5
//!
//! [tail]
//! method = "exact"
//! ```

use std::f64::consts::E;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use ou_tails::verify::{Check, DeltaRule, Experiment, TailMethod};
use ou_tails::DensityModel;
use serde::Deserialize;
use toml::Spanned;

/// A config problem, located by field and line.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub field: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in field `{}` (line {}): {}", self.field, self.line, self.message)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Spanned<RawExperiment>,
    family: Spanned<RawFamily>,
    tail: Option<RawTail>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    t: Spanned<Vec<f64>>,
    r: Spanned<Vec<Spanned<RValue>>>,
    delta: Option<Spanned<DeltaValue>>,
    paths: Option<Spanned<usize>>,
    steps: Option<Spanned<usize>>,
    seed: Option<u64>,
    checks: Option<Spanned<Vec<String>>>,
    beta_factor: Option<Spanned<f64>>,
    dim: Option<Spanned<usize>>,
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DeltaValue {
    Fixed(f64),
    Rule(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    name: Spanned<String>,
    u: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
    means: Option<Vec<Vec<f64>>>,
    spread: Option<f64>,
    eps: Option<f64>,
    k: Option<Vec<f64>>,
    dim: Option<usize>,
    beta: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTail {
    method: Spanned<String>,
    samples: Option<usize>,
}

/// A parsed and validated config.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub out: Option<PathBuf>,
}

/// Parses `r` entries: a number, `"e"`, `"e^k"`.
pub fn parse_r(text: &str) -> Option<f64> {
    let s = text.trim();
    if s == "e" {
        return Some(E);
    }
    if let Some(k) = s.strip_prefix("e^") {
        if let Ok(k) = k.trim().parse::<i32>() {
            return Some(E.powi(k));
        }
        return k.trim().parse::<f64>().ok().map(f64::exp);
    }
    s.parse().ok()
}

/// Parses `delta`: `"paper_rule"` or a fixed number.
pub fn parse_delta(text: &str) -> Option<DeltaRule> {
    match text.trim() {
        "paper_rule" => Some(DeltaRule::PaperRule),
        s => s.parse().ok().map(DeltaRule::Fixed),
    }
}

/// Expands check names; `all` expands to every default check.
pub fn parse_checks<S: AsRef<str>>(names: &[S]) -> Result<Vec<Check>, String> {
    let mut out = Vec::new();
    for name in names {
        let more = Check::parse(name.as_ref()).ok_or_else(|| format!("unknown check `{}`", name.as_ref()))?;
        for c in more {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

pub fn parse_tail_method(name: &str, samples: usize, seed: u64) -> Option<TailMethod> {
    match name {
        "exact" => Some(TailMethod::ExactTilt),
        "quadrature" => Some(TailMethod::QuadratureCdf),
        "mc" | "monte_carlo" => Some(TailMethod::MonteCarlo { samples, seed }),
        _ => None,
    }
}

/// Family parameters as they appear in the `[family]` table or on the
/// command line.
#[derive(Debug, Clone, Default)]
pub struct FamilySpec {
    pub name: String,
    pub u: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub spread: Option<f64>,
    pub eps: Option<f64>,
    pub k: Option<Vec<f64>>,
    pub dim: Option<usize>,
    pub beta: Option<f64>,
}

impl FamilySpec {
    /// Builds the density. Errors carry the name of the missing or bad key.
    pub fn build(&self) -> Result<DensityModel, (String, String)> {
        fn need<T: Clone>(v: &Option<T>, key: &str, family: &str) -> Result<T, (String, String)> {
            v.clone()
                .ok_or_else(|| (key.to_string(), format!("required by the {family} family")))
        }
        let core = |e: ou_tails::Error| match e {
            ou_tails::Error::InvalidParameter { name, reason } => (name.to_string(), reason),
            other => ("family".to_string(), other.to_string()),
        };
        let name = self.name.as_str();
        let d = match name {
            "constant" => DensityModel::constant(self.dim.unwrap_or(1)).map_err(core)?,
            "tilt" => DensityModel::tilt(need(&self.u, "u", name)?).map_err(core)?,
            "mixture" => DensityModel::mixture(
                need(&self.weights, "weights", name)?,
                need(&self.means, "means", name)?,
                need(&self.spread, "spread", name)?,
            )
            .map_err(core)?,
            "sin" => DensityModel::sin_bump(need(&self.eps, "eps", name)?, need(&self.k, "k", name)?).map_err(core)?,
            other => {
                return Err((
                    "name".to_string(),
                    format!("unknown family `{other}` (expected constant, tilt, mixture or sin)"),
                ))
            }
        };
        match self.beta {
            Some(b) if !(b >= 0.0 && b.is_finite()) => Err(("beta".into(), "must be finite and non-negative".into())),
            Some(b) => Ok(d.with_beta(b)),
            None => Ok(d),
        }
    }
}

fn line_of(src: &str, span: Range<usize>) -> usize {
    let end = span.start.min(src.len());
    src[..end].bytes().filter(|b| *b == b'\n').count() + 1
}

/// The key on `line`, if the line is a `key = value` pair.
fn key_on_line(src: &str, line: usize) -> Option<String> {
    let text = src.lines().nth(line.checked_sub(1)?)?;
    let (key, _) = text.split_once('=')?;
    let key = key.trim();
    (!key.is_empty() && !key.starts_with('#')).then(|| key.to_string())
}

fn syntax_error(src: &str, e: &toml::de::Error) -> ConfigError {
    let message = e.message().to_string();
    let line = e.span().map(|s| line_of(src, s)).unwrap_or(0);
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("missing field") || message.starts_with("unknown field"))
        .map(str::to_string)
        .or_else(|| key_on_line(src, line))
        .unwrap_or_else(|| "config".to_string());
    ConfigError { field, line, message }
}

/// Parses and validates a config.
pub fn parse_config(src: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| syntax_error(src, &e))?;
    let err = |field: &str, span: Range<usize>, message: String| ConfigError {
        field: field.to_string(),
        line: line_of(src, span),
        message,
    };
    let exp_span = raw.experiment.span();
    let fam_span = raw.family.span();
    let ex = raw.experiment.into_inner();
    let fam = raw.family.into_inner();

    let family_name = fam.name.get_ref().clone();
    let spec = FamilySpec {
        name: family_name,
        u: fam.u,
        weights: fam.weights,
        means: fam.means,
        spread: fam.spread,
        eps: fam.eps,
        k: fam.k,
        dim: fam.dim,
        beta: fam.beta.as_ref().map(|b| *b.get_ref()),
    };
    let base = spec.build().map_err(|(field, msg)| {
        let span = match field.as_str() {
            "name" => fam.name.span(),
            "beta" => fam.beta.as_ref().map(|b| b.span()).unwrap_or(fam_span.clone()),
            _ => fam_span.clone(),
        };
        err(&field, span, msg)
    })?;
    if let Some(dim) = &ex.dim {
        if *dim.get_ref() != base.dim() {
            return Err(err(
                "dim",
                dim.span(),
                format!("family has dimension {}, config says {}", base.dim(), dim.get_ref()),
            ));
        }
    }

    let mut r_grid = Vec::new();
    for item in ex.r.get_ref() {
        let value = match item.get_ref() {
            RValue::Number(x) => Some(*x),
            RValue::Text(s) => parse_r(s),
        };
        let value = value.ok_or_else(|| err("r", item.span(), "entries must be numbers or `e^k`".into()))?;
        r_grid.push(value);
    }
    let delta = match &ex.delta {
        None => DeltaRule::PaperRule,
        Some(d) => match d.get_ref() {
            DeltaValue::Fixed(x) => DeltaRule::Fixed(*x),
            DeltaValue::Rule(s) => parse_delta(s)
                .ok_or_else(|| err("delta", d.span(), format!("expected `paper_rule` or a number, got `{s}`")))?,
        },
    };
    let checks = match &ex.checks {
        None => Check::ALL.to_vec(),
        Some(c) => parse_checks(c.get_ref()).map_err(|m| err("checks", c.span(), m))?,
    };
    let mut experiment = Experiment::new(base, ex.t.get_ref().clone(), r_grid);
    experiment.delta = delta;
    experiment.checks = checks;
    if let Some(p) = &ex.paths {
        experiment.paths = *p.get_ref();
    }
    if let Some(s) = &ex.steps {
        if *s.get_ref() == 0 {
            return Err(err("steps", s.span(), "must be positive".into()));
        }
        experiment.steps = *s.get_ref();
    }
    if let Some(seed) = ex.seed {
        experiment.seed = seed;
    }
    if let Some(b) = &ex.beta_factor {
        experiment.beta_factor = *b.get_ref();
    }
    if let Some(tail) = &raw.tail {
        let samples = tail.samples.unwrap_or(experiment.paths);
        experiment.tail_method = Some(
            parse_tail_method(tail.method.get_ref(), samples, experiment.seed).ok_or_else(|| {
                err(
                    "method",
                    tail.method.span(),
                    format!("expected exact, quadrature or mc, got `{}`", tail.method.get_ref()),
                )
            })?,
        );
    }

    experiment.validate().map_err(|e| {
        let (field, message) = match e {
            ou_tails::Error::InvalidParameter { name, reason } => (name.to_string(), reason),
            other => ("experiment".to_string(), other.to_string()),
        };
        let span = match field.as_str() {
            "t" => ex.t.span(),
            "r" => ex.r.span(),
            "paths" => ex.paths.as_ref().map(|p| p.span()).unwrap_or(exp_span.clone()),
            "checks" => ex.checks.as_ref().map(|c| c.span()).unwrap_or(exp_span.clone()),
            "delta" => ex.delta.as_ref().map(|d| d.span()).unwrap_or(exp_span.clone()),
            "beta_factor" => ex.beta_factor.as_ref().map(|b| b.span()).unwrap_or(exp_span.clone()),
            _ => exp_span.clone(),
        };
        err(&field, span, message)
    })?;

    Ok(ExperimentConfig {
        experiment,
        out: ex.out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TILT: &str = r#"
[experiment]
t = [0.5]
r = ["e", "e^2", 20.0]
checks = ["tail"]

[family]
name = "tilt"
u = [2.0]
"#;

    #[test]
    fn parses_minimal_tilt() {
        let cfg = parse_config(TILT).unwrap();
        let exp = &cfg.experiment;
        assert_eq!(exp.r_grid, vec![E, E.powi(2), 20.0]);
        assert_eq!(exp.checks, vec![Check::Tail]);
        assert_eq!(exp.delta, DeltaRule::PaperRule);
        assert_eq!(exp.base.name(), "tilt");
    }

    #[test]
    fn empty_r_names_field_and_line() {
        let src = TILT.replace(r#"r = ["e", "e^2", 20.0]"#, "r = []");
        let e = parse_config(&src).unwrap_err();
        assert_eq!(e.field, "r");
        assert_eq!(e.line, 4);
    }

    #[test]
    fn bad_type_names_key() {
        let src = TILT.replace("t = [0.5]", "t = \"soon\"");
        let e = parse_config(&src).unwrap_err();
        assert_eq!(e.field, "t");
        assert_eq!(e.line, 3);
    }

    #[test]
    fn missing_family_key_is_named() {
        let src = TILT.replace("u = [2.0]", "");
        let e = parse_config(&src).unwrap_err();
        assert_eq!(e.field, "u");
    }

    #[test]
    fn too_few_paths_rejected_for_mc_checks() {
        let src = TILT
            .replace(r#"checks = ["tail"]"#, r#"checks = ["energy"]"#)
            .replace("t = [0.5]", "t = [0.5]\npaths = 999");
        let e = parse_config(&src).unwrap_err();
        assert_eq!(e.field, "paths");
        assert_eq!(e.line, 4);
    }

    #[test]
    fn unknown_check_and_family() {
        let e = parse_config(&TILT.replace(r#"["tail"]"#, r#"["tails"]"#)).unwrap_err();
        assert_eq!(e.field, "checks");
        let e = parse_config(&TILT.replace(r#""tilt""#, r#""cauchy""#)).unwrap_err();
        assert_eq!(e.field, "name");
        assert_eq!(e.line, 8);
    }

    #[test]
    fn r_shorthand() {
        assert_eq!(parse_r("e"), Some(E));
        assert_eq!(parse_r("e^4"), Some(E.powi(4)));
        assert_eq!(parse_r("e^0.5"), Some(0.5f64.exp()));
        assert_eq!(parse_r("3"), Some(3.0));
        assert_eq!(parse_r("x"), None);
    }

    #[test]
    fn fixed_delta_and_tail_method() {
        let src = format!("{TILT}\n[tail]\nmethod = \"quadrature\"\n").replace("checks", "delta = 0.25\nchecks");
        let cfg = parse_config(&src).unwrap();
        assert_eq!(cfg.experiment.delta, DeltaRule::Fixed(0.25));
        assert_eq!(cfg.experiment.tail_method, Some(TailMethod::QuadratureCdf));
    }
}
