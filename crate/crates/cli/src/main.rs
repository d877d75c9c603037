//! `ou-tails`: batch runner for the tail-bound checks.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ou_tails::verify::{default_matrix, run_matrix, sharpness_report, Experiment};
use ou_tails::BoundReport;

use config::{parse_checks, parse_config, parse_r, parse_tail_method, FamilySpec};

const OUT_ENV: &str = "OU_TAILS_OUT";
const DEFAULT_OUT: &str = "reports";

#[derive(Parser)]
#[command(name = "ou-tails", version, about = "Numerical checks of Gaussian tail bounds for the Ornstein-Uhlenbeck semigroup")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the default experiment matrix.
    VerifyAll {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 2048)]
        steps: usize,
    },
    /// Tail curve of Q_t f for one family.
    Tail(TailArgs),
    /// Sharpness of the tail bound on the tilt family.
    Sharpness {
        /// Levels r, as numbers or `e^k`.
        #[arg(long, value_delimiter = ',', default_value = "e^2,e^4,e^8,e^16")]
        r: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FamilyArgs {
    /// constant, tilt, mixture or sin.
    #[arg(long)]
    family: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Component means, `;` between components and `,` between coordinates.
    #[arg(long, allow_hyphen_values = true)]
    means: Option<String>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    k: Option<Vec<f64>>,
    #[arg(long)]
    dim: Option<usize>,
    /// Overrides the family's β certificate.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct TailArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    t: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "e,e^2,e^4")]
    r: Vec<String>,
    /// exact, quadrature or mc (default: deterministic when available).
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl FamilyArgs {
    fn spec(&self) -> Result<FamilySpec> {
        let means = match &self.means {
            None => None,
            Some(s) => Some(
                s.split(';')
                    .map(|c| c.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("invalid --means `{s}`"))?,
            ),
        };
        Ok(FamilySpec {
            name: self.family.clone(),
            u: self.u.clone(),
            weights: self.weights.clone(),
            means,
            spread: self.spread,
            eps: self.eps,
            k: self.k.clone(),
            dim: self.dim,
            beta: self.beta,
        })
    }
}

/// `--out`, then the config's `out`, then `$OU_TAILS_OUT`, then `reports`.
fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn r_list(items: &[String]) -> Result<Vec<f64>> {
    items
        .iter()
        .map(|s| parse_r(s).ok_or_else(|| anyhow!("invalid r value `{s}`")))
        .collect()
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()?;
    Ok(pool.install(job))
}

fn finish(dir: &Path, stem: &str, source: &str, rows: &[BoundReport]) -> Result<ExitCode> {
    let summary = report::write_reports(dir, stem, source, rows)?;
    report::print_summary(rows, &summary);
    Ok(if summary.anchored_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run_experiments(threads: Option<usize>, experiments: &[Experiment]) -> Result<Vec<BoundReport>> {
    let outcome = with_pool(threads, || run_matrix(experiments))??;
    Ok(outcome.rows)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = parse_config(&text).map_err(|e| anyhow!("{}: {e}", config.display()))?;
            let rows = run_experiments(cli.threads, std::slice::from_ref(&cfg.experiment))?;
            let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            finish(&out_dir(out, cfg.out), stem, &config.display().to_string(), &rows)
        }
        Command::VerifyAll { seed, out, paths, steps } => {
            if paths < 1000 {
                bail!("config error in field `paths`: Monte Carlo checks need at least 1000 paths");
            }
            let rows = run_experiments(cli.threads, &default_matrix(seed, paths, steps))?;
            finish(&out_dir(out, None), "verify_all", "verify-all", &rows)
        }
        Command::Tail(args) => {
            let base = args
                .family
                .spec()?
                .build()
                .map_err(|(field, msg)| anyhow!("invalid --{field}: {msg}"))?;
            let mut exp = Experiment::new(base, args.t.clone(), r_list(&args.r)?);
            exp.checks = parse_checks(&["tail"]).map_err(|e| anyhow!(e))?;
            exp.paths = args.samples;
            exp.seed = args.seed;
            if let Some(m) = &args.method {
                exp.tail_method = Some(
                    parse_tail_method(m, args.samples, args.seed)
                        .ok_or_else(|| anyhow!("invalid --method `{m}` (expected exact, quadrature or mc)"))?,
                );
            }
            exp.validate()?;
            let rows = run_experiments(cli.threads, &[exp])?;
            finish(&out_dir(args.out, None), "tail", "tail", &rows)
        }
        Command::Sharpness { r, out } => {
            let grid = r_list(&r)?;
            let row = sharpness_report(&grid)?;
            finish(&out_dir(out, None), "sharpness", "sharpness", &[row])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
