//! CSV and JSON report files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ou_tails::BoundReport;
use serde::Serialize;

/// CSV column order.
pub const COLUMNS: [&str; 14] = [
    "name", "family", "dim", "t", "r", "delta", "beta", "estimate", "ci", "bound", "margin", "pass", "n_samples", "seed",
];

#[derive(Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    family: &'a str,
    dim: usize,
    t: Option<f64>,
    r: Option<f64>,
    delta: Option<f64>,
    beta: Option<f64>,
    estimate: f64,
    ci: f64,
    bound: f64,
    margin: f64,
    pass: bool,
    n_samples: usize,
    seed: Option<u64>,
}

impl<'a> From<&'a BoundReport> for CsvRow<'a> {
    fn from(r: &'a BoundReport) -> Self {
        CsvRow {
            name: &r.name,
            family: &r.params.family,
            dim: r.params.dim,
            t: r.params.t,
            r: r.params.r,
            delta: r.params.delta,
            beta: r.params.beta,
            estimate: r.estimate,
            ci: r.ci_half_width,
            bound: r.bound,
            margin: r.margin,
            pass: r.pass,
            n_samples: r.n_samples,
            seed: r.seed,
        }
    }
}

/// Writes `rows` as CSV. The header is always written, even for no rows.
pub fn write_csv<W: Write>(rows: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.serialize(CsvRow::from(row))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Worst {
    pub name: String,
    pub family: String,
    pub t: Option<f64>,
    pub r: Option<f64>,
    /// `margin + ci`; negative means the row fails.
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub source: String,
    pub timestamp: String,
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    pub anchored_failed: usize,
    pub convention_failed: usize,
    pub csv: PathBuf,
    /// Per check name, the row with the smallest `margin + ci`.
    pub worst_margins: BTreeMap<String, Worst>,
}

impl Summary {
    pub fn new(source: &str, rows: &[BoundReport], csv: PathBuf) -> Self {
        let mut worst: BTreeMap<String, Worst> = BTreeMap::new();
        for r in rows {
            let slack = r.margin + r.ci_half_width;
            let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
            let replace = worst.get(&r.name).map_or(true, |w| slack < w.slack);
            if replace {
                worst.insert(
                    r.name.clone(),
                    Worst {
                        name: r.name.clone(),
                        family: r.params.family.clone(),
                        t: r.params.t,
                        r: r.params.r,
                        slack,
                        pass: r.pass,
                    },
                );
            }
        }
        let failed = rows.iter().filter(|r| !r.pass).count();
        let anchored_failed = rows.iter().filter(|r| r.anchored && !r.pass).count();
        Summary {
            source: source.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            rows: rows.len(),
            passed: rows.len() - failed,
            failed,
            anchored_failed,
            convention_failed: failed - anchored_failed,
            csv,
            worst_margins: worst,
        }
    }
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.summary.json`.
pub fn write_reports(dir: &Path, stem: &str, source: &str, rows: &[BoundReport]) -> Result<Summary> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    write_csv(rows, std::io::BufWriter::new(file))?;
    let summary = Summary::new(source, rows, csv_path);
    let json_path = dir.join(format!("{stem}.summary.json"));
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&json_path, json + "\n").with_context(|| format!("writing {}", json_path.display()))?;
    Ok(summary)
}

/// Human-readable summary: failing rows, then one count line.
pub fn print_summary(rows: &[BoundReport], summary: &Summary) {
    for r in rows.iter().filter(|r| !r.pass) {
        let tag = if r.anchored { "FAIL" } else { "note" };
        println!(
            "{tag} {:<24} {:<8} t={:<6} r={:<10} estimate={:.6e} bound={:.6e} ci={:.2e}",
            r.name,
            r.params.family,
            fmt_opt(r.params.t),
            fmt_opt(r.params.r),
            r.estimate,
            r.bound,
            r.ci_half_width,
        );
    }
    println!(
        "{} rows: {} pass, {} fail ({} anchored, {} convention); csv at {}",
        summary.rows,
        summary.passed,
        summary.failed,
        summary.anchored_failed,
        summary.convention_failed,
        summary.csv.display()
    );
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ou_tails::Params;

    fn rows() -> Vec<BoundReport> {
        vec![
            BoundReport::new("a", Params::new("tilt", 1).t(0.5).r(2.0), 0.1, 0.0, 0.5).samples(10, Some(3)),
            BoundReport::new("a", Params::new("tilt", 1).t(1.0), 0.6, 0.05, 0.5),
            BoundReport::new("b", Params::new("sin", 1), 2.0, 0.0, 1.0).convention(),
        ]
    }

    #[test]
    fn csv_header_and_blank_options() {
        let mut buf = Vec::new();
        write_csv(&rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "a,tilt,1,0.5,2.0,,,0.1,0.0,0.5,0.4,true,10,3");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn pass_column_recomputable() {
        let mut buf = Vec::new();
        write_csv(&rows(), &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let ci: f64 = rec[8].parse().unwrap();
            let margin: f64 = rec[10].parse().unwrap();
            let pass: bool = rec[11].parse().unwrap();
            assert_eq!(pass, margin + ci >= 0.0);
        }
    }

    #[test]
    fn summary_counts_and_worst() {
        let rows = rows();
        let s = Summary::new("test", &rows, PathBuf::from("x.csv"));
        assert_eq!((s.rows, s.passed, s.failed), (3, 1, 2));
        assert_eq!((s.anchored_failed, s.convention_failed), (1, 1));
        let w = &s.worst_margins["a"];
        assert_eq!(w.t, Some(1.0));
        assert!((w.slack + 0.05).abs() < 1e-12);
    }
}
