//! CSV tables.
//!
//! Every file starts with `# tool=<name> version=<v> config_digest=<hex>`
//! followed by a header row. Floats use 17 significant digits; missing
//! values are empty fields.
//!
//! | file | columns |
//! |------|---------|
//! | `records.csv` | instance, n, instance_seed, method, iterations, run_seed, config_digest, energy, e0, epsilon |
//! | `timings.csv` | instance, n, method, iterations, setup_seconds, loop_seconds, per_iteration_seconds |
//! | `summary.csv` | method, n, iterations, count, eps_median, eps_p25, eps_p75 |
//! | `plot.csv` | panel, series, x, y, y_p25, y_p75 |
//! | `timing_summary.csv` | method, n, iterations, count, per_iteration_median, per_iteration_p25, per_iteration_p75 |
//! | `scaling.csv` | method, iterations, points, exponent, intercept, stderr |
//!
//! Records and summaries are byte-stable for a fixed spec; timing tables
//! are not.

use std::collections::BTreeMap;
use std::path::Path;

use super::record::BenchRecord;
use super::spec::Method;
use super::stats::{fit_scaling, percentile, BatchSummary, ScalingFit, SummaryRow};
use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 10] = [
    "instance",
    "n",
    "instance_seed",
    "method",
    "iterations",
    "run_seed",
    "config_digest",
    "energy",
    "e0",
    "epsilon",
];
pub const TIMING_COLUMNS: [&str; 7] = [
    "instance",
    "n",
    "method",
    "iterations",
    "setup_seconds",
    "loop_seconds",
    "per_iteration_seconds",
];
pub const SUMMARY_COLUMNS: [&str; 7] = [
    "method",
    "n",
    "iterations",
    "count",
    "eps_median",
    "eps_p25",
    "eps_p75",
];
pub const PLOT_COLUMNS: [&str; 6] = ["panel", "series", "x", "y", "y_p25", "y_p75"];
pub const TIMING_SUMMARY_COLUMNS: [&str; 7] = [
    "method",
    "n",
    "iterations",
    "count",
    "per_iteration_median",
    "per_iteration_p25",
    "per_iteration_p75",
];
pub const SCALING_COLUMNS: [&str; 6] = [
    "method",
    "iterations",
    "points",
    "exponent",
    "intercept",
    "stderr",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// First line of every output file.
pub fn provenance_line(digest: &str) -> String {
    format!(
        "# tool={} version={} config_digest={digest}\n",
        crate::TOOL_NAME,
        crate::VERSION
    )
}

fn render_rows<const K: usize>(rows: impl IntoIterator<Item = [String; K]>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn render_table<const K: usize>(
    digest: &str,
    columns: [&str; K],
    rows: impl IntoIterator<Item = [String; K]>,
) -> String {
    provenance_line(digest) + &render_rows([columns.map(str::to_string)]) + &render_rows(rows)
}

/// Parsed table: the digest from the provenance line and the data rows.
struct Table {
    digest: Option<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

fn read_table(text: &str, columns: &[&str]) -> Result<Table> {
    let digest = text
        .lines()
        .next()
        .filter(|l| l.starts_with('#'))
        .and_then(|l| {
            l.split_whitespace()
                .find_map(|t| t.strip_prefix("config_digest="))
        })
        .map(str::to_string);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().ne(columns.iter().copied()) {
        return Err(Error::parse(
            1,
            format!(
                "unexpected columns '{}', expected '{}'",
                header.iter().collect::<Vec<_>>().join(","),
                columns.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok(Table { digest, rows })
}

fn field(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<&str> {
    rec.get(idx)
        .ok_or_else(|| Error::parse(line, format!("missing column {idx}")))
}

fn num<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    line: usize,
    what: &str,
) -> Result<T> {
    let s = field(rec, idx, line)?;
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} '{s}'")))
}

fn float(rec: &csv::StringRecord, idx: usize, line: usize, what: &str) -> Result<f64> {
    let v: f64 = num(rec, idx, line, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(line, format!("non-finite {what}")))
    }
}

fn opt_float(rec: &csv::StringRecord, idx: usize, line: usize, what: &str) -> Result<Option<f64>> {
    if field(rec, idx, line)?.is_empty() {
        Ok(None)
    } else {
        float(rec, idx, line, what).map(Some)
    }
}

fn method(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<Method> {
    field(rec, idx, line)?
        .parse()
        .map_err(|e: Error| Error::parse(line, e.to_string()))
}

fn record_fields(r: &BenchRecord) -> [String; 10] {
    [
        r.instance.clone(),
        r.n.to_string(),
        r.instance_seed.to_string(),
        r.method.to_string(),
        r.iterations.to_string(),
        r.run_seed.to_string(),
        r.config_digest.clone(),
        fmt_f64(r.energy),
        fmt_opt(r.e0),
        fmt_opt(r.epsilon),
    ]
}

pub fn render_records(records: &[BenchRecord], digest: &str) -> String {
    render_table(digest, RECORD_COLUMNS, records.iter().map(record_fields))
}

/// Data rows only, for appending to an existing table.
pub(crate) fn render_record_rows(records: &[BenchRecord]) -> String {
    render_rows(records.iter().map(record_fields))
}

/// Records table; returns the file digest (if present) and the rows, with
/// wall times unset.
pub fn parse_records(text: &str) -> Result<(Option<String>, Vec<BenchRecord>)> {
    let t = read_table(text, &RECORD_COLUMNS)?;
    let recs = t
        .rows
        .iter()
        .map(|(line, r)| {
            let line = *line;
            let instance = field(r, 0, line)?.to_string();
            if instance.is_empty() {
                return Err(Error::parse(line, "empty instance id"));
            }
            Ok(BenchRecord {
                instance,
                n: num(r, 1, line, "n")?,
                instance_seed: num(r, 2, line, "instance seed")?,
                method: method(r, 3, line)?,
                iterations: num(r, 4, line, "iterations")?,
                run_seed: num(r, 5, line, "run seed")?,
                config_digest: field(r, 6, line)?.to_string(),
                energy: float(r, 7, line, "energy")?,
                e0: opt_float(r, 8, line, "e0")?,
                epsilon: opt_float(r, 9, line, "epsilon")?,
                setup_seconds: None,
                loop_seconds: None,
                per_iteration_seconds: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok((t.digest, recs))
}

/// One row of `timings.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub instance: String,
    pub n: usize,
    pub method: Method,
    pub iterations: usize,
    pub setup_seconds: f64,
    pub loop_seconds: f64,
    pub per_iteration_seconds: f64,
}

impl TimingRow {
    pub fn from_record(r: &BenchRecord) -> Option<Self> {
        Some(TimingRow {
            instance: r.instance.clone(),
            n: r.n,
            method: r.method,
            iterations: r.iterations,
            setup_seconds: r.setup_seconds?,
            loop_seconds: r.loop_seconds?,
            per_iteration_seconds: r.per_iteration_seconds?,
        })
    }
}

fn timing_fields(r: &TimingRow) -> [String; 7] {
    [
        r.instance.clone(),
        r.n.to_string(),
        r.method.to_string(),
        r.iterations.to_string(),
        fmt_f64(r.setup_seconds),
        fmt_f64(r.loop_seconds),
        fmt_f64(r.per_iteration_seconds),
    ]
}

pub fn render_timings(rows: &[TimingRow], digest: &str) -> String {
    render_table(digest, TIMING_COLUMNS, rows.iter().map(timing_fields))
}

pub(crate) fn render_timing_rows(rows: &[TimingRow]) -> String {
    render_rows(rows.iter().map(timing_fields))
}

pub fn parse_timings(text: &str) -> Result<(Option<String>, Vec<TimingRow>)> {
    let t = read_table(text, &TIMING_COLUMNS)?;
    let rows = t
        .rows
        .iter()
        .map(|(line, r)| {
            let line = *line;
            Ok(TimingRow {
                instance: field(r, 0, line)?.to_string(),
                n: num(r, 1, line, "n")?,
                method: method(r, 2, line)?,
                iterations: num(r, 3, line, "iterations")?,
                setup_seconds: float(r, 4, line, "setup time")?,
                loop_seconds: float(r, 5, line, "loop time")?,
                per_iteration_seconds: float(r, 6, line, "per-iteration time")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((t.digest, rows))
}

pub fn render_summary(summary: &BatchSummary, digest: &str) -> String {
    render_table(
        digest,
        SUMMARY_COLUMNS,
        summary.rows.iter().map(|r| {
            [
                r.method.to_string(),
                r.n.to_string(),
                r.iterations.to_string(),
                r.count.to_string(),
                fmt_f64(r.median),
                fmt_f64(r.p25),
                fmt_f64(r.p75),
            ]
        }),
    )
}

pub fn parse_summary(text: &str) -> Result<(Option<String>, BatchSummary)> {
    let t = read_table(text, &SUMMARY_COLUMNS)?;
    let rows = t
        .rows
        .iter()
        .map(|(line, r)| {
            let line = *line;
            Ok(SummaryRow {
                method: method(r, 0, line)?,
                n: num(r, 1, line, "n")?,
                iterations: num(r, 2, line, "iterations")?,
                count: num(r, 3, line, "count")?,
                median: float(r, 4, line, "median")?,
                p25: float(r, 5, line, "25th percentile")?,
                p75: float(r, 6, line, "75th percentile")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((t.digest, BatchSummary { rows }))
}

/// Long-format plot table: relative error against N (one series per
/// method and iteration count) and against iterations (one series per
/// method and N).
pub fn render_plot(summary: &BatchSummary, digest: &str) -> String {
    let mut rows = Vec::new();
    for r in &summary.rows {
        rows.push([
            "epsilon_vs_n".to_string(),
            format!("{}@iterations={}", r.method, r.iterations),
            r.n.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.p25),
            fmt_f64(r.p75),
        ]);
    }
    for r in &summary.rows {
        rows.push([
            "epsilon_vs_iterations".to_string(),
            format!("{}@n={}", r.method, r.n),
            r.iterations.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.p25),
            fmt_f64(r.p75),
        ]);
    }
    render_table(digest, PLOT_COLUMNS, rows)
}

/// Per-iteration time statistics per (method, N, iterations).
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSummaryRow {
    pub method: Method,
    pub n: usize,
    pub iterations: usize,
    pub count: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

pub fn summarize_timings(rows: &[TimingRow]) -> Vec<TimingSummaryRow> {
    let mut groups: BTreeMap<(Method, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method, r.n, r.iterations))
            .or_default()
            .push(r.per_iteration_seconds);
    }
    groups
        .into_iter()
        .map(|((method, n, iterations), mut v)| {
            v.sort_by(f64::total_cmp);
            TimingSummaryRow {
                method,
                n,
                iterations,
                count: v.len(),
                median: percentile(&v, 50.0),
                p25: percentile(&v, 25.0),
                p75: percentile(&v, 75.0),
            }
        })
        .collect()
}

pub fn render_timing_summary(rows: &[TimingSummaryRow], digest: &str) -> String {
    render_table(
        digest,
        TIMING_SUMMARY_COLUMNS,
        rows.iter().map(|r| {
            [
                r.method.to_string(),
                r.n.to_string(),
                r.iterations.to_string(),
                r.count.to_string(),
                fmt_f64(r.median),
                fmt_f64(r.p25),
                fmt_f64(r.p75),
            ]
        }),
    )
}

/// Power-law fits of median per-iteration time against N, per method and
/// iteration count, wherever at least three sizes are available.
pub fn scaling_fits(rows: &[TimingSummaryRow], seed: u64) -> Vec<(Method, usize, ScalingFit)> {
    let mut groups: BTreeMap<(Method, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method, r.iterations))
            .or_default()
            .push((r.n as f64, r.median));
    }
    groups
        .into_iter()
        .filter_map(|((m, it), pts)| match fit_scaling(&pts, seed) {
            Ok(f) => Some((m, it, f)),
            Err(e) => {
                log::info!("no scaling fit for {m} at {it} iterations: {e}");
                None
            }
        })
        .collect()
}

pub fn render_scaling(fits: &[(Method, usize, ScalingFit)], digest: &str) -> String {
    render_table(
        digest,
        SCALING_COLUMNS,
        fits.iter().map(|(m, it, f)| {
            [
                m.to_string(),
                it.to_string(),
                f.points.to_string(),
                fmt_f64(f.exponent),
                fmt_f64(f.intercept),
                fmt_f64(f.stderr),
            ]
        }),
    )
}

/// Writes `summary.csv` and `plot.csv` into `dir`.
pub fn emit_report(summary: &BatchSummary, dir: impl AsRef<Path>, digest: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.csv"), render_summary(summary, digest))?;
    std::fs::write(dir.join("plot.csv"), render_plot(summary, digest))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<BenchRecord> {
        vec![
            BenchRecord {
                instance: "2x3x4-0".into(),
                n: 24,
                instance_seed: 0,
                method: Method::Gcs,
                iterations: 1000,
                run_seed: 0,
                config_digest: "abc".into(),
                energy: -30.123456789012345,
                e0: Some(-31.0),
                epsilon: Some(0.028275587451214675),
                setup_seconds: Some(0.1),
                loop_seconds: Some(1.0),
                per_iteration_seconds: Some(0.001),
            },
            BenchRecord {
                instance: "5x5x5-1".into(),
                n: 125,
                instance_seed: 1,
                method: Method::Sa,
                iterations: 10,
                run_seed: 1,
                config_digest: "def".into(),
                energy: -1.0 / 3.0,
                e0: None,
                epsilon: None,
                setup_seconds: None,
                loop_seconds: None,
                per_iteration_seconds: None,
            },
        ]
    }

    #[test]
    fn records_round_trip_bitwise() {
        let recs = sample_records();
        let text = render_records(&recs, "d1");
        assert!(text.starts_with("# tool=qubo-gcs version="));
        let (digest, back) = parse_records(&text).unwrap();
        assert_eq!(digest.as_deref(), Some("d1"));
        assert_eq!(back[0].energy.to_bits(), recs[0].energy.to_bits());
        assert_eq!(back[1].energy.to_bits(), recs[1].energy.to_bits());
        assert_eq!(back[1].e0, None);
        assert_eq!(render_records(&back, "d1"), text);
    }

    #[test]
    fn summary_round_trip_and_empty_table() {
        let empty = render_summary(&BatchSummary::default(), "x");
        assert_eq!(empty.lines().count(), 2);
        assert_eq!(empty.lines().nth(1).unwrap(), SUMMARY_COLUMNS.join(","));
        let s = BatchSummary {
            rows: vec![SummaryRow {
                method: Method::Product,
                n: 24,
                iterations: 1000,
                count: 100,
                median: 0.0123456789,
                p25: 1e-17,
                p75: 0.1,
            }],
        };
        let text = render_summary(&s, "x");
        let (_, back) = parse_summary(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(render_summary(&back, "x"), text);
    }

    #[test]
    fn timings_round_trip() {
        let rows: Vec<_> = sample_records()
            .iter()
            .filter_map(TimingRow::from_record)
            .collect();
        assert_eq!(rows.len(), 1);
        let (_, back) = parse_timings(&render_timings(&rows, "t")).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn plot_has_both_panels() {
        let s = BatchSummary {
            rows: vec![SummaryRow {
                method: Method::Gcs,
                n: 8,
                iterations: 10,
                count: 1,
                median: 0.0,
                p25: 0.0,
                p75: 0.0,
            }],
        };
        let text = render_plot(&s, "p");
        assert!(text.contains("epsilon_vs_n,gcs@iterations=10,8,"));
        assert!(text.contains("epsilon_vs_iterations,gcs@n=8,10,"));
    }

    #[test]
    fn rejects_malformed_tables() {
        let good = render_records(&sample_records(), "d");
        let cases = [
            String::new(),
            "a,b\n1,2\n".to_string(),
            good.replace("gcs", "lqa"),
            good.replace("-3.0123", "x3.0123"),
            good.replace(",24,", ",-24,"),
            good.replace(",abc,", ",abc,extra,"),
        ];
        for c in &cases {
            assert!(parse_records(c).is_err(), "accepted {c:?}");
        }
    }

    #[test]
    fn scaling_fit_from_timing_rows() {
        let rows: Vec<_> = [125usize, 216, 343]
            .iter()
            .map(|&n| TimingSummaryRow {
                method: Method::Gcs,
                n,
                iterations: 3,
                count: 1,
                median: (n as f64).powi(2) * 1e-9,
                p25: 0.0,
                p75: 0.0,
            })
            .collect();
        let fits = scaling_fits(&rows, 0);
        assert_eq!(fits.len(), 1);
        assert!((fits[0].2.exponent - 2.0).abs() < 1e-9);
    }
}
