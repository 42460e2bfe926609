//! Order statistics and power-law fits.

use std::collections::BTreeMap;

use rand::Rng;

use super::record::BenchRecord;
use super::spec::Method;
use crate::error::{Error, Result};
use crate::rng;

/// Percentile `p` in `[0, 100]` by linear interpolation between closest
/// ranks: rank `h = (n - 1) p / 100`, value `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Group key: method, spin count, iterations.
pub type GroupKey = (Method, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub iterations: usize,
    pub count: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Median and quartiles of the relative error per (method, N, iterations).
/// Records without a relative error do not count; groups left empty are
/// dropped with a warning.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchSummary {
    pub rows: Vec<SummaryRow>,
}

pub fn summarize(records: &[BenchRecord]) -> BatchSummary {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.method, r.n, r.iterations)).or_default();
        if let Some(eps) = r.epsilon {
            g.push(eps);
        }
    }
    let rows = groups
        .into_iter()
        .filter_map(|((method, n, iterations), mut v)| {
            if v.is_empty() {
                log::warn!(
                    "no relative errors for {method} N={n} iterations={iterations}; group omitted"
                );
                return None;
            }
            v.sort_by(f64::total_cmp);
            Some(SummaryRow {
                method,
                n,
                iterations,
                count: v.len(),
                median: percentile(&v, 50.0),
                p25: percentile(&v, 25.0),
                p75: percentile(&v, 75.0),
            })
        })
        .collect();
    BatchSummary { rows }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    /// Slope of `log t` against `log N`.
    pub exponent: f64,
    /// `log t` at `N = 1`.
    pub intercept: f64,
    /// Bootstrap standard deviation of the exponent.
    pub stderr: f64,
    pub points: usize,
}

/// Number of bootstrap resamples in [`fit_scaling`].
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

fn least_squares(xy: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Ordinary least squares of `log t` on `log N`, with a seeded bootstrap
/// over points (resamples with a single distinct `N` are skipped).
pub fn fit_scaling(points: &[(f64, f64)], seed: u64) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::Validation(format!(
            "scaling fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite()))
    {
        return Err(Error::Validation(format!(
            "scaling fit needs positive values, got {p:?}"
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    let (exponent, intercept) = least_squares(&logs).ok_or_else(|| {
        Error::Validation("scaling fit is degenerate: all sizes are equal".into())
    })?;

    let mut r = rng::seeded(seed);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut sample = Vec::with_capacity(logs.len());
    for _ in 0..BOOTSTRAP_RESAMPLES {
        sample.clear();
        sample.extend((0..logs.len()).map(|_| logs[r.random_range(0..logs.len())]));
        if let Some((s, _)) = least_squares(&sample) {
            slopes.push(s);
        }
    }
    let stderr = if slopes.len() > 1 {
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        (slopes.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ScalingFit {
        exponent,
        intercept,
        stderr,
        points: points.len(),
    })
}
