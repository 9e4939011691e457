//! Log-log rate fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::output::ResultRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub algo: String,
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Number of distinct T values in the fit.
    pub points: usize,
    /// Nonpositive or non-finite values left out.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlopeError {
    #[error("need at least 3 distinct T values with positive data, got {0}")]
    TooFewPoints(usize),
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least squares of log(median value) on log T over `(T, value)` pairs.
/// Returns (slope, intercept, r², points, excluded).
pub fn fit_loglog(points: &[(usize, f64)]) -> Result<(f64, f64, f64, usize, usize), SlopeError> {
    let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut excluded = 0;
    for &(t, v) in points {
        if v > 0.0 && v.is_finite() && t > 0 {
            by_t.entry(t).or_default().push(v);
        } else {
            excluded += 1;
        }
    }
    if by_t.len() < 3 {
        return Err(SlopeError::TooFewPoints(by_t.len()));
    }
    let xy: Vec<(f64, f64)> = by_t.into_iter().map(|(t, mut v)| ((t as f64).ln(), median(&mut v).ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r2, xy.len(), excluded))
}

/// Fits the rows of one (algo, metric) pair; rows for other pairs are ignored.
pub fn fit_loglog_slope(rows: &[ResultRow], algo: &str, metric: &str) -> Result<SlopeFit, SlopeError> {
    let pts: Vec<(usize, f64)> =
        rows.iter().filter(|r| r.algo == algo && r.metric == metric).map(|r| (r.t, r.value)).collect();
    let (slope, intercept, r2, points, excluded) = fit_loglog(&pts)?;
    Ok(SlopeFit { algo: algo.into(), metric: metric.into(), slope, intercept, r2, points, excluded })
}
