use std::collections::BTreeMap;

use chrono::NaiveDate;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::catalog::N_FACTORS;
use crate::factor::FactorReturnMatrix;

/// Half-width of the rolling window: roughly one month of trading days.
pub const DEFAULT_WINDOW: usize = 20;

/// Spill beyond ±1 tolerated and clamped; anything larger is a bug.
const CLAMP_SLACK: f64 = 1e-12;

/// Sample Pearson correlation, `None` if either input has zero variance or
/// fewer than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return None;
    }
    let rho = sab / (saa.sqrt() * sbb.sqrt());
    debug_assert!(rho.abs() <= 1.0 + CLAMP_SLACK, "correlation {rho} out of range");
    Some(rho.clamp(-1.0, 1.0))
}

/// Correlation at each index over the centered span `[i − window, i + window]`.
///
/// Indices whose span leaves the series are `None`, as are zero-variance
/// windows; nothing is computed from a partial window.
pub fn rolling_correlation(a: &[f64], b: &[f64], window: usize) -> Result<Vec<Option<f64>>, AnalyticsError> {
    if a.len() != b.len() {
        return Err(AnalyticsError::MisalignedSeries { left: a.len(), right: b.len() });
    }
    if window < 2 {
        return Err(AnalyticsError::WindowTooSmall(window));
    }
    let n = a.len();
    Ok((0..n)
        .map(|i| {
            if i < window || i + window >= n {
                return None;
            }
            let span = i - window..=i + window;
            pearson(&a[span.clone()], &b[span])
        })
        .collect())
}

/// Symmetric correlation matrix of the columns of `days × k` data.
pub fn correlation_matrix(columns: ArrayView2<'_, f64>) -> Vec<Vec<Option<f64>>> {
    let k = columns.ncols();
    let cols: Vec<Vec<f64>> = (0..k).map(|s| columns.column(s).to_vec()).collect();
    let mut out = vec![vec![None; k]; k];
    for j in 0..k {
        for l in j..k {
            let rho = if j == l {
                pearson(&cols[j], &cols[j]).map(|_| 1.0)
            } else {
                pearson(&cols[j], &cols[l])
            };
            out[j][l] = rho;
            out[l][j] = rho;
        }
    }
    out
}

/// Factor correlation matrix over the trading days in `[start, end]`.
pub fn period_correlation_matrix(
    factors: &FactorReturnMatrix,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<Vec<Vec<Option<f64>>>, AnalyticsError> {
    let (lo, hi) = period_bounds(factors, start, end)?;
    Ok(correlation_matrix(factors.returns.slice(ndarray::s![lo..=hi, ..])))
}

fn period_bounds(factors: &FactorReturnMatrix, start: NaiveDate, end: NaiveDate) -> Result<(usize, usize), AnalyticsError> {
    if start >= end {
        return Err(AnalyticsError::EmptyRange { start, end, days: 0 });
    }
    let (lo, hi) = factors.range(start, end).ok_or(AnalyticsError::EmptyRange { start, end, days: 0 })?;
    if hi + 1 - lo < 3 {
        return Err(AnalyticsError::EmptyRange { start, end, days: hi + 1 - lo });
    }
    Ok((lo, hi))
}

/// Rolling and period correlations of all factor pairs for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    pub window: usize,
    pub range: (NaiveDate, NaiveDate),
    /// Trading days of the period.
    pub days: Vec<NaiveDate>,
    pub period: Vec<Vec<Option<f64>>>,
    /// Keyed by `(j, k)` with `j < k`; aligned with `days`.
    pub rolling: BTreeMap<(usize, usize), Vec<Option<f64>>>,
}

impl CorrelationSurface {
    /// `rolling[j][k]` for any ordering of the pair.
    pub fn rolling_pair(&self, j: usize, k: usize) -> Option<&[Option<f64>]> {
        let key = if j <= k { (j, k) } else { (k, j) };
        self.rolling.get(&key).map(Vec::as_slice)
    }
}

/// Builds the surface for `[start, end]`. Rolling values are computed on the
/// full factor history and then restricted to the period, so windows may
/// reach past the period edges but never past the data range.
pub fn correlation_surface(
    factors: &FactorReturnMatrix,
    start: NaiveDate,
    end: NaiveDate,
    window: usize,
) -> Result<CorrelationSurface, AnalyticsError> {
    let (lo, hi) = period_bounds(factors, start, end)?;
    let period = correlation_matrix(factors.returns.slice(ndarray::s![lo..=hi, ..]));
    let cols: Vec<Vec<f64>> = (0..N_FACTORS).map(|s| factors.factor(s).to_vec()).collect();
    let mut rolling = BTreeMap::new();
    for j in 0..N_FACTORS {
        for k in j + 1..N_FACTORS {
            let full = rolling_correlation(&cols[j], &cols[k], window)?;
            rolling.insert((j, k), full[lo..=hi].to_vec());
        }
    }
    Ok(CorrelationSurface {
        window,
        range: (factors.days[lo], factors.days[hi]),
        days: factors.days[lo..=hi].to_vec(),
        period,
        rolling,
    })
}

/// `correlations.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationExport {
    pub range: ExportRange,
    pub window: usize,
    pub period: Vec<Vec<Option<f64>>>,
    pub rolling: BTreeMap<String, Vec<DatedValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedValue {
    pub date: NaiveDate,
    pub value: Option<f64>,
}

impl From<&CorrelationSurface> for CorrelationExport {
    fn from(s: &CorrelationSurface) -> Self {
        let rolling = s
            .rolling
            .iter()
            .map(|(&(j, k), series)| {
                let values = s
                    .days
                    .iter()
                    .zip(series)
                    .map(|(&date, &value)| DatedValue { date, value })
                    .collect();
                (format!("{j},{k}"), values)
            })
            .collect();
        Self {
            range: ExportRange { start: s.range.0, end: s.range.1 },
            window: s.window,
            period: s.period.clone(),
            rolling,
        }
    }
}
