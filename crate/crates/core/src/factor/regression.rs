use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::FactorError;
use crate::catalog::{N_FACTORS, STYLE_FACTORS};

/// Largest accepted condition number of `XᵀX`.
pub const MAX_CONDITION: f64 = 1e10;

/// Loading of a column on the weakest eigenvector above which it is reported
/// as part of a collinear set.
const COLLINEAR_LOADING: f64 = 0.1;

/// One day's regression inputs.
#[derive(Debug, Clone)]
pub struct CrossSection {
    pub day: NaiveDate,
    /// `stocks × factors` standardized exposures.
    pub exposures: Array2<f64>,
    pub returns: Array1<f64>,
    /// Market caps normalized to sum to one.
    pub weights: Array1<f64>,
}

impl CrossSection {
    pub fn new(
        day: NaiveDate,
        exposures: Array2<f64>,
        returns: Array1<f64>,
        market_cap: ArrayView1<'_, f64>,
    ) -> Result<Self, FactorError> {
        let (n, k) = exposures.dim();
        if n <= k {
            return Err(FactorError::TooFewStocks { got: n, need: k + 1 });
        }
        for (what, len) in [("returns", returns.len()), ("market_cap", market_cap.len())] {
            if len != n {
                return Err(FactorError::DimensionMismatch { what, expected: n, actual: len });
            }
        }
        if exposures.iter().chain(returns.iter()).any(|v| !v.is_finite()) {
            return Err(FactorError::MissingData { stock: usize::MAX, field: "cross section" });
        }
        if let Some(j) = market_cap.iter().position(|&c| !(c > 0.0)) {
            return Err(FactorError::NonPositiveWeight { index: j, value: market_cap[j] });
        }
        let total = market_cap.sum();
        let weights = market_cap.mapv(|c| c / total);
        Ok(Self { day, exposures, returns, weights })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub r_squared: f64,
    /// Condition number of `XᵀX`.
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct FactorFit {
    pub factor_returns: Array1<f64>,
    pub residuals: Array1<f64>,
    pub stats: FitStats,
}

/// Ordinary least squares fit of stock returns on factor exposures.
pub fn estimate_factor_returns(cs: &CrossSection) -> Result<FactorFit, FactorError> {
    ols(cs.exposures.view(), cs.returns.view())
}

pub(crate) fn ols(x: ArrayView2<'_, f64>, r: ArrayView1<'_, f64>) -> Result<FactorFit, FactorError> {
    let (n, k) = x.dim();
    if n <= k {
        return Err(FactorError::TooFewStocks { got: n, need: k + 1 });
    }
    let design = DMatrix::from_fn(n, k, |j, s| x[[j, s]]);
    let target = DVector::from_fn(n, |j, _| r[j]);

    let gram = design.transpose() * &design;
    let eig = SymmetricEigen::new(gram);
    let (mut lo, mut hi) = (0, 0);
    for i in 0..k {
        if eig.eigenvalues[i] < eig.eigenvalues[lo] {
            lo = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[hi] {
            hi = i;
        }
    }
    let lambda_min = eig.eigenvalues[lo];
    let lambda_max = eig.eigenvalues[hi];
    let condition = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        let weak = eig.eigenvectors.column(lo);
        let columns = (0..k)
            .filter(|&s| weak[s].abs() > COLLINEAR_LOADING)
            .map(|s| STYLE_FACTORS.get(s).copied().unwrap_or("unnamed"))
            .collect();
        return Err(FactorError::SingularDesign { condition, columns });
    }

    let qr = design.clone().qr();
    let qtr = qr.q().transpose() * &target;
    let f = qr
        .r()
        .solve_upper_triangular(&qtr)
        .ok_or(FactorError::SingularDesign { condition, columns: Vec::new() })?;

    let factor_returns = Array1::from_iter(f.iter().copied());
    let fitted = x.dot(&factor_returns);
    let residuals = &r - &fitted;
    let ssr = residuals.iter().map(|u| u * u).sum::<f64>();
    let mean = r.sum() / n as f64;
    let sst = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else if ssr == 0.0 { 1.0 } else { 0.0 };
    Ok(FactorFit { factor_returns, residuals, stats: FitStats { r_squared, condition } })
}

/// Daily factor returns and per-stock residuals for a whole panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorReturnMatrix {
    pub days: Vec<NaiveDate>,
    /// `days × N_FACTORS`.
    pub returns: Array2<f64>,
    /// `days × stocks`.
    pub residuals: Array2<f64>,
    pub fit: Vec<FitStats>,
}

impl FactorReturnMatrix {
    pub fn from_parts(days: Vec<NaiveDate>, returns: Array2<f64>) -> Result<Self, FactorError> {
        if returns.ncols() != N_FACTORS || returns.nrows() != days.len() {
            return Err(FactorError::DimensionMismatch {
                what: "factor returns",
                expected: days.len() * N_FACTORS,
                actual: returns.len(),
            });
        }
        let n = days.len();
        Ok(Self {
            days,
            returns,
            residuals: Array2::zeros((n, 0)),
            fit: vec![FitStats { r_squared: f64::NAN, condition: f64::NAN }; n],
        })
    }

    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        self.days.binary_search(&day).ok()
    }

    /// Factor return series for one factor.
    pub fn factor(&self, s: usize) -> ArrayView1<'_, f64> {
        self.returns.column(s)
    }

    /// Indices `[lo, hi]` of the trading days inside `[start, end]`, if any.
    pub fn range(&self, start: NaiveDate, end: NaiveDate) -> Option<(usize, usize)> {
        let lo = self.days.partition_point(|d| *d < start);
        let hi = self.days.partition_point(|d| *d <= end);
        (hi > lo).then(|| (lo, hi - 1))
    }
}
