//! Time-series analytics: accumulated returns, rolling and period factor
//! correlations, and portfolio return series.

mod correlation;
mod cumulative;

use chrono::NaiveDate;
use thiserror::Error;

pub use correlation::{
    correlation_matrix, correlation_surface, pearson, period_correlation_matrix, rolling_correlation,
    CorrelationExport, CorrelationSurface, DatedValue, ExportRange, DEFAULT_WINDOW,
};
pub use cumulative::{cumulative_return, rebased_cumulative};

use crate::catalog::N_FACTORS;
use crate::factor::FactorReturnMatrix;
use crate::panel::StockPanel;
use crate::portfolio::{value_at, PortfolioSeries};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("return {value} at index {index} is not above -1")]
    InvalidReturn { index: usize, value: f64 },

    #[error("series lengths differ ({left} vs {right})")]
    MisalignedSeries { left: usize, right: usize },

    #[error("window {0} is below 2")]
    WindowTooSmall(usize),

    #[error("range {start}..{end} holds {days} trading days, need at least 3")]
    EmptyRange { start: NaiveDate, end: NaiveDate, days: usize },

    #[error("portfolio {portfolio} has zero value on {day}")]
    ZeroValueDay { portfolio: String, day: NaiveDate },
}

impl AnalyticsError {
    fn shift_index(self, by: usize) -> Self {
        match self {
            AnalyticsError::InvalidReturn { index, value } => {
                AnalyticsError::InvalidReturn { index: index + by, value }
            }
            other => other,
        }
    }
}

/// Daily and accumulated returns of a portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    /// Span days `1..`; a return needs the previous day's value.
    pub days: Vec<NaiveDate>,
    pub daily: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Daily returns of a backtest, net of external flows.
///
/// The return on span day `i` marks day `i − 1`'s holdings and cash to day
/// `i` prices; any difference between that and the recorded value on day `i`
/// is a flow. With unchanged holdings this is the plain value ratio minus one.
pub fn portfolio_return_series(p: &PortfolioSeries, panel: &StockPanel) -> Result<ReturnSeries, AnalyticsError> {
    let days = p.days(panel);
    let mut daily = Vec::with_capacity(p.len().saturating_sub(1));
    for i in 1..p.len() {
        let prev = &p.positions[i - 1];
        let start_value = p.value(panel, i - 1);
        if !(start_value > 0.0) {
            return Err(AnalyticsError::ZeroValueDay { portfolio: p.id.clone(), day: days[i - 1] });
        }
        let marked = value_at(&prev.holdings, prev.cash, panel, p.start + i);
        daily.push(marked / start_value - 1.0);
    }
    let cumulative = cumulative_return(&daily)?;
    Ok(ReturnSeries { days: days[1..].to_vec(), daily, cumulative })
}

/// Accumulated factor returns over `[start, end]`, zero on the first day.
pub fn cumulative_factor_returns(
    factors: &FactorReturnMatrix,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<(Vec<NaiveDate>, Vec<Vec<f64>>), AnalyticsError> {
    let (lo, hi) = factors.range(start, end).ok_or(AnalyticsError::EmptyRange { start, end, days: 0 })?;
    let series = (0..N_FACTORS)
        .map(|s| rebased_cumulative(&factors.factor(s).to_vec()[lo..=hi]))
        .collect::<Result<_, _>>()?;
    Ok((factors.days[lo..=hi].to_vec(), series))
}
