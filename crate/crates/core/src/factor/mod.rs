//! Cross-sectional factor computations: exposure standardization, portfolio
//! aggregation, daily factor-return regression and return decomposition.

mod aggregate;
mod regression;
mod standardize;

use chrono::NaiveDate;
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use thiserror::Error;

pub use aggregate::{
    aggregate_portfolio_exposures, aggregate_sector_positions, position_values, weighted_exposures,
};
pub use regression::{
    estimate_factor_returns, CrossSection, FactorFit, FactorReturnMatrix, FitStats, MAX_CONDITION,
};
pub use standardize::standardize_exposures;

use crate::catalog::{N_FACTORS, N_SECTORS, RECORD_DIM};
use crate::panel::StockPanel;
use crate::portfolio::{MarketIndex, PortfolioSeries};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FactorError {
    #[error("degenerate factor `{factor}`: zero cross-sectional dispersion")]
    DegenerateFactor { factor: &'static str },

    #[error("need at least {need} stocks, got {got}")]
    TooFewStocks { got: usize, need: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },

    #[error("weight {index} is not positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("portfolio holds no stock value")]
    EmptyPortfolio,

    #[error("negative cash {0}")]
    NegativeCash(f64),

    #[error("stock index {0} outside the panel")]
    UnknownStockIndex(usize),

    #[error("stock index {stock}: missing {field}")]
    MissingData { stock: usize, field: &'static str },

    #[error("singular design (condition {condition:.3e}); collinear columns {columns:?}")]
    SingularDesign { condition: f64, columns: Vec<&'static str> },

    #[error("unknown stock `{0}`")]
    UnknownStock(String),

    #[error("unknown day {0}")]
    UnknownDay(NaiveDate),

    #[error("{day}: {source}")]
    OnDay {
        day: NaiveDate,
        #[source]
        source: Box<FactorError>,
    },
}

impl FactorError {
    fn on_day(self, day: NaiveDate) -> Self {
        FactorError::OnDay { day, source: Box::new(self) }
    }
}

/// Runs the cross-sectional regression for every day of the panel.
pub fn estimate_panel_factor_returns(panel: &StockPanel) -> Result<FactorReturnMatrix, FactorError> {
    let days = panel.trading_days();
    let fits: Vec<FactorFit> = (0..days.len())
        .into_par_iter()
        .map(|t| {
            let cs = CrossSection::new(
                days[t],
                panel.std_exposure_day(t).to_owned(),
                panel.stock_return().row(t).to_owned(),
                panel.market_cap().row(t),
            )
            .map_err(|e| e.on_day(days[t]))?;
            estimate_factor_returns(&cs).map_err(|e| e.on_day(days[t]))
        })
        .collect::<Result<_, _>>()?;

    let mut returns = Array2::zeros((days.len(), N_FACTORS));
    let mut residuals = Array2::zeros((days.len(), panel.n_stocks()));
    let mut fit = Vec::with_capacity(days.len());
    for (t, f) in fits.into_iter().enumerate() {
        returns.row_mut(t).assign(&f.factor_returns);
        residuals.row_mut(t).assign(&f.residuals);
        fit.push(f.stats);
    }
    Ok(FactorReturnMatrix { days: days.to_vec(), returns, residuals, fit })
}

/// Per-factor contribution to a stock's return plus the unexplained part.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDecomposition {
    pub contributions: [f64; N_FACTORS],
    pub residual: f64,
    pub total: f64,
}

/// Splits a return into `exposure × factor return` terms and a residual that
/// absorbs the remainder.
pub fn decompose(exposures: ArrayView1<'_, f64>, factor_returns: ArrayView1<'_, f64>, total: f64) -> ReturnDecomposition {
    let mut contributions = [0.0; N_FACTORS];
    for (c, (x, f)) in contributions.iter_mut().zip(exposures.iter().zip(factor_returns.iter())) {
        *c = x * f;
    }
    let residual = total - contributions.iter().sum::<f64>();
    ReturnDecomposition { contributions, residual, total }
}

/// [`decompose`] for a stock and day of a panel.
pub fn decompose_return(
    panel: &StockPanel,
    factors: &FactorReturnMatrix,
    stock: &str,
    day: NaiveDate,
) -> Result<ReturnDecomposition, FactorError> {
    let j = panel.stock_index(stock).ok_or_else(|| FactorError::UnknownStock(stock.to_owned()))?;
    let t = panel.day_index(day).ok_or(FactorError::UnknownDay(day))?;
    let ft = factors.day_index(day).ok_or(FactorError::UnknownDay(day))?;
    Ok(decompose(
        panel.std_exposure_day(t).row(j),
        factors.returns.row(ft),
        panel.stock_return()[[t, j]],
    ))
}

/// The 39-dimensional record of one day: exposures, sector weights, cash fraction.
pub fn daily_record(
    holdings: &[(usize, f64)],
    cash: f64,
    panel: &StockPanel,
    t: usize,
) -> Result<Array1<f64>, FactorError> {
    let prices = panel.price().row(t);
    let exposures = aggregate_portfolio_exposures(holdings, prices, panel.std_exposure_day(t))?;
    let sectors = aggregate_sector_positions(holdings, prices, panel.sectors(), cash)?;
    let mut record = Array1::zeros(RECORD_DIM);
    record.slice_mut(ndarray::s![..N_FACTORS]).assign(&exposures);
    record.slice_mut(ndarray::s![N_FACTORS..]).assign(&sectors);
    Ok(record)
}

/// Daily 39-dimensional records over a portfolio's span.
pub fn portfolio_records(p: &PortfolioSeries, panel: &StockPanel) -> Result<Array2<f64>, FactorError> {
    let days = panel.trading_days();
    let mut records = Array2::zeros((p.len(), RECORD_DIM));
    for (i, pos) in p.positions.iter().enumerate() {
        let t = p.start + i;
        let rec = daily_record(&pos.holdings, pos.cash, panel, t).map_err(|e| e.on_day(days[t]))?;
        records.row_mut(i).assign(&rec);
    }
    Ok(records)
}

/// Daily 39-dimensional records of a benchmark index (cash fraction is zero).
pub fn index_records(index: &MarketIndex, panel: &StockPanel) -> Result<Array2<f64>, FactorError> {
    let mut records = Array2::zeros((index.weights.len(), RECORD_DIM));
    for (t, w) in index.weights.iter().enumerate() {
        let exposures = weighted_exposures(w, panel.std_exposure_day(t)).map_err(|e| e.on_day(panel.trading_days()[t]))?;
        let mut row = records.row_mut(t);
        row.slice_mut(ndarray::s![..N_FACTORS]).assign(&exposures);
        let total: f64 = w.iter().map(|(_, v)| v).sum();
        for &(j, v) in w {
            row[N_FACTORS + panel.sectors()[j]] += v / total;
        }
        debug_assert_eq!(row.len(), N_FACTORS + N_SECTORS + 1);
    }
    Ok(records)
}
