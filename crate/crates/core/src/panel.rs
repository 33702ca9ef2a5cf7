//! Per-day, per-stock market data with standardized exposures.

use std::collections::HashMap;

use chrono::NaiveDate;
use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::catalog::{N_FACTORS, N_SECTORS};
use crate::error::DataError;
use crate::factor::{standardize_exposures, FactorError};

/// Daily stock universe: exposures, sector membership, prices, caps and returns.
///
/// Day-major layout: `raw_exposure[[t, j, s]]`, `price[[t, j]]`. Standardized
/// exposures are derived at construction, so every panel has cap-weighted
/// zero-mean exposure columns on every day.
#[derive(Debug, Clone, PartialEq)]
pub struct StockPanel {
    trading_days: Vec<NaiveDate>,
    stocks: Vec<String>,
    stock_index: HashMap<String, usize>,
    raw_exposure: Array3<f64>,
    std_exposure: Array3<f64>,
    sector: Vec<usize>,
    price: Array2<f64>,
    market_cap: Array2<f64>,
    stock_return: Array2<f64>,
}

/// Unvalidated panel columns.
#[derive(Debug, Clone)]
pub struct PanelParts {
    pub trading_days: Vec<NaiveDate>,
    pub stocks: Vec<String>,
    pub raw_exposure: Array3<f64>,
    pub sector: Vec<usize>,
    pub price: Array2<f64>,
    pub market_cap: Array2<f64>,
    pub stock_return: Array2<f64>,
}

impl StockPanel {
    pub fn new(parts: PanelParts) -> Result<Self, DataError> {
        let PanelParts { trading_days, stocks, raw_exposure, sector, price, market_cap, stock_return } = parts;
        let (n_days, n_stocks) = (trading_days.len(), stocks.len());
        if n_days == 0 || n_stocks == 0 {
            return Err(DataError::InvalidPanel("panel needs at least one day and one stock".into()));
        }
        if let Some(w) = trading_days.windows(2).find(|w| w[1] <= w[0]) {
            return Err(DataError::InvalidPanel(format!("trading days not increasing at {}", w[1])));
        }
        let expect2 = (n_days, n_stocks);
        for (name, grid) in [("price", &price), ("market_cap", &market_cap), ("return", &stock_return)] {
            if grid.dim() != expect2 {
                return Err(DataError::InvalidPanel(format!(
                    "{name} grid is {:?}, expected {expect2:?}",
                    grid.dim()
                )));
            }
        }
        if raw_exposure.dim() != (n_days, n_stocks, N_FACTORS) {
            return Err(DataError::InvalidPanel(format!(
                "exposure grid is {:?}, expected {:?}",
                raw_exposure.dim(),
                (n_days, n_stocks, N_FACTORS)
            )));
        }
        if sector.len() != n_stocks {
            return Err(DataError::InvalidPanel("one sector per stock required".into()));
        }
        if let Some(s) = sector.iter().find(|&&s| s >= N_SECTORS) {
            return Err(DataError::InvalidPanel(format!("sector index {s} outside 0..{N_SECTORS}")));
        }
        if price.iter().chain(market_cap.iter()).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(DataError::InvalidPanel("prices and market caps must be positive".into()));
        }
        if raw_exposure.iter().chain(stock_return.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::InvalidPanel("non-finite exposure or return".into()));
        }
        let mut stock_index = HashMap::with_capacity(n_stocks);
        for (j, id) in stocks.iter().enumerate() {
            if stock_index.insert(id.clone(), j).is_some() {
                return Err(DataError::InvalidPanel(format!("duplicate stock id `{id}`")));
            }
        }

        let mut std_exposure = Array3::zeros(raw_exposure.raw_dim());
        for t in 0..n_days {
            let day = standardize_exposures(
                raw_exposure.index_axis(Axis(0), t),
                market_cap.row(t),
            )
            .map_err(|e| match e {
                FactorError::DegenerateFactor { factor } => {
                    DataError::DegenerateFactor { day: trading_days[t], factor }
                }
                other => DataError::InvalidPanel(format!("{}: {other}", trading_days[t])),
            })?;
            std_exposure.index_axis_mut(Axis(0), t).assign(&day);
        }

        Ok(Self {
            trading_days,
            stocks,
            stock_index,
            raw_exposure,
            std_exposure,
            sector,
            price,
            market_cap,
            stock_return,
        })
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.trading_days
    }

    pub fn stocks(&self) -> &[String] {
        &self.stocks
    }

    pub fn n_days(&self) -> usize {
        self.trading_days.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn stock_index(&self, id: &str) -> Option<usize> {
        self.stock_index.get(id).copied()
    }

    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        self.trading_days.binary_search(&day).ok()
    }

    /// Indices `[lo, hi]` of the trading days inside `[start, end]`.
    pub fn snap_range(&self, start: NaiveDate, end: NaiveDate) -> Option<(usize, usize)> {
        let lo = self.trading_days.partition_point(|d| *d < start);
        let hi = self.trading_days.partition_point(|d| *d <= end);
        (hi > lo).then(|| (lo, hi - 1))
    }

    pub fn raw_exposure(&self) -> &Array3<f64> {
        &self.raw_exposure
    }

    pub fn std_exposure(&self) -> &Array3<f64> {
        &self.std_exposure
    }

    /// `stocks × factors` standardized exposures on day `t`.
    pub fn std_exposure_day(&self, t: usize) -> ArrayView2<'_, f64> {
        self.std_exposure.index_axis(Axis(0), t)
    }

    pub fn sectors(&self) -> &[usize] {
        &self.sector
    }

    pub fn price(&self) -> &Array2<f64> {
        &self.price
    }

    pub fn market_cap(&self) -> &Array2<f64> {
        &self.market_cap
    }

    pub fn stock_return(&self) -> &Array2<f64> {
        &self.stock_return
    }

    pub fn into_parts(self) -> PanelParts {
        PanelParts {
            trading_days: self.trading_days,
            stocks: self.stocks,
            raw_exposure: self.raw_exposure,
            sector: self.sector,
            price: self.price,
            market_cap: self.market_cap,
            stock_return: self.stock_return,
        }
    }
}
