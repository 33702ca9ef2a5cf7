//! Backtested portfolios and benchmark indices.

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::catalog::{N_FACTORS, N_SECTORS};
use crate::error::DataError;
use crate::panel::StockPanel;

/// Shortest accepted backtest, in trading days.
pub const MIN_SPAN: usize = 20;
/// Longest accepted backtest, in trading days.
pub const MAX_SPAN: usize = 400;

/// Holdings of one trading day. `holdings` is sorted by stock index and
/// holds share counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPosition {
    pub holdings: Vec<(usize, f64)>,
    pub cash: f64,
}

/// Values computed from holdings and the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioDerived {
    /// `span × 39`: exposures, sector weights, cash fraction.
    pub records: Array2<f64>,
    /// Daily returns for span days `1..`.
    pub daily_return: Vec<f64>,
    /// Accumulated returns aligned with `daily_return`.
    pub cumulative_return: Vec<f64>,
}

/// One backtest over a contiguous run of panel trading days.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSeries {
    pub id: String,
    /// Index of the first span day in the panel calendar.
    pub start: usize,
    pub positions: Vec<DailyPosition>,
    pub derived: Option<PortfolioDerived>,
}

impl PortfolioSeries {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Panel day index one past the last span day.
    pub fn end(&self) -> usize {
        self.start + self.positions.len()
    }

    /// Panel day index of the last span day.
    pub fn last(&self) -> usize {
        self.end() - 1
    }

    pub fn days<'p>(&self, panel: &'p StockPanel) -> &'p [NaiveDate] {
        &panel.trading_days()[self.start..self.end()]
    }

    /// Checks span length, sortedness and non-negativity against `panel`.
    pub fn validate(&self, panel: &StockPanel) -> Result<(), DataError> {
        let len = self.len();
        if len < MIN_SPAN {
            return Err(DataError::SpanTooShort { portfolio: self.id.clone(), len, min: MIN_SPAN });
        }
        if len > MAX_SPAN {
            return Err(DataError::SpanTooLong { portfolio: self.id.clone(), len, max: MAX_SPAN });
        }
        if self.end() > panel.n_days() {
            return Err(DataError::DateOutOfRange {
                portfolio: self.id.clone(),
                date: *panel.trading_days().last().expect("non-empty panel"),
            });
        }
        for (i, pos) in self.positions.iter().enumerate() {
            let date = panel.trading_days()[self.start + i];
            if !(pos.cash >= 0.0) {
                return Err(DataError::NegativePosition {
                    portfolio: self.id.clone(),
                    date,
                    field: "cash".into(),
                });
            }
            for w in pos.holdings.windows(2) {
                if w[1].0 <= w[0].0 {
                    return Err(DataError::InvalidPanel(format!(
                        "portfolio {}: holdings on {date} not sorted by stock",
                        self.id
                    )));
                }
            }
            for &(j, shares) in &pos.holdings {
                if j >= panel.n_stocks() {
                    return Err(DataError::UnknownStock {
                        portfolio: self.id.clone(),
                        stock: format!("#{j}"),
                    });
                }
                if !(shares >= 0.0) {
                    return Err(DataError::NegativePosition {
                        portfolio: self.id.clone(),
                        date,
                        field: format!("shares of {}", panel.stocks()[j]),
                    });
                }
            }
        }
        Ok(())
    }

    /// Daily 39-dim records, if derived.
    pub fn records(&self) -> Option<&Array2<f64>> {
        self.derived.as_ref().map(|d| &d.records)
    }

    /// Portfolio value `Σ shares × price + cash` on span day `i`.
    pub fn value(&self, panel: &StockPanel, i: usize) -> f64 {
        let t = self.start + i;
        let pos = &self.positions[i];
        value_at(&pos.holdings, pos.cash, panel, t)
    }
}

pub(crate) fn value_at(holdings: &[(usize, f64)], cash: f64, panel: &StockPanel, t: usize) -> f64 {
    let prices = panel.price().row(t);
    holdings.iter().map(|&(j, n)| n * prices[j]).sum::<f64>() + cash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkKind {
    /// Cap-weighted over the whole universe.
    #[serde(rename = "CSI300")]
    Csi300,
    /// Cap-weighted over the stocks below the day's median market cap.
    #[serde(rename = "CSI500")]
    Csi500,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 2] = [BenchmarkKind::Csi300, BenchmarkKind::Csi500];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Csi300 => "CSI300",
            BenchmarkKind::Csi500 => "CSI500",
        }
    }
}

/// A benchmark index with per-day constituent weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketIndex {
    pub kind: BenchmarkKind,
    /// Per panel day, `(stock, weight)` sorted by stock.
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl MarketIndex {
    pub fn build(kind: BenchmarkKind, panel: &StockPanel) -> Self {
        let caps = panel.market_cap();
        let weights = (0..panel.n_days())
            .map(|t| {
                let row = caps.row(t);
                let members: Vec<usize> = match kind {
                    BenchmarkKind::Csi300 => (0..panel.n_stocks()).collect(),
                    BenchmarkKind::Csi500 => {
                        let mut order: Vec<usize> = (0..panel.n_stocks()).collect();
                        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
                        let mut small = order[..panel.n_stocks().div_ceil(2)].to_vec();
                        small.sort_unstable();
                        small
                    }
                };
                let total: f64 = members.iter().map(|&j| row[j]).sum();
                members.into_iter().map(|j| (j, row[j] / total)).collect()
            })
            .collect();
        Self { kind, weights }
    }

    /// Cap-weighted stock return of each panel day.
    pub fn daily_returns(&self, panel: &StockPanel) -> Vec<f64> {
        let r = panel.stock_return();
        self.weights
            .iter()
            .enumerate()
            .map(|(t, w)| w.iter().map(|&(j, wj)| wj * r[[t, j]]).sum())
            .collect()
    }
}

/// Sum of sector weights and cash fraction in a derived record row.
pub fn allocation_total(record: ndarray::ArrayView1<'_, f64>) -> f64 {
    record.slice(ndarray::s![N_FACTORS..N_FACTORS + N_SECTORS + 1]).sum()
}
