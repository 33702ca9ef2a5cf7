use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use factorscope_core::embedding::{fingerprint, SequenceSource};
use factorscope_core::factor::{estimate_panel_factor_returns, index_records};
use factorscope_core::io::{load_panel, load_portfolios, PanelFormat, PORTFOLIOS_FILE};
use factorscope_core::portfolio::MIN_SPAN;
use factorscope_core::{
    derive_all, BenchmarkKind, DataError, FactorReturnMatrix, MarketIndex, PortfolioSeries, StockPanel,
};

use crate::ServiceError;

/// A benchmark index with its daily records and returns over the whole panel.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub index: MarketIndex,
    pub records: Array2<f64>,
    /// Return of each panel day; the first day has none and holds 0.
    pub daily_returns: Vec<f64>,
}

/// Immutable engine snapshot behind the API.
#[derive(Debug)]
pub struct Dataset {
    pub panel: StockPanel,
    /// Derived portfolios.
    pub portfolios: Vec<PortfolioSeries>,
    index: HashMap<String, usize>,
    pub factors: FactorReturnMatrix,
    pub benchmarks: Vec<Benchmark>,
    pub fingerprint: String,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, ServiceError> {
        let format = PanelFormat::detect(dir).ok_or_else(|| {
            ServiceError::Data(DataError::InvalidPanel(format!("{} holds no panel files", dir.display())))
        })?;
        let panel = load_panel(dir, format)?;
        let portfolios = load_portfolios(&dir.join(PORTFOLIOS_FILE), &panel)?;
        Self::new(panel, portfolios)
    }

    pub fn new(panel: StockPanel, portfolios: Vec<PortfolioSeries>) -> Result<Self, ServiceError> {
        let portfolios = derive_all(&portfolios, &panel)?;
        let factors = estimate_panel_factor_returns(&panel).map_err(factorscope_core::Error::from)?;
        let benchmarks = BenchmarkKind::ALL
            .iter()
            .map(|&kind| {
                let index = MarketIndex::build(kind, &panel);
                let records = index_records(&index, &panel).map_err(factorscope_core::Error::from)?;
                let mut daily_returns = index.daily_returns(&panel);
                daily_returns[0] = 0.0;
                Ok(Benchmark { kind, index, records, daily_returns })
            })
            .collect::<Result<Vec<_>, ServiceError>>()?;
        let index = portfolios.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let mut ds = Self { panel, portfolios, index, factors, benchmarks, fingerprint: String::new() };
        let mut sources = ds.sources();
        sources.extend(ds.benchmark_sources());
        ds.fingerprint = fingerprint(&sources);
        Ok(ds)
    }

    pub fn portfolio(&self, id: &str) -> Option<&PortfolioSeries> {
        self.index.get(id).map(|&i| &self.portfolios[i])
    }

    pub fn sources(&self) -> Vec<SequenceSource<'_>> {
        SequenceSource::from_portfolios(&self.portfolios).expect("portfolios are derived")
    }

    pub fn benchmark_sources(&self) -> Vec<SequenceSource<'_>> {
        self.benchmarks
            .iter()
            .map(|b| SequenceSource { id: b.kind.name(), start: 0, records: b.records.view() })
            .collect()
    }

    pub fn days(&self) -> &[NaiveDate] {
        self.panel.trading_days()
    }

    pub fn full_range(&self) -> (usize, usize) {
        (0, self.panel.n_days() - 1)
    }

    /// Whether any portfolio shares at least 20 days with the period.
    pub fn has_embeddable(&self, lo: usize, hi: usize) -> bool {
        self.portfolios.iter().any(|p| overlap(p.start, p.last(), lo, hi).is_some_and(|(a, b)| b + 1 - a >= MIN_SPAN))
    }
}

/// Intersection of two inclusive day ranges.
pub fn overlap(a0: usize, a1: usize, b0: usize, b1: usize) -> Option<(usize, usize)> {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    (lo <= hi).then_some((lo, hi))
}

/// Accumulated return over `(lo, hi]` from per-day returns indexed by panel day.
pub fn period_return(daily_by_day: impl Fn(usize) -> f64, lo: usize, hi: usize) -> f64 {
    ((lo + 1)..=hi).fold(1.0, |acc, t| acc * (1.0 + daily_by_day(t))) - 1.0
}

/// Return of portfolio `p` on panel day `t`, for `p.start < t <= p.last()`.
pub fn portfolio_return_on(p: &PortfolioSeries, t: usize) -> f64 {
    let d = p.derived.as_ref().expect("portfolio is derived");
    d.daily_return[t - p.start - 1]
}
