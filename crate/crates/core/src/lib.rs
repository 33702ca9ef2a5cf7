//! Factor analytics for portfolio backtests.
//!
//! The crate covers the whole offline pipeline behind the workbench:
//!
//! * [`panel`], [`portfolio`], [`io`] and [`synthetic`]: the data model, its
//!   file formats, and a market generator with planted factor structure.
//! * [`factor`]: exposure standardization, value-weighted aggregation into
//!   39-dimensional daily portfolio records, and daily factor-return
//!   regression.
//! * [`analytics`]: accumulated returns plus rolling and period
//!   correlations of factor returns.
//! * [`embedding`]: a recurrent sequence autoencoder and exact t-SNE that
//!   turn variable-length portfolio histories into 2-D coordinates.

pub mod analytics;
pub mod catalog;
pub mod embedding;
pub mod error;
pub mod factor;
pub mod io;
pub mod panel;
pub mod portfolio;
pub mod synthetic;

pub use analytics::AnalyticsError;
pub use catalog::{FactorCatalog, N_FACTORS, N_SECTORS, RECORD_DIM, SECTOR_NAMES, STYLE_FACTORS};
pub use embedding::EmbeddingError;
pub use error::DataError;
pub use factor::{FactorError, FactorReturnMatrix};
pub use panel::StockPanel;
pub use portfolio::{BenchmarkKind, DailyPosition, MarketIndex, PortfolioDerived, PortfolioSeries};

/// Any failure raised by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Fills a portfolio's daily records and return series from the panel.
pub fn derive_portfolio(p: &PortfolioSeries, panel: &StockPanel) -> Result<PortfolioSeries, Error> {
    let records = factor::portfolio_records(p, panel)?;
    let returns = analytics::portfolio_return_series(p, panel)?;
    let mut out = p.clone();
    out.derived = Some(PortfolioDerived {
        records,
        daily_return: returns.daily,
        cumulative_return: returns.cumulative,
    });
    Ok(out)
}

/// [`derive_portfolio`] over a list, in parallel.
pub fn derive_all(portfolios: &[PortfolioSeries], panel: &StockPanel) -> Result<Vec<PortfolioSeries>, Error> {
    use rayon::prelude::*;
    portfolios.par_iter().map(|p| derive_portfolio(p, panel)).collect()
}
