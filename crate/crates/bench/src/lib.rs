//! Shared inputs for the criterion benches.

use factorscope_core::synthetic::{generate_synthetic_market, SyntheticConfig, SyntheticMarket};

/// A desk-sized market: 300 stocks over one trading year.
pub fn market(n_portfolios: usize) -> SyntheticMarket {
    let cfg = SyntheticConfig { n_stocks: 300, n_days: 250, n_portfolios, span_min: 20, span_max: 120, ..Default::default() };
    generate_synthetic_market(&cfg).expect("valid bench config")
}
