//! Synthetic market with planted factor returns and strategy archetypes.
//!
//! Stock returns follow the factor model exactly: on every day
//! `r = X·f + u`, with `X` the standardized exposures, `f` the planted factor
//! returns and `u` zero-mean Gaussian noise of scale `residual_vol`. Each
//! portfolio belongs to one archetype and is rebalanced periodically towards
//! that archetype's target exposures and preferred sectors, so regression,
//! correlation and clustering all have known answers.

use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::{N_FACTORS, N_SECTORS, STYLE_FACTORS};
use crate::error::DataError;
use crate::factor::standardize_exposures;
use crate::panel::{PanelParts, StockPanel};
use crate::portfolio::{DailyPosition, PortfolioSeries, MIN_SPAN};

/// Largest per-factor gap between an archetype target and the closest
/// reachable portfolio exposure.
pub const FEASIBILITY_TOLERANCE: f64 = 0.5;

const START_CAPITAL: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub n_portfolios: usize,
    pub n_archetypes: usize,
    /// Target exposures per archetype; generated from the seed when empty.
    pub archetype_exposures: Vec<[f64; N_FACTORS]>,
    /// Preferred sector distribution per archetype (28 weights); generated when empty.
    pub archetype_sectors: Vec<Vec<f64>>,
    /// `n_days × 10` planted factor returns; drawn iid when empty.
    pub planted_factor_returns: Vec<[f64; N_FACTORS]>,
    /// Daily volatility of generated factor returns.
    pub factor_vol: f64,
    pub residual_vol: f64,
    pub span_min: usize,
    pub span_max: usize,
    /// Equal-value lots per portfolio; repeated picks of a stock stack.
    pub lots: usize,
    pub rebalance_every: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_stocks: 300,
            n_days: 500,
            n_portfolios: 200,
            n_archetypes: 3,
            archetype_exposures: Vec::new(),
            archetype_sectors: Vec::new(),
            planted_factor_returns: Vec::new(),
            factor_vol: 0.005,
            residual_vol: 0.01,
            span_min: 20,
            span_max: 400,
            lots: 20,
            rebalance_every: 20,
            start_date: NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date"),
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.n_stocks <= N_FACTORS {
            return bad(format!("n_stocks must exceed {N_FACTORS}, got {}", self.n_stocks));
        }
        if self.n_days == 0 || self.n_portfolios == 0 || self.n_archetypes == 0 {
            return bad("n_days, n_portfolios and n_archetypes must be positive".into());
        }
        if self.n_archetypes > self.n_portfolios {
            return bad(format!("{} archetypes for {} portfolios", self.n_archetypes, self.n_portfolios));
        }
        if self.span_min < MIN_SPAN || self.span_min > self.span_max || self.span_max > crate::portfolio::MAX_SPAN {
            return bad(format!("span range {}..={} outside 20..=400", self.span_min, self.span_max));
        }
        if self.span_min > self.n_days {
            return bad(format!("n_days {} shorter than span_min {}", self.n_days, self.span_min));
        }
        if self.lots == 0 || self.rebalance_every == 0 {
            return bad("lots and rebalance_every must be positive".into());
        }
        if !(self.residual_vol >= 0.0) || !(self.factor_vol >= 0.0) {
            return bad("volatilities must be non-negative".into());
        }
        if !self.archetype_exposures.is_empty() && self.archetype_exposures.len() != self.n_archetypes {
            return bad("archetype_exposures must list one vector per archetype".into());
        }
        if !self.archetype_sectors.is_empty()
            && (self.archetype_sectors.len() != self.n_archetypes
                || self.archetype_sectors.iter().any(|w| w.len() != N_SECTORS || w.iter().any(|&x| !(x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0)))
        {
            return bad("archetype_sectors must hold one non-negative 28-vector per archetype".into());
        }
        if !self.planted_factor_returns.is_empty() && self.planted_factor_returns.len() != self.n_days {
            return bad("planted_factor_returns must have n_days rows".into());
        }
        Ok(())
    }
}

/// Ground truth planted by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub seed: u64,
    pub factors: Vec<String>,
    pub days: Vec<NaiveDate>,
    /// `days × 10`.
    pub factor_returns: Vec<Vec<f64>>,
    /// `days × stocks`.
    pub residuals: Vec<Vec<f64>>,
    pub archetype_exposures: Vec<Vec<f64>>,
    pub archetype_sectors: Vec<Vec<f64>>,
    /// Archetype of each portfolio, in portfolio order.
    pub labels: Vec<PortfolioLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioLabel {
    pub id: String,
    pub archetype: usize,
}

impl PlantedTruth {
    pub fn factor_matrix(&self) -> Array2<f64> {
        rows_to_array(&self.factor_returns)
    }

    pub fn residual_matrix(&self) -> Array2<f64> {
        rows_to_array(&self.residuals)
    }

    pub fn label_vec(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.archetype).collect()
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let k = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), k), |(i, j)| rows[i][j])
}

/// A generated dataset.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub panel: StockPanel,
    pub portfolios: Vec<PortfolioSeries>,
    pub truth: PlantedTruth,
}

fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Independent stream for one generation stage.
fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Greedy lot allocation steering exposures and sector mix towards targets.
///
/// Returns per-stock lot counts; lots have equal value.
fn steer(
    exposures: ArrayView2<'_, f64>,
    sectors: &[usize],
    target: ArrayView1<'_, f64>,
    sector_pref: &[f64],
    lots: usize,
) -> Vec<usize> {
    let n = exposures.nrows();
    let mut counts = vec![0usize; n];
    let mut exp_sum = Array1::<f64>::zeros(N_FACTORS);
    let mut sec_sum = vec![0.0; N_SECTORS];
    for m in 1..=lots {
        let mf = m as f64;
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..n {
            let row = exposures.row(j);
            let mut cost = 0.0;
            for s in 0..N_FACTORS {
                let e = (exp_sum[s] + row[s]) / mf - target[s];
                cost += e * e;
            }
            for (k, &pref) in sector_pref.iter().enumerate() {
                let w = (sec_sum[k] + f64::from(u8::from(sectors[j] == k))) / mf;
                cost += (w - pref) * (w - pref);
            }
            if cost < best.0 {
                best = (cost, j);
            }
        }
        let j = best.1;
        counts[j] += 1;
        exp_sum.scaled_add(1.0, &exposures.row(j));
        sec_sum[sectors[j]] += 1.0;
    }
    counts
}

fn lot_exposure(exposures: ArrayView2<'_, f64>, counts: &[usize]) -> Array1<f64> {
    let total: usize = counts.iter().sum();
    let mut out = Array1::zeros(N_FACTORS);
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            out.scaled_add(c as f64 / total as f64, &exposures.row(j));
        }
    }
    out
}

/// Builds a market, portfolios and planted truth; a pure function of `cfg`.
pub fn generate_synthetic_market(cfg: &SyntheticConfig) -> Result<SyntheticMarket, DataError> {
    cfg.validate()?;
    let (n_days, n_stocks) = (cfg.n_days, cfg.n_stocks);
    let days = weekdays(cfg.start_date, n_days);
    let stocks: Vec<String> = (0..n_stocks).map(|j| format!("{:06}.XSHE", j + 1)).collect();

    // universe
    let mut rng = stage_rng(cfg.seed, 1);
    let sector: Vec<usize> = (0..n_stocks).map(|j| if j < N_SECTORS { j } else { rng.random_range(0..N_SECTORS) }).collect();
    let shares_out: Vec<f64> = (0..n_stocks).map(|_| 1e8 * (1.0 + 0.8 * normal(&mut rng)).exp()).collect();
    let mut last_price: Vec<f64> = (0..n_stocks).map(|_| rng.random_range(5.0..50.0)).collect();
    let base: Array2<f64> = Array2::from_shape_fn((n_stocks, N_FACTORS), |_| normal(&mut rng));
    let mut drift: Array2<f64> = Array2::zeros((n_stocks, N_FACTORS));
    let mut raw = Array3::<f64>::zeros((n_days, n_stocks, N_FACTORS));
    for t in 0..n_days {
        drift.mapv_inplace(|d| 0.98 * d);
        for v in drift.iter_mut() {
            *v += 0.05 * normal(&mut rng);
        }
        raw.index_axis_mut(Axis(0), t).assign(&(&base + &drift));
    }

    // factor and residual returns
    let mut rng = stage_rng(cfg.seed, 2);
    let factor_returns: Array2<f64> = if cfg.planted_factor_returns.is_empty() {
        Array2::from_shape_fn((n_days, N_FACTORS), |_| cfg.factor_vol * normal(&mut rng))
    } else {
        Array2::from_shape_fn((n_days, N_FACTORS), |(t, s)| cfg.planted_factor_returns[t][s])
    };
    let residuals: Array2<f64> = Array2::from_shape_fn((n_days, n_stocks), |_| cfg.residual_vol * normal(&mut rng));

    let mut price = Array2::zeros((n_days, n_stocks));
    let mut cap = Array2::zeros((n_days, n_stocks));
    let mut ret = Array2::zeros((n_days, n_stocks));
    for t in 0..n_days {
        // market cap at the start of the day: previous close times shares
        for j in 0..n_stocks {
            cap[[t, j]] = shares_out[j] * last_price[j];
        }
        let x = standardize_exposures(raw.index_axis(Axis(0), t), cap.row(t)).map_err(|e| {
            DataError::InvalidConfig(format!("{}: {e}", days[t]))
        })?;
        let r = x.dot(&factor_returns.row(t)) + residuals.row(t);
        for j in 0..n_stocks {
            if !(r[j] > -0.95) {
                return Err(DataError::InvalidConfig(format!(
                    "stock return {} on {} would wipe out the stock; lower factor_vol or residual_vol",
                    r[j], days[t]
                )));
            }
            ret[[t, j]] = r[j];
            last_price[j] *= 1.0 + r[j];
            price[[t, j]] = last_price[j];
        }
    }
    let panel = StockPanel::new(PanelParts {
        trading_days: days.clone(),
        stocks,
        raw_exposure: raw,
        sector,
        price,
        market_cap: cap,
        stock_return: ret,
    })?;

    // archetypes
    let mut rng = stage_rng(cfg.seed, 3);
    let targets: Vec<Array1<f64>> = if cfg.archetype_exposures.is_empty() {
        (0..cfg.n_archetypes)
            .map(|_| Array1::from_shape_fn(N_FACTORS, |_| rng.random_range(-0.8..0.8)))
            .collect()
    } else {
        cfg.archetype_exposures.iter().map(|v| Array1::from(v.to_vec())).collect()
    };
    let sector_prefs: Vec<Vec<f64>> = if cfg.archetype_sectors.is_empty() {
        let mut order: Vec<usize> = (0..N_SECTORS).collect();
        for i in (1..N_SECTORS).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        (0..cfg.n_archetypes)
            .map(|k| {
                let mut w = vec![0.0; N_SECTORS];
                for (i, share) in [0.5, 0.3, 0.2].into_iter().enumerate() {
                    w[order[(3 * k + i) % N_SECTORS]] = share;
                }
                w
            })
            .collect()
    } else {
        cfg.archetype_sectors
            .iter()
            .map(|w| {
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            })
            .collect()
    };
    for (k, target) in targets.iter().enumerate() {
        let x0 = panel.std_exposure_day(0);
        let counts = steer(x0, panel.sectors(), target.view(), &vec![0.0; N_SECTORS], cfg.lots.max(50));
        let reached = lot_exposure(x0, &counts);
        if let Some((s, gap)) = (0..N_FACTORS)
            .map(|s| (s, (reached[s] - target[s]).abs()))
            .find(|&(_, g)| g > FEASIBILITY_TOLERANCE)
        {
            return Err(DataError::InfeasibleArchetype { archetype: k, factor: STYLE_FACTORS[s], gap });
        }
    }
    let base_cash: Vec<f64> = (0..cfg.n_archetypes).map(|_| rng.random_range(0.02..0.25)).collect();

    // portfolios
    let width = cfg.n_portfolios.to_string().len().max(4);
    let mut labels = Vec::with_capacity(cfg.n_portfolios);
    let mut portfolios = Vec::with_capacity(cfg.n_portfolios);
    let span_max = cfg.span_max.min(n_days);
    for i in 0..cfg.n_portfolios {
        let mut rng = stage_rng(cfg.seed, 1000 + i as u64);
        // round-robin guarantees every archetype is used
        let k = if i < cfg.n_archetypes { i } else { rng.random_range(0..cfg.n_archetypes) };
        let len = rng.random_range(cfg.span_min..=span_max);
        let start = rng.random_range(0..=n_days - len);
        let target = targets[k].mapv(|v| v + 0.1 * normal(&mut rng));
        let cash_frac = (base_cash[k] + 0.02 * normal(&mut rng)).clamp(0.0, 0.5);
        let id = format!("{:0width$}", i + 1);

        let mut positions = Vec::with_capacity(len);
        let mut value = START_CAPITAL;
        let mut current: Option<DailyPosition> = None;
        for d in 0..len {
            let t = start + d;
            if let Some(pos) = &current {
                value = pos.holdings.iter().map(|&(j, n)| n * panel.price()[[t, j]]).sum::<f64>() + pos.cash;
            }
            if d % cfg.rebalance_every == 0 {
                let counts = steer(panel.std_exposure_day(t), panel.sectors(), target.view(), &sector_prefs[k], cfg.lots);
                let invested = value * (1.0 - cash_frac);
                let lot_value = invested / cfg.lots as f64;
                let holdings: Vec<(usize, f64)> = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(j, &c)| (j, c as f64 * lot_value / panel.price()[[t, j]]))
                    .collect();
                current = Some(DailyPosition { holdings, cash: value * cash_frac });
            }
            positions.push(current.clone().expect("set on the first day"));
        }
        labels.push(PortfolioLabel { id: id.clone(), archetype: k });
        portfolios.push(PortfolioSeries { id, start, positions, derived: None });
    }

    let truth = PlantedTruth {
        seed: cfg.seed,
        factors: STYLE_FACTORS.iter().map(|s| s.to_string()).collect(),
        days,
        factor_returns: factor_returns.outer_iter().map(|r| r.to_vec()).collect(),
        residuals: residuals.outer_iter().map(|r| r.to_vec()).collect(),
        archetype_exposures: targets.iter().map(|t| t.to_vec()).collect(),
        archetype_sectors: sector_prefs,
        labels,
    };
    Ok(SyntheticMarket { panel, portfolios, truth })
}
