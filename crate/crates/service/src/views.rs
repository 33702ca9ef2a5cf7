//! Response bodies, built as pure functions of the dataset snapshot.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use factorscope_core::analytics::{correlation_surface, cumulative_factor_returns, DatedValue, DEFAULT_WINDOW};
use factorscope_core::embedding::{EmbeddingResult, ExcludedSequence};
use factorscope_core::{BenchmarkKind, N_FACTORS, N_SECTORS, SECTOR_NAMES, STYLE_FACTORS};
use serde::Serialize;

use crate::dataset::{overlap, period_return, portfolio_return_on, Dataset};
use crate::ApiError;

/// Number of sectors shown individually in the sector bands.
pub const TOP_SECTORS: usize = 5;
pub const HOLDING_GROUPS: usize = 5;

/// Requested and trading-day-snapped period bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodEcho {
    pub requested_start: Option<NaiveDate>,
    pub requested_end: Option<NaiveDate>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub snapped: bool,
    #[serde(skip)]
    pub lo: usize,
    #[serde(skip)]
    pub hi: usize,
}

/// Snaps `[start, end]` inward to trading days and checks it spans `min_days`.
pub fn resolve_period(
    ds: &Dataset,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
    min_days: usize,
) -> Result<PeriodEcho, ApiError> {
    let days = ds.days();
    let s = start.unwrap_or(days[0]);
    let e = end.unwrap_or(days[days.len() - 1]);
    if e < s {
        return Err(ApiError::bad_request("invalid-period", format!("end {e} is before start {s}")));
    }
    let lo = days.partition_point(|d| *d < s);
    let hi = days.partition_point(|d| *d <= e);
    if hi <= lo || hi - lo < min_days {
        return Err(ApiError::bad_request(
            "invalid-period",
            format!("{s}..{e} holds {} trading days, need at least {min_days}", hi.saturating_sub(lo)),
        ));
    }
    let hi = hi - 1;
    Ok(PeriodEcho {
        requested_start: start,
        requested_end: end,
        start: days[lo],
        end: days[hi],
        snapped: days[lo] != s || days[hi] != e,
        lo,
        hi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub cumulative_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelinePoint {
    pub date: NaiveDate,
    pub market_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClustersBody {
    pub period: PeriodEcho,
    pub points: Vec<ClusterPoint>,
    pub benchmarks: Vec<ClusterPoint>,
    /// Daily CSI300 return over the whole dataset, for the brushing timeline.
    pub timeline: Vec<TimelinePoint>,
    pub excluded: Vec<ExcludedSequence>,
    pub tsne_kl: f64,
    pub seed: u64,
}

pub fn clusters_body(ds: &Dataset, period: PeriodEcho, result: &EmbeddingResult) -> ClustersBody {
    let (lo, hi) = (period.lo, period.hi);
    let mut points = Vec::new();
    let mut benchmarks = Vec::new();
    for (i, id) in result.ids.iter().enumerate() {
        let [x, y] = result.coords[i];
        if result.frozen[i] {
            let b = ds.benchmarks.iter().find(|b| b.kind.name() == id).expect("benchmark ids come from the dataset");
            let cumulative_return = period_return(|t| b.daily_returns[t], lo, hi);
            benchmarks.push(ClusterPoint { id: id.clone(), x, y, cumulative_return });
        } else {
            let p = ds.portfolio(id).expect("embedded ids come from the dataset");
            let (a, b) = overlap(p.start, p.last(), lo, hi).expect("embedded portfolios overlap the period");
            let cumulative_return = period_return(|t| portfolio_return_on(p, t), a, b);
            points.push(ClusterPoint { id: id.clone(), x, y, cumulative_return });
        }
    }
    let market = ds.benchmarks.iter().find(|b| b.kind == BenchmarkKind::Csi300).expect("CSI300 is always built");
    let timeline = ds.days()[1..]
        .iter()
        .zip(&market.daily_returns[1..])
        .map(|(&date, &market_return)| TimelinePoint { date, market_return })
        .collect();
    ClustersBody {
        period,
        points,
        benchmarks,
        timeline,
        excluded: result.excluded.clone(),
        tsne_kl: result.tsne_kl,
        seed: result.seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSeries {
    pub factor: &'static str,
    pub series: Vec<DatedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationsBody {
    pub period: PeriodEcho,
    pub factors: Vec<&'static str>,
    pub window: usize,
    pub period_matrix: Vec<Vec<Option<f64>>>,
    /// Keyed `"j,k"` by factor index with `j < k`; null where the window is undefined.
    pub rolling: BTreeMap<String, Vec<DatedValue>>,
    /// Rebased to zero on the first day of the period.
    pub cumulative_factor_returns: Vec<FactorSeries>,
}

pub fn correlations_body(ds: &Dataset, period: PeriodEcho) -> Result<CorrelationsBody, ApiError> {
    let surface = correlation_surface(&ds.factors, period.start, period.end, DEFAULT_WINDOW)
        .map_err(|e| ApiError::bad_request("invalid-period", e.to_string()))?;
    let (days, cumulative) = cumulative_factor_returns(&ds.factors, period.start, period.end)
        .map_err(|e| ApiError::bad_request("invalid-period", e.to_string()))?;
    let export = factorscope_core::analytics::CorrelationExport::from(&surface);
    let cumulative_factor_returns = cumulative
        .into_iter()
        .enumerate()
        .map(|(s, series)| FactorSeries {
            factor: STYLE_FACTORS[s],
            series: days.iter().zip(series).map(|(&date, v)| DatedValue { date, value: Some(v) }).collect(),
        })
        .collect();
    Ok(CorrelationsBody {
        period,
        factors: STYLE_FACTORS.to_vec(),
        window: export.window,
        period_matrix: export.period,
        rolling: export.rolling,
        cumulative_factor_returns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignatureDay {
    pub date: NaiveDate,
    pub exposures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandDay {
    pub date: NaiveDate,
    /// Aligned with `sector_bands`; sums to one.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverviewBody {
    pub id: String,
    pub period: PeriodEcho,
    /// Days the portfolio is alive inside the period.
    pub overlap: DateRange,
    pub factors: Vec<&'static str>,
    pub signature: Vec<SignatureDay>,
    /// `cash`, the five heaviest sectors over the overlap, then `other`.
    pub sector_bands: Vec<String>,
    pub sectors: Vec<BandDay>,
    pub cumulative_return: Vec<DatedValue>,
}

/// Sector indices ordered by average weight over the rows, heaviest first.
pub fn rank_sectors(records: &ndarray::Array2<f64>, rows: std::ops::RangeInclusive<usize>) -> Vec<usize> {
    let n = (rows.end() + 1 - rows.start()) as f64;
    let avg: Vec<f64> = (0..N_SECTORS)
        .map(|k| rows.clone().map(|r| records[[r, N_FACTORS + k]]).sum::<f64>() / n)
        .collect();
    let mut order: Vec<usize> = (0..N_SECTORS).collect();
    order.sort_by(|&a, &b| avg[b].total_cmp(&avg[a]).then(a.cmp(&b)));
    order
}

pub fn overview_body(ds: &Dataset, id: &str, period: PeriodEcho) -> Result<OverviewBody, ApiError> {
    let p = ds.portfolio(id).ok_or_else(|| ApiError::not_found("unknown-portfolio", format!("no portfolio {id}")))?;
    let (a, b) = overlap(p.start, p.last(), period.lo, period.hi).ok_or_else(|| {
        ApiError::bad_request("no-overlap", format!("portfolio {id} is not alive between {} and {}", period.start, period.end))
    })?;
    let records = p.records().expect("portfolio is derived");
    let (ra, rb) = (a - p.start, b - p.start);
    let days = ds.days();
    let top: Vec<usize> = rank_sectors(records, ra..=rb).into_iter().take(TOP_SECTORS).collect();
    let cash_col = N_FACTORS + N_SECTORS;

    let mut sector_bands = vec!["cash".to_string()];
    sector_bands.extend(top.iter().map(|&k| SECTOR_NAMES[k].to_string()));
    sector_bands.push("other".into());

    let mut signature = Vec::new();
    let mut sectors = Vec::new();
    let mut cumulative_return = Vec::new();
    let mut growth = 1.0;
    for r in ra..=rb {
        let date = days[p.start + r];
        let row = records.row(r);
        signature.push(SignatureDay { date, exposures: row.slice(ndarray::s![..N_FACTORS]).to_vec() });
        let mut weights = vec![row[cash_col]];
        weights.extend(top.iter().map(|&k| row[N_FACTORS + k]));
        let rest: f64 = (0..N_SECTORS).filter(|k| !top.contains(k)).map(|k| row[N_FACTORS + k]).sum();
        weights.push(rest);
        sectors.push(BandDay { date, weights });
        if r > ra {
            growth *= 1.0 + portfolio_return_on(p, p.start + r);
        }
        cumulative_return.push(DatedValue { date, value: Some(growth - 1.0) });
    }
    Ok(OverviewBody {
        id: id.to_string(),
        period,
        overlap: DateRange { start: days[a], end: days[b] },
        factors: STYLE_FACTORS.to_vec(),
        signature,
        sector_bands,
        sectors,
        cumulative_return,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DurationClass {
    #[serde(rename = ">30%")]
    Long,
    #[serde(rename = "10-30%")]
    Medium,
    #[serde(rename = "<10%")]
    Short,
}

impl DurationClass {
    /// Class of a stock held for `fraction` of the portfolio's lifespan.
    pub fn of(fraction: f64) -> Self {
        if fraction > 0.3 {
            DurationClass::Long
        } else if fraction >= 0.1 {
            DurationClass::Medium
        } else {
            DurationClass::Short
        }
    }
}

/// Group of a weight among five equal ranges of `[0, w_max]`.
pub fn holding_group(weight: f64, w_max: f64) -> usize {
    if !(w_max > 0.0) {
        return 0;
    }
    ((weight * HOLDING_GROUPS as f64 / w_max).floor() as usize).min(HOLDING_GROUPS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeldStock {
    pub stock_id: String,
    pub weight: f64,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldingDay {
    pub date: NaiveDate,
    pub holdings: Vec<HeldStock>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupsMeta {
    pub count: usize,
    pub w_max: f64,
    /// Upper edges of groups 0 to 3.
    pub boundaries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Legend {
    #[serde(rename = ">30%")]
    pub long: usize,
    #[serde(rename = "10-30%")]
    pub medium: usize,
    #[serde(rename = "<10%")]
    pub short: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StockDuration {
    pub stock_id: String,
    pub held_days: usize,
    pub fraction: f64,
    pub class: DurationClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldingsBody {
    pub id: String,
    pub lifespan: DateRange,
    pub lifespan_days: usize,
    pub groups_meta: GroupsMeta,
    pub legend: Legend,
    pub stocks: Vec<StockDuration>,
    pub days: Vec<HoldingDay>,
}

pub fn holdings_body(ds: &Dataset, id: &str) -> Result<HoldingsBody, ApiError> {
    let p = ds.portfolio(id).ok_or_else(|| ApiError::not_found("unknown-portfolio", format!("no portfolio {id}")))?;
    let panel = &ds.panel;
    let days = ds.days();
    let mut weights: Vec<Vec<(usize, f64)>> = Vec::with_capacity(p.len());
    for (i, pos) in p.positions.iter().enumerate() {
        let prices = panel.price().row(p.start + i);
        let values: Vec<(usize, f64)> =
            pos.holdings.iter().filter(|h| h.1 > 0.0).map(|&(j, n)| (j, n * prices[j])).collect();
        let total = values.iter().map(|v| v.1).sum::<f64>() + pos.cash;
        weights.push(values.into_iter().map(|(j, v)| (j, if total > 0.0 { v / total } else { 0.0 })).collect());
    }
    let w_max = weights.iter().flatten().map(|w| w.1).fold(0.0, f64::max);
    let mut held: BTreeMap<usize, usize> = BTreeMap::new();
    for day in &weights {
        for &(j, _) in day {
            *held.entry(j).or_default() += 1;
        }
    }
    let life = p.len();
    let stocks: Vec<StockDuration> = held
        .iter()
        .map(|(&j, &n)| {
            let fraction = n as f64 / life as f64;
            StockDuration { stock_id: panel.stocks()[j].clone(), held_days: n, fraction, class: DurationClass::of(fraction) }
        })
        .collect();
    let count = |c: DurationClass| stocks.iter().filter(|s| s.class == c).count();
    let legend = Legend { long: count(DurationClass::Long), medium: count(DurationClass::Medium), short: count(DurationClass::Short) };
    let out_days = weights
        .iter()
        .enumerate()
        .map(|(i, day)| HoldingDay {
            date: days[p.start + i],
            holdings: day
                .iter()
                .map(|&(j, w)| HeldStock { stock_id: panel.stocks()[j].clone(), weight: w, group: holding_group(w, w_max) })
                .collect(),
        })
        .collect();
    Ok(HoldingsBody {
        id: id.to_string(),
        lifespan: DateRange { start: days[p.start], end: days[p.last()] },
        lifespan_days: life,
        groups_meta: GroupsMeta {
            count: HOLDING_GROUPS,
            w_max,
            boundaries: (1..HOLDING_GROUPS).map(|k| w_max * k as f64 / HOLDING_GROUPS as f64).collect(),
        },
        legend,
        stocks,
        days: out_days,
    })
}
