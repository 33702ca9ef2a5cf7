//! On-disk formats.
//!
//! A dataset directory holds either the csv bundle (`panel_exposures.csv`,
//! `panel_market.csv`, `sectors.csv`) or a single `panel.jsonl`, plus
//! `portfolios.jsonl`. Reals are written with 17 significant digits so that
//! anything this module writes reads back bit-identically.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use serde::Deserialize;

use crate::catalog::{N_FACTORS, N_SECTORS, STYLE_FACTORS};
use crate::error::DataError;
use crate::factor::FactorReturnMatrix;
use crate::panel::{PanelParts, StockPanel};
use crate::portfolio::{DailyPosition, PortfolioSeries};

pub const EXPOSURES_FILE: &str = "panel_exposures.csv";
pub const MARKET_FILE: &str = "panel_market.csv";
pub const SECTORS_FILE: &str = "sectors.csv";
pub const PANEL_JSONL_FILE: &str = "panel.jsonl";
pub const PORTFOLIOS_FILE: &str = "portfolios.jsonl";
pub const FACTOR_RETURNS_FILE: &str = "factor_returns.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const CORRELATIONS_FILE: &str = "correlations.json";

const MARKET_COLUMNS: [&str; 3] = ["price", "market_cap", "return"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelFormat {
    CsvBundle,
    JsonLines,
}

impl PanelFormat {
    /// Picks the format whose files are present in `dir`.
    pub fn detect(dir: &Path) -> Option<Self> {
        if dir.join(EXPOSURES_FILE).exists() {
            Some(Self::CsvBundle)
        } else if dir.join(PANEL_JSONL_FILE).exists() {
            Some(Self::JsonLines)
        } else {
            None
        }
    }
}

/// Decimal text with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn write(path: &Path, body: &str) -> Result<(), DataError> {
    fs::write(path, body).map_err(|e| DataError::io(path, e))
}

fn parse_real(file: &str, line: usize, field: &str, text: &str) -> Result<f64, DataError> {
    let v: f64 = text.trim().parse().map_err(|e: std::num::ParseFloatError| DataError::Parse {
        file: file.into(),
        line,
        field: field.into(),
        message: e.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DataError::Parse { file: file.into(), line, field: field.into(), message: "not finite".into() });
    }
    Ok(v)
}

fn parse_date(file: &str, line: usize, text: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").map_err(|e| DataError::Parse {
        file: file.into(),
        line,
        field: "date".into(),
        message: e.to_string(),
    })
}

/// A CSV file with named columns resolved to positions.
struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn open(dir: &Path, file: &str, required: &[&str]) -> Result<Self, DataError> {
        let path = dir.join(file);
        let body = read(&path)?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| DataError::Parse { file: file.into(), line: 1, field: "header".into(), message: e.to_string() })?
            .clone();
        let columns: HashMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim().to_owned(), i)).collect();
        if let Some(missing) = required.iter().find(|c| !columns.contains_key(**c)) {
            return Err(DataError::MissingColumn { file: file.into(), column: (*missing).into() });
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| DataError::Parse {
                file: file.into(),
                line: e.position().map_or(0, |p| p.line() as usize),
                field: "record".into(),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self { file: file.into(), columns, rows })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, column: &str) -> &'r str {
        rec.get(self.columns[column]).unwrap_or("")
    }
}

/// Groups rows into per-day blocks, checking day order and that each day
/// lists every stock exactly once. Returns `(days, row index grid[t][j])`.
fn day_grid(
    table: &Table,
    stock_index: &HashMap<String, usize>,
) -> Result<(Vec<NaiveDate>, Vec<Vec<usize>>), DataError> {
    let n = stock_index.len();
    let mut days: Vec<NaiveDate> = Vec::new();
    let mut grid: Vec<Vec<usize>> = Vec::new();
    for (r, (line, rec)) in table.rows.iter().enumerate() {
        let date = parse_date(&table.file, *line, table.get(rec, "date"))?;
        match days.last() {
            Some(&last) if date < last => {
                return Err(DataError::NonMonotoneDates { file: table.file.clone(), line: *line, date })
            }
            Some(&last) if date == last => {}
            _ => {
                days.push(date);
                grid.push(vec![usize::MAX; n]);
            }
        }
        let id = table.get(rec, "stock_id").trim();
        let j = *stock_index.get(id).ok_or_else(|| DataError::DimensionMismatch {
            file: table.file.clone(),
            line: *line,
            detail: format!("stock `{id}` not listed in {SECTORS_FILE}"),
        })?;
        let slot = &mut grid.last_mut().expect("pushed above")[j];
        if *slot != usize::MAX {
            return Err(DataError::DimensionMismatch {
                file: table.file.clone(),
                line: *line,
                detail: format!("stock `{id}` repeated on {date}"),
            });
        }
        *slot = r;
    }
    for (t, row) in grid.iter().enumerate() {
        if let Some(j) = row.iter().position(|&r| r == usize::MAX) {
            let line = table.rows.last().map_or(1, |(l, _)| *l);
            return Err(DataError::DimensionMismatch {
                file: table.file.clone(),
                line,
                detail: format!("{} has no row for stock #{j} ({} of {n} present)", days[t], row.iter().filter(|&&r| r != usize::MAX).count()),
            });
        }
    }
    Ok((days, grid))
}

fn load_sectors(dir: &Path) -> Result<(Vec<String>, Vec<usize>), DataError> {
    let table = Table::open(dir, SECTORS_FILE, &["stock_id", "sector_index"])?;
    let mut stocks = Vec::new();
    let mut sectors = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in &table.rows {
        let id = table.get(rec, "stock_id").trim().to_owned();
        let raw = table.get(rec, "sector_index").trim();
        let value: i64 = raw.parse().map_err(|_| DataError::Parse {
            file: SECTORS_FILE.into(),
            line: *line,
            field: "sector_index".into(),
            message: format!("`{raw}` is not an integer"),
        })?;
        if !(0..N_SECTORS as i64).contains(&value) {
            return Err(DataError::InvalidSector { file: SECTORS_FILE.into(), line: *line, value });
        }
        if seen.insert(id.clone(), *line).is_some() {
            return Err(DataError::MultiSector { file: SECTORS_FILE.into(), line: *line, stock: id });
        }
        stocks.push(id);
        sectors.push(value as usize);
    }
    Ok((stocks, sectors))
}

fn check_positive(file: &str, line: usize, field: &str, v: f64) -> Result<f64, DataError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(DataError::NonPositivePrice { file: file.into(), line, field: field.into(), value: v })
    }
}

fn load_csv_bundle(dir: &Path) -> Result<StockPanel, DataError> {
    let (stocks, sector) = load_sectors(dir)?;
    let stock_index: HashMap<String, usize> = stocks.iter().cloned().enumerate().map(|(j, s)| (s, j)).collect();

    let mut required = vec!["date", "stock_id"];
    required.extend(STYLE_FACTORS);
    let exp = Table::open(dir, EXPOSURES_FILE, &required)?;
    let (days, grid) = day_grid(&exp, &stock_index)?;
    let (n_days, n_stocks) = (days.len(), stocks.len());
    let mut raw = Array3::zeros((n_days, n_stocks, N_FACTORS));
    for t in 0..n_days {
        for j in 0..n_stocks {
            let (line, rec) = &exp.rows[grid[t][j]];
            for (s, name) in STYLE_FACTORS.iter().enumerate() {
                raw[[t, j, s]] = parse_real(EXPOSURES_FILE, *line, name, exp.get(rec, name))?;
            }
        }
    }

    let mut required = vec!["date", "stock_id"];
    required.extend(MARKET_COLUMNS);
    let mkt = Table::open(dir, MARKET_FILE, &required)?;
    let (mdays, mgrid) = day_grid(&mkt, &stock_index)?;
    if mdays != days {
        let line = mkt.rows.first().map_or(1, |(l, _)| *l);
        return Err(DataError::DimensionMismatch {
            file: MARKET_FILE.into(),
            line,
            detail: format!("{} trading days, {EXPOSURES_FILE} has {}", mdays.len(), days.len()),
        });
    }
    let mut price = Array2::zeros((n_days, n_stocks));
    let mut cap = Array2::zeros((n_days, n_stocks));
    let mut ret = Array2::zeros((n_days, n_stocks));
    for t in 0..n_days {
        for j in 0..n_stocks {
            let (line, rec) = &mkt.rows[mgrid[t][j]];
            let line = *line;
            price[[t, j]] = check_positive(MARKET_FILE, line, "price", parse_real(MARKET_FILE, line, "price", mkt.get(rec, "price"))?)?;
            cap[[t, j]] = check_positive(
                MARKET_FILE,
                line,
                "market_cap",
                parse_real(MARKET_FILE, line, "market_cap", mkt.get(rec, "market_cap"))?,
            )?;
            ret[[t, j]] = parse_real(MARKET_FILE, line, "return", mkt.get(rec, "return"))?;
        }
    }
    StockPanel::new(PanelParts {
        trading_days: days,
        stocks,
        raw_exposure: raw,
        sector,
        price,
        market_cap: cap,
        stock_return: ret,
    })
}

#[derive(Deserialize)]
struct PanelLine {
    date: String,
    stock_id: String,
    sector: i64,
    price: f64,
    market_cap: f64,
    #[serde(rename = "return")]
    ret: f64,
    exposures: BTreeMap<String, f64>,
}

fn load_jsonl_panel(dir: &Path) -> Result<StockPanel, DataError> {
    let file = PANEL_JSONL_FILE;
    let body = read(&dir.join(file))?;
    let mut lines = Vec::new();
    for (i, text) in body.lines().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let rec: PanelLine = serde_json::from_str(text).map_err(|e| DataError::Parse {
            file: file.into(),
            line,
            field: "record".into(),
            message: e.to_string(),
        })?;
        if let Some(missing) = STYLE_FACTORS.iter().find(|f| !rec.exposures.contains_key(**f)) {
            return Err(DataError::MissingColumn { file: file.into(), column: (*missing).into() });
        }
        lines.push((line, rec));
    }
    if lines.is_empty() {
        return Err(DataError::InvalidPanel(format!("{file} is empty")));
    }

    // Universe and sectors come from the first day's block.
    let first_date = lines[0].1.date.clone();
    let mut stocks = Vec::new();
    let mut sector = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, rec) in lines.iter().take_while(|(_, r)| r.date == first_date) {
        if !(0..N_SECTORS as i64).contains(&rec.sector) {
            return Err(DataError::InvalidSector { file: file.into(), line: *line, value: rec.sector });
        }
        if index.insert(rec.stock_id.clone(), stocks.len()).is_some() {
            return Err(DataError::DimensionMismatch {
                file: file.into(),
                line: *line,
                detail: format!("stock `{}` repeated on {first_date}", rec.stock_id),
            });
        }
        stocks.push(rec.stock_id.clone());
        sector.push(rec.sector as usize);
    }
    let n = stocks.len();
    let mut days: Vec<NaiveDate> = Vec::new();
    let mut filled: Vec<Vec<bool>> = Vec::new();
    let mut raw_rows: Vec<Vec<[f64; N_FACTORS]>> = Vec::new();
    let mut mkt_rows: Vec<Vec<[f64; 3]>> = Vec::new();
    for (line, rec) in &lines {
        let line = *line;
        let date = parse_date(file, line, &rec.date)?;
        match days.last() {
            Some(&last) if date < last => return Err(DataError::NonMonotoneDates { file: file.into(), line, date }),
            Some(&last) if date == last => {}
            _ => {
                days.push(date);
                filled.push(vec![false; n]);
                raw_rows.push(vec![[0.0; N_FACTORS]; n]);
                mkt_rows.push(vec![[0.0; 3]; n]);
            }
        }
        let j = *index.get(&rec.stock_id).ok_or_else(|| DataError::DimensionMismatch {
            file: file.into(),
            line,
            detail: format!("stock `{}` absent from the first day", rec.stock_id),
        })?;
        if rec.sector as usize != sector[j] || rec.sector < 0 {
            return Err(DataError::MultiSector { file: file.into(), line, stock: rec.stock_id.clone() });
        }
        let t = days.len() - 1;
        if std::mem::replace(&mut filled[t][j], true) {
            return Err(DataError::DimensionMismatch {
                file: file.into(),
                line,
                detail: format!("stock `{}` repeated on {date}", rec.stock_id),
            });
        }
        for (s, name) in STYLE_FACTORS.iter().enumerate() {
            raw_rows[t][j][s] = rec.exposures[*name];
        }
        mkt_rows[t][j] = [
            check_positive(file, line, "price", rec.price)?,
            check_positive(file, line, "market_cap", rec.market_cap)?,
            rec.ret,
        ];
    }
    if let Some(t) = filled.iter().position(|row| row.iter().any(|f| !f)) {
        return Err(DataError::DimensionMismatch {
            file: file.into(),
            line: lines.last().map_or(1, |(l, _)| *l),
            detail: format!("{} is missing stocks", days[t]),
        });
    }
    let nd = days.len();
    StockPanel::new(PanelParts {
        raw_exposure: Array3::from_shape_fn((nd, n, N_FACTORS), |(t, j, s)| raw_rows[t][j][s]),
        price: Array2::from_shape_fn((nd, n), |(t, j)| mkt_rows[t][j][0]),
        market_cap: Array2::from_shape_fn((nd, n), |(t, j)| mkt_rows[t][j][1]),
        stock_return: Array2::from_shape_fn((nd, n), |(t, j)| mkt_rows[t][j][2]),
        trading_days: days,
        stocks,
        sector,
    })
}

/// Reads and validates a panel from `dir`.
pub fn load_panel(dir: &Path, format: PanelFormat) -> Result<StockPanel, DataError> {
    match format {
        PanelFormat::CsvBundle => load_csv_bundle(dir),
        PanelFormat::JsonLines => load_jsonl_panel(dir),
    }
}

/// Writes `panel` into `dir` in the given format.
pub fn write_panel(panel: &StockPanel, dir: &Path, format: PanelFormat) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let days = panel.trading_days();
    let stocks = panel.stocks();
    match format {
        PanelFormat::CsvBundle => {
            let mut exp = String::from("date,stock_id");
            for f in STYLE_FACTORS {
                exp.push(',');
                exp.push_str(f);
            }
            exp.push('\n');
            let mut mkt = String::from("date,stock_id,price,market_cap,return\n");
            for (t, &day) in days.iter().enumerate() {
                let d = fmt_date(day);
                for (j, id) in stocks.iter().enumerate() {
                    exp.push_str(&d);
                    exp.push(',');
                    exp.push_str(id);
                    for s in 0..N_FACTORS {
                        exp.push(',');
                        exp.push_str(&fmt_real(panel.raw_exposure()[[t, j, s]]));
                    }
                    exp.push('\n');
                    let _ = writeln!(
                        mkt,
                        "{d},{id},{},{},{}",
                        fmt_real(panel.price()[[t, j]]),
                        fmt_real(panel.market_cap()[[t, j]]),
                        fmt_real(panel.stock_return()[[t, j]])
                    );
                }
            }
            let mut sec = String::from("stock_id,sector_index\n");
            for (id, s) in stocks.iter().zip(panel.sectors()) {
                let _ = writeln!(sec, "{id},{s}");
            }
            write(&dir.join(EXPOSURES_FILE), &exp)?;
            write(&dir.join(MARKET_FILE), &mkt)?;
            write(&dir.join(SECTORS_FILE), &sec)
        }
        PanelFormat::JsonLines => {
            let mut out = String::new();
            for (t, &day) in days.iter().enumerate() {
                for (j, id) in stocks.iter().enumerate() {
                    let _ = write!(
                        out,
                        "{{\"date\":\"{}\",\"stock_id\":{},\"sector\":{},\"price\":{},\"market_cap\":{},\"return\":{},\"exposures\":{{",
                        fmt_date(day),
                        serde_json::to_string(id).expect("string serializes"),
                        panel.sectors()[j],
                        fmt_real(panel.price()[[t, j]]),
                        fmt_real(panel.market_cap()[[t, j]]),
                        fmt_real(panel.stock_return()[[t, j]]),
                    );
                    for (s, name) in STYLE_FACTORS.iter().enumerate() {
                        if s > 0 {
                            out.push(',');
                        }
                        let _ = write!(out, "\"{name}\":{}", fmt_real(panel.raw_exposure()[[t, j, s]]));
                    }
                    out.push_str("}}\n");
                }
            }
            write(&dir.join(PANEL_JSONL_FILE), &out)
        }
    }
}

#[derive(Deserialize)]
struct PortfolioLine {
    id: String,
    days: Vec<PortfolioDay>,
}

#[derive(Deserialize)]
struct PortfolioDay {
    date: String,
    holdings: BTreeMap<String, f64>,
    cash: f64,
}

/// Reads `portfolios.jsonl` against `panel`; derived fields stay unset.
pub fn load_portfolios(path: &Path, panel: &StockPanel) -> Result<Vec<PortfolioSeries>, DataError> {
    let file = path.file_name().map_or_else(|| PORTFOLIOS_FILE.to_owned(), |f| f.to_string_lossy().into_owned());
    let body = read(path)?;
    let mut out = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, text) in body.lines().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let rec: PortfolioLine = serde_json::from_str(text).map_err(|e| DataError::Parse {
            file: file.clone(),
            line,
            field: "portfolio".into(),
            message: e.to_string(),
        })?;
        if !ids.insert(rec.id.clone()) {
            return Err(DataError::DuplicatePortfolio(rec.id));
        }
        let mut start = None;
        let mut positions = Vec::with_capacity(rec.days.len());
        for (k, day) in rec.days.iter().enumerate() {
            let date = parse_date(&file, line, &day.date)?;
            let t = panel
                .day_index(date)
                .ok_or_else(|| DataError::DateOutOfRange { portfolio: rec.id.clone(), date })?;
            match start {
                None => start = Some(t),
                Some(s) if t != s + k => {
                    return Err(DataError::NonContiguousSpan { portfolio: rec.id.clone(), date })
                }
                _ => {}
            }
            let mut holdings = day
                .holdings
                .iter()
                .map(|(id, &shares)| {
                    panel
                        .stock_index(id)
                        .map(|j| (j, shares))
                        .ok_or_else(|| DataError::UnknownStock { portfolio: rec.id.clone(), stock: id.clone() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            holdings.sort_by_key(|&(j, _)| j);
            positions.push(DailyPosition { holdings, cash: day.cash });
        }
        let p = PortfolioSeries { id: rec.id, start: start.unwrap_or(0), positions, derived: None };
        p.validate(panel)?;
        out.push(p);
    }
    Ok(out)
}

/// Writes `portfolios.jsonl`; holdings keys follow panel stock order.
pub fn write_portfolios(path: &Path, portfolios: &[PortfolioSeries], panel: &StockPanel) -> Result<(), DataError> {
    let mut out = String::new();
    for p in portfolios {
        let _ = write!(out, "{{\"id\":{},\"days\":[", serde_json::to_string(&p.id).expect("string serializes"));
        for (i, (pos, &day)) in p.positions.iter().zip(p.days(panel)).enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{{\"date\":\"{}\",\"holdings\":{{", fmt_date(day));
            for (k, &(j, shares)) in pos.holdings.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(
                    out,
                    "{}:{}",
                    serde_json::to_string(&panel.stocks()[j]).expect("string serializes"),
                    fmt_real(shares)
                );
            }
            let _ = write!(out, "}},\"cash\":{}}}", fmt_real(pos.cash));
        }
        out.push_str("]}\n");
    }
    write(path, &out)
}

/// Writes `factor_returns.csv` (date plus one column per style factor).
pub fn write_factor_returns(path: &Path, f: &FactorReturnMatrix) -> Result<(), DataError> {
    let mut out = String::from("date");
    for name in STYLE_FACTORS {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, &day) in f.days.iter().enumerate() {
        out.push_str(&fmt_date(day));
        for s in 0..N_FACTORS {
            out.push(',');
            out.push_str(&fmt_real(f.returns[[t, s]]));
        }
        out.push('\n');
    }
    write(path, &out)
}

/// Reads `factor_returns.csv`; residuals and fit statistics are not stored there.
pub fn read_factor_returns(path: &Path) -> Result<FactorReturnMatrix, DataError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let file = path.file_name().map_or(FACTOR_RETURNS_FILE.into(), |f| f.to_string_lossy().into_owned());
    let mut required = vec!["date"];
    required.extend(STYLE_FACTORS);
    let table = Table::open(dir, &file, &required)?;
    let mut days: Vec<NaiveDate> = Vec::with_capacity(table.rows.len());
    let mut returns = Array2::zeros((table.rows.len(), N_FACTORS));
    for (t, (line, rec)) in table.rows.iter().enumerate() {
        let date = parse_date(&file, *line, table.get(rec, "date"))?;
        if days.last().is_some_and(|&d| date <= d) {
            return Err(DataError::NonMonotoneDates { file: file.clone(), line: *line, date });
        }
        days.push(date);
        for (s, name) in STYLE_FACTORS.iter().enumerate() {
            returns[[t, s]] = parse_real(&file, *line, name, table.get(rec, name))?;
        }
    }
    FactorReturnMatrix::from_parts(days, returns).map_err(|e| DataError::InvalidPanel(e.to_string()))
}

/// Writes `residuals.csv` (date, stock_id, value).
pub fn write_residuals(path: &Path, f: &FactorReturnMatrix, panel: &StockPanel) -> Result<(), DataError> {
    let mut out = String::from("date,stock_id,value\n");
    for (t, &day) in f.days.iter().enumerate() {
        let d = fmt_date(day);
        for (j, id) in panel.stocks().iter().enumerate() {
            let _ = writeln!(out, "{d},{id},{}", fmt_real(f.residuals[[t, j]]));
        }
    }
    write(path, &out)
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| DataError::InvalidConfig(e.to_string()))?;
    body.push('\n');
    write(path, &body)
}
