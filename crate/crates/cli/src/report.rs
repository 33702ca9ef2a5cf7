//! Static period summary: correlation matrix and the best-performing portfolios.

use std::fmt::Write as _;

use chrono::NaiveDate;
use factorscope_core::analytics::period_correlation_matrix;
use factorscope_core::io::fmt_real;
use factorscope_core::STYLE_FACTORS;
use factorscope_service::dataset::{overlap, period_return, portfolio_return_on};
use factorscope_service::Dataset;
use serde::Serialize;

use crate::commands::write_text;
use crate::run_config::{RunConfig, RUN_CONFIG_FILE};
use crate::CliError;

pub const HTML_FILE: &str = "report.html";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const TOP_CSV: &str = "top_portfolios.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub id: String,
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
    pub days: usize,
    pub period_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub matrix: Vec<Vec<Option<f64>>>,
    pub benchmarks: Vec<(&'static str, f64)>,
    pub top: Vec<Ranked>,
    /// Portfolios alive at some point of the period.
    pub active: usize,
}

pub fn build(ds: &Dataset, lo: usize, hi: usize, top: usize) -> Result<Report, CliError> {
    let days = ds.days();
    if hi + 1 - lo < 3 {
        return Err(CliError::Invalid(format!("{}..{} holds {} trading days, need at least 3", days[lo], days[hi], hi + 1 - lo)));
    }
    let matrix = period_correlation_matrix(&ds.factors, days[lo], days[hi]).map_err(|e| CliError::Invalid(e.to_string()))?;
    let benchmarks = ds.benchmarks.iter().map(|b| (b.kind.name(), period_return(|t| b.daily_returns[t], lo, hi))).collect();
    let mut ranked: Vec<Ranked> = ds
        .portfolios
        .iter()
        .filter_map(|p| {
            let (a, b) = overlap(p.start, p.last(), lo, hi)?;
            Some(Ranked {
                id: p.id.clone(),
                first_day: days[a],
                last_day: days[b],
                days: b + 1 - a,
                period_return: period_return(|t| portfolio_return_on(p, t), a, b),
            })
        })
        .collect();
    let active = ranked.len();
    ranked.sort_by(|x, y| y.period_return.total_cmp(&x.period_return).then_with(|| x.id.cmp(&y.id)));
    ranked.truncate(top);
    Ok(Report { start: days[lo], end: days[hi], matrix, benchmarks, top: ranked, active })
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn correlations_csv(r: &Report) -> String {
    let mut out = String::from("factor");
    for f in STYLE_FACTORS {
        let _ = write!(out, ",{f}");
    }
    out.push('\n');
    for (f, row) in STYLE_FACTORS.iter().zip(&r.matrix) {
        out.push_str(f);
        for v in row {
            let _ = write!(out, ",{}", cell(*v));
        }
        out.push('\n');
    }
    out
}

pub fn top_csv(r: &Report) -> String {
    let mut out = String::from("rank,id,first_day,last_day,days,period_return\n");
    for (i, p) in r.top.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{},{}", i + 1, p.id, p.first_day, p.last_day, p.days, fmt_real(p.period_return));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Background of a correlation cell: red for positive, blue for negative.
fn shade(v: Option<f64>) -> String {
    match v {
        None => "#eeeeee".into(),
        Some(v) => {
            let k = (255.0 * (1.0 - v.abs().min(1.0))).round() as u8;
            if v >= 0.0 {
                format!("#ff{k:02x}{k:02x}")
            } else {
                format!("#{k:02x}{k:02x}ff")
            }
        }
    }
}

pub fn html(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>factorscope {} to {}</title>", r.start, r.end);
    out.push_str("<style>body{font-family:sans-serif}table{border-collapse:collapse}td,th{padding:4px 8px;border:1px solid #ccc;text-align:right}</style></head><body>\n");
    let _ = writeln!(out, "<h1>Period {} to {}</h1>", r.start, r.end);
    let _ = writeln!(out, "<p>{} portfolios active in the period.</p>", r.active);
    out.push_str("<h2>Benchmarks</h2>\n<table><tr><th>index</th><th>period return</th></tr>\n");
    for (name, ret) in &r.benchmarks {
        let _ = writeln!(out, "<tr><td>{name}</td><td>{:.4}%</td></tr>", ret * 100.0);
    }
    out.push_str("</table>\n<h2>Factor correlations</h2>\n<table><tr><th></th>");
    for f in STYLE_FACTORS {
        let _ = write!(out, "<th>{f}</th>");
    }
    out.push_str("</tr>\n");
    for (f, row) in STYLE_FACTORS.iter().zip(&r.matrix) {
        let _ = write!(out, "<tr><th>{f}</th>");
        for v in row {
            let text = v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
            let _ = write!(out, "<td style=\"background:{}\">{text}</td>", shade(*v));
        }
        out.push_str("</tr>\n");
    }
    let _ = writeln!(out, "</table>\n<h2>Top {} portfolios by period return</h2>", r.top.len());
    out.push_str("<table><tr><th>rank</th><th>id</th><th>first day</th><th>last day</th><th>days</th><th>return</th></tr>\n");
    for (i, p) in r.top.iter().enumerate() {
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.4}%</td></tr>",
            i + 1,
            escape(&p.id),
            p.first_day,
            p.last_day,
            p.days,
            p.period_return * 100.0
        );
    }
    out.push_str("</table>\n</body></html>\n");
    out
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.data_dir()?;
    let out = cfg.out_dir()?;
    let dataset = Dataset::load(data)?;
    let (lo, hi) = crate::commands::period(cfg, &dataset.panel)?;
    let r = build(&dataset, lo, hi, cfg.top)?;
    write_text(&out.join(HTML_FILE), &html(&r))?;
    write_text(&out.join(CORRELATIONS_CSV), &correlations_csv(&r))?;
    write_text(&out.join(TOP_CSV), &top_csv(&r))?;
    factorscope_core::io::write_json(&out.join(RUN_CONFIG_FILE), cfg)?;
    tracing::info!(start = %r.start, end = %r.end, active = r.active, out = %out.display(), "wrote report");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shades_follow_the_sign() {
        assert_eq!(shade(Some(1.0)), "#ff0000");
        assert_eq!(shade(Some(-1.0)), "#0000ff");
        assert_eq!(shade(Some(0.0)), "#ffffff");
        assert_eq!(shade(None), "#eeeeee");
    }

    #[test]
    fn ids_are_escaped() {
        assert_eq!(escape("<a&b>\""), "&lt;a&amp;b&gt;&quot;");
    }
}
