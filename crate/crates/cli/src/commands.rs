use std::fmt::Write as _;
use std::path::Path;

use factorscope_core::analytics::{correlation_surface, CorrelationExport, DEFAULT_WINDOW};
use factorscope_core::embedding::{make_batches, save_checkpoint, train_autoencoder_with};
use factorscope_core::factor::estimate_panel_factor_returns;
use factorscope_core::io::{
    fmt_real, load_panel, write_factor_returns, write_json, write_panel, write_portfolios, write_residuals,
    PanelFormat, CORRELATIONS_FILE, FACTOR_RETURNS_FILE, PORTFOLIOS_FILE, RESIDUALS_FILE,
};
use factorscope_core::synthetic::generate_synthetic_market;
use factorscope_core::StockPanel;
use factorscope_service::{Dataset, ServiceConfig};

use crate::run_config::{RunConfig, RUN_CONFIG_FILE};
use crate::CliError;

pub const TRUTH_FILE: &str = "planted-truth.json";
pub const MODEL_FILE: &str = "model.json";
pub const LOSS_FILE: &str = "loss.csv";

fn persist(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    write_json(&out.join(RUN_CONFIG_FILE), cfg)?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.synthetic.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    let out = cfg.out_dir()?;
    let market = generate_synthetic_market(&cfg.synthetic)?;
    write_panel(&market.panel, out, PanelFormat::CsvBundle)?;
    write_portfolios(&out.join(PORTFOLIOS_FILE), &market.portfolios, &market.panel)?;
    write_json(&out.join(TRUTH_FILE), &market.truth)?;
    persist(cfg, out)?;
    tracing::info!(
        stocks = market.panel.n_stocks(),
        days = market.panel.n_days(),
        portfolios = market.portfolios.len(),
        out = %out.display(),
        "wrote synthetic market"
    );
    Ok(())
}

pub(crate) fn load_stock_panel(dir: &Path) -> Result<StockPanel, CliError> {
    let format = PanelFormat::detect(dir)
        .ok_or_else(|| CliError::Invalid(format!("{} holds no panel files", dir.display())))?;
    Ok(load_panel(dir, format)?)
}

/// Inclusive day range selected by `--start`/`--end`, snapped inward.
pub(crate) fn period(cfg: &RunConfig, panel: &StockPanel) -> Result<(usize, usize), CliError> {
    let days = panel.trading_days();
    let start = cfg.start.unwrap_or(days[0]);
    let end = cfg.end.unwrap_or(days[days.len() - 1]);
    panel
        .snap_range(start, end)
        .filter(|_| start <= end)
        .ok_or_else(|| CliError::Invalid(format!("{start}..{end} holds no trading days")))
}

pub fn factors(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.data_dir()?;
    let out = cfg.out_dir()?;
    let panel = load_stock_panel(data)?;
    let (lo, hi) = period(cfg, &panel)?;
    let estimated = estimate_panel_factor_returns(&panel).map_err(factorscope_core::Error::from)?;
    write_factor_returns(&out.join(FACTOR_RETURNS_FILE), &estimated)?;
    write_residuals(&out.join(RESIDUALS_FILE), &estimated, &panel)?;
    let days = panel.trading_days();
    let surface = correlation_surface(&estimated, days[lo], days[hi], DEFAULT_WINDOW)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    write_json(&out.join(CORRELATIONS_FILE), &CorrelationExport::from(&surface))?;
    persist(cfg, out)?;
    tracing::info!(days = estimated.days.len(), out = %out.display(), "wrote factor returns and correlations");
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.data_dir()?;
    let out = cfg.out_dir()?;
    let dataset = Dataset::load(data)?;
    let sources = dataset.sources();
    let set = make_batches(&sources, dataset.full_range(), cfg.embed.batch_size).map_err(factorscope_core::Error::from)?;
    let params = train_autoencoder_with(&set.batches, &cfg.embed.train_config(), &mut |r| {
        if r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == r.epochs {
            tracing::info!(epoch = r.epoch, epochs = r.epochs, loss = r.loss, "training");
        }
        true
    })
    .map_err(factorscope_core::Error::from)?;
    save_checkpoint(&out.join(MODEL_FILE), &params).map_err(factorscope_core::Error::from)?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in params.loss_history.iter().enumerate() {
        let _ = writeln!(loss, "{},{}", i + 1, fmt_real(*l));
    }
    write_text(&out.join(LOSS_FILE), &loss)?;
    persist(cfg, out)?;
    tracing::info!(sequences = set.n_sequences(), out = %out.display(), "wrote model checkpoint");
    Ok(())
}

/// Service settings: defaults, then the run config, then the environment,
/// then the port and seed given as flags.
pub fn service_config(
    cfg: &RunConfig,
    seed_flag: Option<u64>,
    env: impl Fn(&str) -> Option<String>,
) -> Result<ServiceConfig, CliError> {
    let mut svc = ServiceConfig { embed: cfg.embed.clone(), ..ServiceConfig::default() };
    if let Some(d) = &cfg.data {
        svc.data_dir = d.clone();
    }
    if let Some(b) = &cfg.bind {
        svc.bind = b.clone();
    }
    svc.checkpoint = cfg.checkpoint.clone();
    svc.cache_dir = cfg.cache_dir.clone();
    svc.apply_env(env)?;
    if let Some(p) = cfg.port {
        svc.port = p;
    }
    if let Some(seed) = seed_flag {
        svc.embed.seed = seed;
    }
    Ok(svc)
}

pub fn serve(cfg: &RunConfig, seed_flag: Option<u64>) -> Result<(), CliError> {
    let svc = service_config(cfg, seed_flag, |k| std::env::var(k).ok())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("tokio runtime"), e))?;
    runtime.block_on(factorscope_service::serve(svc))?;
    Ok(())
}
