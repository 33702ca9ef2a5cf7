use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use factorscope_core::embedding::EmbedConfig;
use factorscope_core::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};

use crate::cli::{Command, EmbedArgs};
use crate::CliError;

pub const RUN_CONFIG_FILE: &str = "run-config.json";

/// Everything a command run depends on; persisted next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub synthetic: SyntheticConfig,
    pub embed: EmbedConfig,
    pub top: usize,
    pub bind: Option<String>,
    pub port: Option<u16>,
    pub checkpoint: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            data: None,
            out: None,
            start: None,
            end: None,
            synthetic: SyntheticConfig::default(),
            embed: EmbedConfig::default(),
            top: 10,
            bind: None,
            port: None,
            checkpoint: None,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    /// The config file named on the command line, overridden by flags.
    pub fn resolve(command: &Command) -> Result<Self, CliError> {
        let common = command.common();
        let mut cfg = match &common.config {
            Some(path) => Self::read(path)?,
            None => Self::default(),
        };
        cfg.command = command.name().to_string();
        if common.data.is_some() {
            cfg.data = common.data.clone();
        }
        if common.out.is_some() {
            cfg.out = common.out.clone();
        }
        if let Some(seed) = common.seed {
            cfg.synthetic.seed = seed;
            cfg.embed.seed = seed;
        }
        cfg.start = common.start.or(cfg.start);
        cfg.end = common.end.or(cfg.end);
        match command {
            Command::Train(a) => cfg.apply_embed(&a.embed),
            Command::Serve(a) => {
                cfg.apply_embed(&a.embed);
                cfg.bind = a.bind.clone().or(cfg.bind);
                cfg.port = a.port.or(cfg.port);
                cfg.checkpoint = a.checkpoint.clone().or(cfg.checkpoint);
                cfg.cache_dir = a.cache_dir.clone().or(cfg.cache_dir);
            }
            Command::Report(a) => cfg.top = a.top.unwrap_or(cfg.top),
            Command::Synth(_) | Command::Factors(_) => {}
        }
        Ok(cfg)
    }

    fn apply_embed(&mut self, a: &EmbedArgs) {
        let e = &mut self.embed;
        e.epochs = a.epochs.unwrap_or(e.epochs);
        e.lr = a.lr.unwrap_or(e.lr);
        e.hidden = a.hidden.unwrap_or(e.hidden);
        e.batch_size = a.batch_size.unwrap_or(e.batch_size);
        e.perplexity = a.perplexity.unwrap_or(e.perplexity);
    }

    pub fn data_dir(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::Invalid(format!("{} needs --data", self.command)))
    }

    /// The output directory, created if missing; never the input directory.
    pub fn out_dir(&self) -> Result<&Path, CliError> {
        let out = self.out.as_deref().ok_or_else(|| CliError::Invalid(format!("{} needs --out", self.command)))?;
        if let Some(data) = &self.data {
            if same_dir(data, out) {
                return Err(CliError::Invalid(format!("--out {} must differ from --data", out.display())));
            }
        }
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(out)
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}
