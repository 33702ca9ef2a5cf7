use std::path::{Path, PathBuf};

use factorscope_core::embedding::EmbedConfig;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PORT: &str = "FACTORSCOPE_PORT";
pub const ENV_DATA_DIR: &str = "FACTORSCOPE_DATA_DIR";
pub const ENV_CACHE_DIR: &str = "FACTORSCOPE_CACHE_DIR";
pub const ENV_SEED: &str = "FACTORSCOPE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Trained models are persisted here and reused on restart.
    pub cache_dir: Option<PathBuf>,
    /// Pretrained model used for every non-retraining request.
    pub checkpoint: Option<PathBuf>,
    pub embed: EmbedConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            cache_dir: None,
            checkpoint: None,
            embed: EmbedConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads an optional TOML file, then applies environment overrides.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        cfg.apply_env(env)?;
        Ok(cfg)
    }

    /// Overrides port, data dir, cache dir and seed from the environment.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(v) = env(ENV_PORT) {
            self.port = v.parse().map_err(|_| ServiceError::Config(format!("{ENV_PORT}={v} is not a port")))?;
        }
        if let Some(v) = env(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = env(ENV_CACHE_DIR) {
            self.cache_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = env(ENV_SEED) {
            self.embed.seed = v.parse().map_err(|_| ServiceError::Config(format!("{ENV_SEED}={v} is not an integer")))?;
        }
        Ok(())
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ServiceError> {
        Self::load(path, |k| std::env::var(k).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.toml");
        std::fs::write(&path, "port = 9000\ndata_dir = \"/srv/data\"\n[embed]\nepochs = 12\nperplexity = 5.0\n").unwrap();
        let cfg = ServiceConfig::load(Some(&path), |_| None).unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.embed.epochs, 12);
        assert_eq!(cfg.embed.lr, 1e-3);

        let cfg = ServiceConfig::load(Some(&path), |k| match k {
            ENV_PORT => Some("9100".into()),
            ENV_SEED => Some("42".into()),
            ENV_CACHE_DIR => Some("/tmp/c".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.port, 9100);
        assert_eq!(cfg.embed.seed, 42);
        assert_eq!(cfg.cache_dir, Some(PathBuf::from("/tmp/c")));
        assert_eq!(cfg.data_dir, PathBuf::from("/srv/data"));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(ServiceConfig::load(None, |k| (k == ENV_PORT).then(|| "http".to_string())).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.toml");
        std::fs::write(&path, "prot = 1\n").unwrap();
        assert!(ServiceConfig::load(Some(&path), |_| None).is_err());
    }
}
