use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use tension_core::annotation::DEFAULT_AL_BATCH;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}: {message}")]
    Env { var: &'static str, message: String },
}

/// Settings read from an optional TOML file, then overridden by the
/// `TENSION_*` environment variables.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub store: PathBuf,
    /// Endpoint of the external embedding service, when one is used.
    pub embedding_url: Option<String>,
    /// Browser origins allowed by CORS. Empty disables CORS headers.
    pub cors_origins: Vec<String>,
    pub al_batch_size: usize,
    /// Seed for the held-out split and for retraining after a round.
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            store: PathBuf::from("store"),
            embedding_url: None,
            cors_origins: Vec::new(),
            al_batch_size: DEFAULT_AL_BATCH,
            seed: 0,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` if given, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|var| std::env::var(var).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("TENSION_PORT") {
            self.port = v.trim().parse().map_err(|e| ConfigError::Env {
                var: "TENSION_PORT",
                message: format!("{e}"),
            })?;
        }
        if let Some(v) = get("TENSION_BIND") {
            self.bind = v.trim().parse().map_err(|e| ConfigError::Env {
                var: "TENSION_BIND",
                message: format!("{e}"),
            })?;
        }
        if let Some(v) = get("TENSION_STORE") {
            self.store = PathBuf::from(v);
        }
        if let Some(v) = get("TENSION_EMBEDDING_URL") {
            self.embedding_url = (!v.is_empty()).then_some(v);
        }
        if let Some(v) = get("TENSION_CORS_ORIGINS") {
            self.cors_origins = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}
