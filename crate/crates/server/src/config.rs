use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use ideator_core::{BackendConfig, GenerationSettings};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LISTEN_ADDRESS: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_INFLIGHT: usize = 4;

/// Service configuration, usually read from a TOML file.
///
/// ```toml
/// listen_address = "127.0.0.1:8080"
/// sessions_dir = "sessions"
/// max_inflight_llm_calls = 4
///
/// [backend]
/// kind = "mock"
/// seed = 42
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiConfig {
    #[serde(default = "default_listen")]
    pub listen_address: String,
    /// When set, every endpoint except health requires a matching `x-api-key`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub sessions_dir: PathBuf,
    #[serde(default = "default_inflight")]
    pub max_inflight_llm_calls: usize,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub generation: GenerationSettings,
    /// Registry definition file; the built-in registry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_path: Option<PathBuf>,
}

fn default_listen() -> String {
    DEFAULT_LISTEN_ADDRESS.to_owned()
}

fn default_inflight() -> usize {
    DEFAULT_MAX_INFLIGHT
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl ApiConfig {
    pub fn new(sessions_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen_address: default_listen(),
            api_key: None,
            sessions_dir: sessions_dir.into(),
            max_inflight_llm_calls: DEFAULT_MAX_INFLIGHT,
            backend: BackendConfig::default(),
            generation: GenerationSettings::default(),
            registry_path: None,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        // Relative paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        if config.sessions_dir.is_relative() {
            config.sessions_dir = base.join(&config.sessions_dir);
        }
        if let Some(reg) = config.registry_path.as_mut().filter(|p| p.is_relative()) {
            *reg = base.join(&*reg);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen_address.parse().map_err(|e| {
            ConfigError::Invalid(format!("listen_address {:?}: {e}", self.listen_address))
        })
    }

    /// Checks everything that can be checked without touching the filesystem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_addr()?;
        if self.max_inflight_llm_calls == 0 {
            return Err(ConfigError::Invalid(
                "max_inflight_llm_calls must be positive".into(),
            ));
        }
        if self.api_key.as_deref().is_some_and(|k| k.trim().is_empty()) {
            return Err(ConfigError::Invalid("api_key is set but empty".into()));
        }
        self.backend
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
