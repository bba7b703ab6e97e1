//! TOML configuration.
//!
//! ```toml
//! [server]
//! port = 8080
//!
//! [store]
//! path = "data/claims.journal"
//!
//! [monitor]
//! interval_ms = 5000
//!
//! [session]
//! ttl_minutes = 30
//!
//! [fixtures]
//! policies = "fixtures/demo.txt"
//! users = "fixtures/users.txt"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use medclaim_core::monitor::MonitorConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_ENV: &str = "MEDCLAIM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection { host: "127.0.0.1".into(), port: 8080 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    /// Journal file; claims stay in memory when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub ttl_minutes: u64,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection { ttl_minutes: 30 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSection {
    pub policies: Option<PathBuf>,
    pub users: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerSection,
    pub store: StoreSection,
    pub monitor: MonitorConfig,
    pub session: SessionSection,
    pub fixtures: FixtureSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut config = Self::from_toml(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.store.path, &mut config.fixtures.policies, &mut config.fixtures.users]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.session.ttl_minutes == 0 {
            return Err(ConfigError::Invalid("session.ttl_minutes must be at least 1".into()));
        }
        let m = &self.monitor;
        if m.interval_ms == 0 || m.timeout_ms == 0 || m.unbind_after == 0 || m.rebind_after == 0 {
            return Err(ConfigError::Invalid("monitor intervals and thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// The config file to use: `MEDCLAIM_CONFIG` when set, else the flag.
pub fn config_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    config_path_from(std::env::var_os(CONFIG_ENV).map(PathBuf::from), flag)
}

fn config_path_from(env: Option<PathBuf>, flag: Option<PathBuf>) -> Option<PathBuf> {
    env.filter(|p| !p.as_os_str().is_empty()).or(flag)
}
