use std::net::SocketAddr;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use teachnow_core::CourseConfig;

use crate::auth::Principal;

/// `serve` configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default)]
    pub addr: Option<SocketAddr>,
    /// Period of the background timer sweep.
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    #[serde(default)]
    pub course: CourseConfig,
    #[serde(default)]
    pub principals: Vec<TokenEntry>,
}

fn default_tick_ms() -> u64 {
    250
}

#[derive(Debug, Clone, Deserialize)]
pub struct TokenEntry {
    pub token: String,
    #[serde(flatten)]
    pub principal: Principal,
}

impl ServeConfig {
    pub fn from_toml_str(s: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.course.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
