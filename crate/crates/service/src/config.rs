use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingMode {
    /// One frequency-heuristic order per rulebase.
    #[default]
    Frequency,
    /// Global optimized order at startup, re-optimized per session on drug changes.
    Optimize,
    /// Orders read from `order_files`.
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub catalog: PathBuf,
    pub rulebases: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub ordering: OrderingMode,
    #[serde(default)]
    pub order_files: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_idle")]
    pub session_idle_secs: u64,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    /// Sessions are written here after every mutation and reloaded at startup.
    #[serde(default)]
    pub snapshot_dir: Option<PathBuf>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_idle() -> u64 {
    1800
}

impl ServiceConfig {
    /// Parses a TOML config; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<ServiceConfig, ServiceError> {
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.catalog);
        cfg.rulebases.values_mut().for_each(fix);
        cfg.order_files.values_mut().for_each(fix);
        if let Some(d) = cfg.snapshot_dir.as_mut() {
            fix(d);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ServiceConfig, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.session_idle_secs == 0 {
            return Err(ServiceError::Config("session_idle_secs must be positive".into()));
        }
        if self.rulebases.is_empty() {
            return Err(ServiceError::Config("no rulebases configured".into()));
        }
        if self.ordering == OrderingMode::File {
            if let Some(id) = self.rulebases.keys().find(|id| !self.order_files.contains_key(*id)) {
                return Err(ServiceError::Config(format!("ordering = \"file\" but rulebase `{id}` has no order file")));
            }
        }
        Ok(())
    }
}
