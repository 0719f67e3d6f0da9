//! Flag resolution: command line > config file > environment > defaults.
//!
//! Config files are JSON objects whose keys mirror the long flag names
//! (kebab-case). `MECHDIS_SEED` is the lowest-precedence seed source.

use mechdis_core::error::{CoreError, Result};
use serde::de::DeserializeOwned;
use serde_json::Value;
use std::path::{Path, PathBuf};

pub struct Resolver {
    file: Value,
}

impl Resolver {
    pub fn load(config: Option<&PathBuf>) -> Result<Self> {
        let file = match config {
            None => Value::Null,
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| CoreError::io(path.display().to_string(), e))?;
                serde_json::from_str(&raw)
                    .map_err(|e| CoreError::format(path.display().to_string(), e.to_string()))?
            }
        };
        Ok(Resolver { file })
    }

    fn file_get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        self.file.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    /// CLI value, else config-file value, else default.
    pub fn get<T: DeserializeOwned>(&self, cli: Option<T>, key: &str, default: T) -> T {
        cli.or_else(|| self.file_get(key)).unwrap_or(default)
    }

    /// Required value: CLI or config file, else a usage error.
    pub fn require<T: DeserializeOwned>(&self, cli: Option<T>, key: &str) -> Result<T> {
        cli.or_else(|| self.file_get(key))
            .ok_or_else(|| CoreError::Contract(format!("missing required option --{key}")))
    }

    /// Seed resolution includes the MECHDIS_SEED environment variable.
    pub fn seed(&self, cli: Option<u64>, default: u64) -> u64 {
        cli.or_else(|| self.file_get("seed"))
            .or_else(|| std::env::var("MECHDIS_SEED").ok().and_then(|s| s.parse().ok()))
            .unwrap_or(default)
    }

    pub fn path(&self, cli: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.require(cli, key)
    }
}

pub fn parse_f64_list(raw: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CoreError::Contract(format!("empty list '{raw}'")));
    }
    items
        .into_iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CoreError::Contract(format!("'{s}' is not a number")))
        })
        .collect()
}

pub fn parse_u64_list(raw: &str) -> Result<Vec<u64>> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CoreError::Contract(format!("empty list '{raw}'")));
    }
    items
        .into_iter()
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| CoreError::Contract(format!("'{s}' is not an integer")))
        })
        .collect()
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CoreError::io(path.display().to_string(), e))
}
