//! Flat key-value configuration files with [section] headers and `#`
//! comments; every experiment run is fully determined by one such file plus
//! the seed and rank count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<(String, String), String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ConfigError(format!(
                        "line {}: malformed section header `{raw}`",
                        lineno + 1
                    )));
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            entries.insert(
                (section.clone(), key.trim().to_string()),
                value.trim().to_string(),
            );
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|s| s.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| ConfigError(format!("missing [{section}] {key}")))
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(section, key) {
            Some(s) => s
                .parse()
                .map_err(|_| ConfigError(format!("[{section}] {key}: bad number `{s}`"))),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(section, key) {
            Some(s) => s
                .parse()
                .map_err(|_| ConfigError(format!("[{section}] {key}: bad integer `{s}`"))),
            None => Ok(default),
        }
    }

    pub fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.get(section, key).unwrap_or(default)
    }

    pub fn floats(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        let s = self.require(section, key)?;
        s.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| ConfigError(format!("[{section}] {key}: bad number `{t}`")))
            })
            .collect()
    }

    pub fn usizes_or(
        &self,
        section: &str,
        key: &str,
        default: &[usize],
    ) -> Result<Vec<usize>, ConfigError> {
        match self.get(section, key) {
            Some(s) => s
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| ConfigError(format!("[{section}] {key}: bad integer `{t}`")))
                })
                .collect(),
            None => Ok(default.to_vec()),
        }
    }
}
