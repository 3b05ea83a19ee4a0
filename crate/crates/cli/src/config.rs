//! Flat `key=value` configuration with command-line overrides.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. A run manifest (JSON) is also accepted, so a previous run can be
//! replayed with `--config run.manifest.json`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Config {
    raw: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

fn parse_line(line: &str, origin: &str) -> Result<Option<(String, String)>, CliError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("{origin}: expected key=value, got `{line}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(CliError::Validation(format!("{origin}: empty key in `{line}`")));
    }
    Ok(Some((k.to_string(), v.to_string())))
}

/// Settings loaded from a file: the key/value pairs and, for manifests, the
/// recorded subcommand and seed.
#[derive(Debug, Default)]
pub struct FileSettings {
    pub values: Vec<(String, String)>,
    pub subcommand: Option<String>,
    pub seed: Option<u64>,
}

pub fn load_file(path: &str) -> Result<FileSettings, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config `{path}`: {e}")))?;
    if text.trim_start().starts_with('{') {
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config `{path}` is not a valid manifest: {e}")))?;
        let values = json
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::Validation(format!("manifest `{path}` has no `config` object")))?
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))
            .collect();
        return Ok(FileSettings {
            values,
            subcommand: json.get("subcommand").and_then(|s| s.as_str()).map(str::to_string),
            seed: json.get("seed").and_then(|s| s.as_u64()),
        });
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(kv) = parse_line(line, &format!("{path}:{}", i + 1))? {
            values.push(kv);
        }
    }
    Ok(FileSettings {
        values,
        ..Default::default()
    })
}

pub fn parse_override(text: &str) -> Result<(String, String), CliError> {
    parse_line(text, "--set")?.ok_or_else(|| CliError::Validation(format!("--set expects key=value, got `{text}`")))
}

impl Config {
    pub fn new(values: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            raw: values.into_iter().collect(),
            resolved: BTreeMap::new(),
        }
    }

    fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        let value = match self.raw.get(key) {
            Some(text) => text
                .parse()
                .map_err(|_| CliError::Validation(format!("invalid value for `{key}`: `{text}`")))?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.get(key, default)?;
        if !v.is_finite() {
            return Err(CliError::Validation(format!("`{key}` must be finite, got {v}")));
        }
        Ok(v)
    }

    /// A strictly positive real, e.g. a time step.
    pub fn positive(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.f64(key, default)?;
        if v <= 0.0 {
            return Err(CliError::Validation(format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn count(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        let v: usize = self.get(key, default)?;
        if v == 0 {
            return Err(CliError::Validation(format!("`{key}` must be at least 1")));
        }
        Ok(v)
    }

    /// A non-negative integer; zero allowed.
    pub fn get_usize(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        self.get(key, default)
    }

    pub fn choice(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String, CliError> {
        let v: String = self.get(key, default.to_string())?;
        if !allowed.contains(&v.as_str()) {
            return Err(CliError::Validation(format!(
                "`{key}` must be one of {}, got `{v}`",
                allowed.join(", ")
            )));
        }
        Ok(v)
    }

    pub fn string(&mut self, key: &str, default: &str) -> Result<String, CliError> {
        self.get(key, default.to_string())
    }

    pub fn optional_string(&mut self, key: &str) -> Option<String> {
        let v = self.raw.get(key).cloned();
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.clone());
        }
        v
    }

    /// Fails on keys that no parameter consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .raw
            .keys()
            .filter(|k| !self.resolved.contains_key(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("unknown config key(s): {}", unknown.join(", "))))
        }
    }

    /// Every parameter with its effective value, defaults included.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}
