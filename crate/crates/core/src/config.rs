//! Flat `key = value` text format shared by simulation and campaign configs.
//!
//! Blank lines and `#` comments are ignored; keys may not repeat.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Entries in file order with their 1-based line numbers.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| ConfigError {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError {
                line,
                message: "empty key".into(),
            });
        }
        if let Some((first, ..)) = out.iter().find(|(_, key, _)| key == k) {
            return Err(ConfigError {
                line,
                message: format!("key `{k}` already set on line {first}"),
            });
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    Ok(out)
}
