//! Plain `key=value` run records.
//!
//! Keys are long flag names without the dashes (`grid=2x2`, `seed=7`);
//! underscores and dashes are interchangeable. Blank lines and lines
//! starting with `#` are ignored. A boolean flag takes `true` or `false`.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: expected true or false, got {value:?}")]
    NotBoolean { key: String, value: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Entries in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub entries: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim().replace('_', "-");
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: raw.to_string(),
                });
            }
            if entries.iter().any(|(e, _)| *e == key) {
                return Err(ConfigError::Duplicate { line: k + 1, key });
            }
            entries.push((key, value.trim().to_string()));
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Parses a boolean config value.
pub fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::NotBoolean {
            key: key.to_string(),
            value: value.to_string(),
        }),
    }
}
