//! UTF-8 `key = value` configuration files with `#` comments.
//!
//! Consumers pull the keys they understand with [`KeyValues::take`] and then
//! call [`KeyValues::finish`], which rejects anything left over.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for `{key}`: {reason}")]
    Value {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key(s): {0}")]
    UnknownKeys(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_owned(),
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_owned(),
                });
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_owned(),
                });
            }
            entries.push(Entry {
                key: key.to_owned(),
                value: value.trim().to_owned(),
                line,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes `key` and parses its value.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(pos) = self.entries.iter().position(|e| e.key == key) else {
            return Ok(None);
        };
        let entry = self.entries.remove(pos);
        entry
            .value
            .parse::<T>()
            .map(Some)
            .map_err(|e| ConfigError::Value {
                line: entry.line,
                key: entry.key.clone(),
                value: entry.value.clone(),
                reason: e.to_string(),
            })
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Errors if any key was not consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<String> = self
            .entries
            .iter()
            .map(|e| format!("`{}` (line {})", e.key, e.line))
            .collect();
        Err(ConfigError::UnknownKeys(keys.join(", ")))
    }
}
