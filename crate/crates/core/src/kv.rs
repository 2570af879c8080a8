//! Flat `key = value` text files: UTF-8, one entry per line, `#` starts a
//! comment, blank lines ignored.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate {
        line: usize,
        first: usize,
        key: String,
    },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required key(s): {}", .0.join(", "))]
    Missing(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub value: String,
}

/// Parsed key-value file, keys in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, Entry>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(KvError::Malformed { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(KvError::Malformed { line });
            }
            if let Some(prev) = entries.get(key) {
                return Err(KvError::Duplicate {
                    line,
                    first: prev.line,
                    key: key.to_string(),
                });
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        Ok(KvFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: &str, value: String) {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        self.entries.insert(key.to_string(), Entry { line, value });
    }

    /// Rejects any key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), KvError> {
        match self
            .entries
            .iter()
            .find(|(k, _)| !allowed.contains(&k.as_str()))
        {
            Some((key, e)) => Err(KvError::UnknownKey {
                line: e.line,
                key: key.clone(),
            }),
            None => Ok(()),
        }
    }

    /// Parses the value under `key` with `FromStr`; `None` if absent.
    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|e| {
                e.value.parse::<T>().map_err(|err| KvError::InvalidValue {
                    line: e.line,
                    key: key.to_string(),
                    reason: err.to_string(),
                })
            })
            .transpose()
    }

    pub fn invalid(&self, key: &str, reason: impl Into<String>) -> KvError {
        KvError::InvalidValue {
            line: self.get(key).map_or(0, |e| e.line),
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KvFile::parse("# header\n f = -x^3 - y  # drift\n\ntau=0.01\n").unwrap();
        assert_eq!(kv.get("f").unwrap().value, "-x^3 - y");
        assert_eq!(kv.get("f").unwrap().line, 2);
        assert_eq!(kv.parsed::<f64>("tau").unwrap(), Some(0.01));
        assert_eq!(kv.parsed::<f64>("K").unwrap(), None);
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(
            KvFile::parse("a = 1\nnonsense\n").unwrap_err(),
            KvError::Malformed { line: 2 }
        );
        assert!(matches!(
            KvFile::parse("a = 1\na = 2").unwrap_err(),
            KvError::Duplicate {
                line: 2,
                first: 1,
                ..
            }
        ));
        let kv = KvFile::parse("a = 1\nb = x").unwrap();
        assert!(matches!(
            kv.check_keys(&["a"]).unwrap_err(),
            KvError::UnknownKey { line: 2, .. }
        ));
        assert!(matches!(
            kv.parsed::<f64>("b").unwrap_err(),
            KvError::InvalidValue { line: 2, .. }
        ));
    }
}
