//! Flat `key=value` text: one pair per line, `#` starts a comment.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected key=value, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, KvError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| KvError::Syntax { line: i + 1, text: raw.to_string() })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(KvError::Duplicate { line: i + 1, key: key.to_string() });
        }
        out.push(Entry { line: i + 1, key: key.to_string(), value: value.to_string() });
    }
    Ok(out)
}

pub fn value<T: FromStr>(key: &str, value: &str) -> Result<T, KvError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| KvError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}
