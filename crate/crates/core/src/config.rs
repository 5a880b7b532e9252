//! Plain `key = value` configuration text.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Later occurrences of a key override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some("") => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad list item `{s}` for `{key}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Rejects keys that no consumer recognizes.
    pub fn check_known(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        match self.keys().find(|k| !known(k)) {
            Some(k) => Err(Error::Config(format!("unknown configuration key `{k}`"))),
            None => Ok(()),
        }
    }
}

pub(crate) fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
