//! Flat `key = value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Keys may be namespaced with dots (`train.epochs = 5`). Later
//! assignments of the same key override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), (value.trim().to_string(), idx + 1));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Keys with the line they were defined on.
    pub fn keys(&self) -> impl Iterator<Item = (&String, usize)> {
        self.entries.iter().map(|(k, (_, line))| (k, *line))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (raw, line) = self.entries.get(key).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing key `{key}`"),
        })?;
        raw.parse().map_err(|e: T::Err| Error::Parse {
            line: *line,
            message: format!("invalid value `{raw}` for `{key}`: {e}"),
        })
    }

    /// Like [`KeyValues::parse`], but absent keys yield `None`.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.entries.contains_key(key) {
            self.parse(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Comma-separated list value.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((raw, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|item| {
                item.trim().parse().map_err(|e: T::Err| Error::Parse {
                    line: *line,
                    message: format!("invalid list item `{item}` for `{key}`: {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv =
            KeyValues::parse_str("# market\nn_days = 10\n\nepsilon=0.1\nn_days = 12\n").unwrap();
        assert_eq!(kv.parse::<usize>("n_days").unwrap(), 12);
        assert_eq!(kv.parse::<f64>("epsilon").unwrap(), 0.1);
        assert_eq!(kv.parse_opt::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn reports_bad_lines() {
        let err = KeyValues::parse_str("a = 1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let kv = KeyValues::parse_str("x = abc").unwrap();
        assert!(matches!(
            kv.parse::<f64>("x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn lists() {
        let kv = KeyValues::parse_str("grid = 0.01, 0.025,0.1").unwrap();
        assert_eq!(
            kv.parse_list::<f64>("grid").unwrap().unwrap(),
            vec![0.01, 0.025, 0.1]
        );
    }
}
