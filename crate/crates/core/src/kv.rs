//! Plain-text `key = value` files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Keys
//! may be dotted (`model.hidden`) to group related settings. Duplicate keys
//! are rejected. Consumers pull keys out with the `take_*` methods and then
//! call [`KvMap::finish`], which fails on anything left over so that typos
//! never pass silently.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvMap {
    entries: BTreeMap<String, Entry>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(Error::parse(line, format!("invalid key `{key}`")));
            }
            let entry = Entry { value: value.trim().to_string(), line };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::parse(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
        }
        Ok(Self { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), Entry { value: value.into(), line: 0 });
    }

    pub fn take_str(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(entry) => {
                entry.value.parse::<T>().map(Some).map_err(|e| Error::parse(entry.line, format!("`{key}`: {e}")))
            }
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_required<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?.ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(None);
        };
        entry
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| item.parse::<T>().map_err(|e| Error::parse(entry.line, format!("`{key}`: `{item}`: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, entry)) => Err(Error::parse(entry.line, format!("unknown key `{key}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let mut kv = KvMap::parse("# header\nmodel.hidden = 32 # units\n\n  seed=7\n").unwrap();
        assert_eq!(kv.take::<usize>("model.hidden").unwrap(), Some(32));
        assert_eq!(kv.take::<u64>("seed").unwrap(), Some(7));
        kv.finish().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut kv = KvMap::parse("a = 1\nb = 2\n").unwrap();
        kv.take::<u32>("a").unwrap();
        let err = kv.finish().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        assert!(matches!(KvMap::parse("a=1\na=2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(KvMap::parse("just words"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(KvMap::parse("bad key = 1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn lists_and_bad_values() {
        let mut kv = KvMap::parse("xs = 0.1, 1 ,inf\nn = x\n").unwrap();
        assert_eq!(kv.take_list::<f64>("xs").unwrap().unwrap(), vec![0.1, 1.0, f64::INFINITY]);
        assert!(kv.take::<u32>("n").is_err());
        assert!(kv.take_required::<u32>("missing").is_err());
    }
}
