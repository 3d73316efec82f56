use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Flat `key = value` text with `[section]` headers. Keys may repeat; the
/// last occurrence wins for scalar lookups, [`ConfigFile::all`] returns
/// every occurrence in file order. `#` and `;` start comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: Vec<(String, Vec<Entry>)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self, section: &str) -> &[Entry] {
        self.sections
            .iter()
            .find(|(n, _)| n == section)
            .map(|(_, e)| e.as_slice())
            .unwrap_or(&[])
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries(section).iter().rev().find(|e| e.key == key)
    }

    pub fn all<'a>(&'a self, section: &str, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries(section).iter().filter(move |e| e.key == key)
    }

    /// Typed lookup; `Ok(None)` when absent, a parse error naming the line
    /// when present but malformed.
    pub fn parse_value<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(e.line, format!("[{section}] {key}: cannot parse `{}`", e.value))),
        }
    }

    pub fn value_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.parse_value(section, key)?.unwrap_or(default))
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let entry = Entry {
            key: key.into(),
            value: value.into(),
            line: 0,
        };
        match self.sections.iter_mut().find(|(n, _)| n == section) {
            Some((_, entries)) => entries.push(entry),
            None => self.sections.push((section.into(), vec![entry])),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if !name.is_empty() {
                out.push_str(&format!("[{name}]\n"));
            }
            for e in entries {
                out.push_str(&format!("{} = {}\n", e.key, e.value));
            }
        }
        out
    }
}

impl FromStr for ConfigFile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(line, "unterminated section header"))?
                    .trim();
                current = name.to_string();
                if !cfg.sections.iter().any(|(n, _)| n == name) {
                    cfg.sections.push((current.clone(), Vec::new()));
                }
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected `key = value`, found `{content}`")))?;
            let entry = Entry {
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                line,
            };
            match cfg.sections.iter_mut().find(|(n, _)| *n == current) {
                Some((_, entries)) => entries.push(entry),
                None => cfg.sections.push((current.clone(), vec![entry])),
            }
        }
        Ok(cfg)
    }
}
