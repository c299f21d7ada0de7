//! Line-oriented `key = value` reports.

use std::fmt::Display;
use std::path::Path;

use crate::error::{MoccaError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    /// Joins `values` with single spaces.
    pub fn push_list<T: Display>(&mut self, key: impl Into<String>, values: impl IntoIterator<Item = T>) -> &mut Self {
        let joined = values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        self.push(key, joined)
    }

    /// Shortest round-trip exponent form, e.g. `1.5e-3`, `inf`.
    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, format!("{value:e}"))
    }

    pub fn push_f64s(&mut self, key: impl Into<String>, values: impl IntoIterator<Item = f64>) -> &mut Self {
        self.push_list(key, values.into_iter().map(|v| format!("{v:e}")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once(" = ")
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| MoccaError::Format(format!("malformed report line {l:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}
