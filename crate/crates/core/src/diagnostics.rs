//! Non-fatal issues collected during a stage and written as a CSV report
//! (`severity,inn,year,code,message`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagCode {
    MalformedDocument,
    MalformedRow,
    DuplicateIdentifier,
    UnmappedCode,
    UnknownLineCode,
    MissingCodes,
    UnmatchedStatement,
    UnmatchedExclusion,
    ServiceUnavailable,
    MalformedResponse,
    SignConvention,
    MissingExternalYear,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub inn: String,
    pub year: Option<i32>,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn new(
        severity: Severity,
        code: DiagCode,
        inn: impl Into<String>,
        year: Option<i32>,
        message: impl Into<String>,
    ) -> Self {
        Diagnostic {
            severity,
            inn: inn.into(),
            year,
            code,
            message: message.into(),
        }
    }

    pub fn warn(
        code: DiagCode,
        inn: impl Into<String>,
        year: Option<i32>,
        message: impl Into<String>,
    ) -> Self {
        Self::new(Severity::Warning, code, inn, year, message)
    }
}

/// Accumulates diagnostics; sorted on write so output is independent of worker scheduling.
#[derive(Debug, Default, Clone)]
pub struct Diagnostics {
    items: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: Diagnostic) {
        self.items.push(d);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Diagnostic>) {
        self.items.extend(other);
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter()
    }

    pub fn count(&self, code: DiagCode) -> usize {
        self.items.iter().filter(|d| d.code == code).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut sorted = self.items.clone();
        sorted.sort();
        let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
        w.write_record(["severity", "inn", "year", "code", "message"])?;
        for d in &sorted {
            w.serialize(d)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let items = r
            .deserialize()
            .collect::<std::result::Result<Vec<Diagnostic>, _>>()?;
        Ok(Diagnostics { items })
    }
}

impl IntoIterator for Diagnostics {
    type Item = Diagnostic;
    type IntoIter = std::vec::IntoIter<Diagnostic>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.into_iter()
    }
}
