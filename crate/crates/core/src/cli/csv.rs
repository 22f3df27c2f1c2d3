//! Minimal CSV output: fixed headers, `Display` formatting of numbers (which
//! round-trips and never uses separators), LF line endings.

use std::fmt::{Display, Write as _};
use std::path::Path;

pub const REGRET_HEADER: &str = "experiment,policy,t,mean_cum_regret,stderr,trials,seed";
pub const REGULARIZER_HEADER: &str = "experiment,policy,sweep_param,nu";
pub const DIAGNOSTICS_HEADER: &str = "t,q1,overlap,regularizer,pull_rate";
pub const INTERVALS_HEADER: &str = "t,arm,lower,center,upper";

/// An in-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self {
            text: format!("{header}\n"),
            columns: header.split(',').count(),
        }
    }

    /// Append a row; fields must not contain commas or newlines.
    pub fn row(&mut self, fields: &[&dyn Display]) {
        assert_eq!(
            fields.len(),
            self.columns,
            "row width does not match header"
        );
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{field}").expect("writing to a String");
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn rows(&self) -> usize {
        self.text.lines().count() - 1
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.text.as_bytes())
    }
}

/// Empty field for missing values.
pub struct Blank;

impl Display for Blank {
    fn fmt(&self, _: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        Ok(())
    }
}
