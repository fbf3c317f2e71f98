//! Deterministic plain-text reports.
//!
//! Reports are assembled from a fixed sequence of sections and key/value
//! lines. All floating-point numbers go through [`fmt_num`], which prints
//! exactly twelve significant digits, and inputs are identified by their
//! SHA-256 digests rather than timestamps, so identical inputs always
//! produce byte-identical reports.

use sha2::{Digest, Sha256};

/// Canonical number formatting: scientific notation with twelve significant
/// digits. Negative zero is folded onto zero so that algebraically equal
/// results render identically.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000000e0".to_string();
    }
    format!("{x:.11e}")
}

/// A bracketed, comma-separated vector rendered with [`fmt_num`].
pub fn fmt_vec(values: &[f64]) -> String {
    let inner = values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>();
    format!("[{}]", inner.join(", "))
}

/// Hex-encoded SHA-256 digest of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Line-oriented report assembler with a fixed header.
#[derive(Clone, Debug)]
pub struct ReportBuilder {
    lines: Vec<String>,
}

impl ReportBuilder {
    /// Starts a report for the named command.
    pub fn new(command: &str) -> Self {
        ReportBuilder {
            lines: vec![
                "bsde-report schema 1".to_string(),
                format!("command: {command}"),
            ],
        }
    }

    /// Opens a new `[name]` section.
    pub fn section(&mut self, name: &str) -> &mut Self {
        self.lines.push(String::new());
        self.lines.push(format!("[{name}]"));
        self
    }

    /// Appends a raw line.
    pub fn line(&mut self, text: impl Into<String>) -> &mut Self {
        self.lines.push(text.into());
        self
    }

    /// Appends `key = value`.
    pub fn kv(&mut self, key: &str, value: impl AsRef<str>) -> &mut Self {
        self.lines.push(format!("{key} = {}", value.as_ref()));
        self
    }

    /// Appends `key = <formatted number>`.
    pub fn kv_num(&mut self, key: &str, value: f64) -> &mut Self {
        let rendered = fmt_num(value);
        self.kv(key, rendered)
    }

    /// Finishes the report with a trailing newline.
    pub fn finish(self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}
