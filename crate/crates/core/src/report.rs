//! Output formatting shared by the CSV writers, JSON documents and the CLI.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

/// Formats `x` with 12 significant digits, `%.12g` style.
///
/// Trailing zeros are dropped; very small or very large magnitudes switch to
/// exponent notation. Output never depends on locale.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        return format!("{}e{exp}", strip_zeros(mantissa));
    }
    let decimals = (11 - exp).max(0) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Joins already formatted fields into one CSV line (with trailing newline).
pub fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut s = fields
        .into_iter()
        .map(|f| f.as_ref().to_owned())
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

pub fn csv_nums(values: impl IntoIterator<Item = f64>) -> String {
    csv_line(values.into_iter().map(fmt_num))
}

/// Serializes with four-space-free, stable key order (struct order).
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Record of one CLI invocation and every file it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub case: Option<u32>,
    pub options: serde_json::Value,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, case: Option<u32>) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.display().to_string(),
            case,
            options: serde_json::Value::Null,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: 0.0,
        }
    }

    /// Adds `path` unless it is already listed.
    pub fn record(&mut self, path: &Path) {
        let p = path.display().to_string();
        if !self.outputs.contains(&p) {
            self.outputs.push(p);
        }
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(path.to_path_buf())
}
