//! Tabular output and the run manifest that accompanies it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::args::{Format, OutputArgs};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(x) => json!(format_float(*x)),
            Cell::Int(n) => json!(n),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Shortest round-trip decimal; Debug gives that for f64 (with an exponent
/// for very large or small magnitudes).
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// A table whose last column is a status: "failed" when any numeric cell is
/// NaN, so a failed optimization never disappears silently.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        let mut columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        columns.push("status".into());
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, mut row: Vec<Cell>) {
        debug_assert_eq!(row.len() + 1, self.columns.len());
        let failed = row.iter().any(|c| matches!(c, Cell::Num(x) if x.is_nan()));
        row.push(Cell::Text(if failed { "failed" } else { "ok" }.into()));
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(CliError::io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(CliError::io)?;
        }
        w.into_inner().map_err(|e| CliError::io(e.into_error()))
    }

    fn to_json(&self) -> Value {
        json!({
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub base_seed: Option<u64>,
    pub threads: usize,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub parameters: Value,
    pub diagnostics: Value,
}

/// Collects what a run read so the manifest can record digests.
pub struct RunContext {
    pub seed: Option<u64>,
    started: SystemTime,
    clock: Instant,
    inputs: BTreeMap<String, String>,
    pub diagnostics: Value,
}

impl RunContext {
    pub fn new(seed: Option<u64>) -> Self {
        Self {
            seed,
            started: SystemTime::now(),
            clock: Instant::now(),
            inputs: BTreeMap::new(),
            diagnostics: Value::Null,
        }
    }

    pub fn read_input(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::unreadable(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        String::from_utf8(bytes).map_err(|_| CliError::validation("invalid_input", format!("{} is not UTF-8", path.display())))
    }

    fn manifest(&self, parameters: Value, outputs: BTreeMap<String, String>) -> RunManifest {
        RunManifest {
            tool: "qdev".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command_line: std::env::args().collect(),
            inputs: self.inputs.clone(),
            outputs,
            base_seed: self.seed,
            threads: rayon::current_num_threads(),
            started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            parameters,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// CSV goes to the destination with the manifest at `<out>.manifest.json`;
    /// JSON embeds the manifest. Stdout CSV carries no manifest.
    pub fn emit(&self, table: &Table, output: &OutputArgs, parameters: Value) -> Result<(), CliError> {
        match output.format {
            Format::Csv => {
                let bytes = table.to_csv()?;
                match &output.out {
                    None => write_stdout(&bytes),
                    Some(path) => {
                        write_file(path, &bytes)?;
                        let outputs = BTreeMap::from([(path.display().to_string(), sha256_hex(&bytes))]);
                        let manifest = self.manifest(parameters, outputs);
                        write_file(&manifest_path(path), &to_pretty(&manifest)?)
                    }
                }
            }
            Format::Json => {
                let mut doc = table.to_json();
                doc["manifest"] = serde_json::to_value(self.manifest(parameters, BTreeMap::new()))
                    .map_err(|e| CliError::numerical("serialization", e.to_string()))?;
                let bytes = to_pretty(&doc)?;
                match &output.out {
                    None => write_stdout(&bytes),
                    Some(path) => write_file(path, &bytes),
                }
            }
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn to_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::numerical("serialization", e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::unwritable(path, e))
}

pub fn write_stdout(bytes: &[u8]) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(CliError::io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0, 2.0f64.ln(), 1e-300, 6.02e23, -0.5] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(0.1), "0.1");
    }

    #[test]
    fn nan_rows_are_marked_failed() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![1.0.into(), "x,y".into()]);
        t.push(vec![f64::NAN.into(), "z".into()]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "a,b,status\n1.0,\"x,y\",ok\nNaN,z,failed\n");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(["t", "bound"]);
        assert_eq!(t.to_csv().unwrap(), b"t,bound,status\n");
    }
}
