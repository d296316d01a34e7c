//! Deterministic JSON and CSV result tables.
//!
//! Floats are always written with six decimals, JSON object keys are
//! sorted, and rows keep their given order, so identical results give
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv_field(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => format!("{v:.6}"),
            Cell::Float(_) => String::new(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => format!("{v:.6}"),
            Cell::Float(_) => "null".into(),
            Cell::Text(s) => serde_json::to_string(s).expect("strings serialize"),
        }
    }
}

/// Named columns over rows of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&Cell> {
        let c = self.columns.iter().position(|name| name == column)?;
        self.rows.get(row).map(|r| &r[c])
    }

    /// Reads a JSON report back: an array of flat objects sharing one key
    /// set. Columns come out sorted.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::ConfigInvalid(format!("not a report: {m}"));
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
        let rows = value.as_array().ok_or_else(|| bad("expected an array"))?;
        let first = rows
            .first()
            .and_then(|r| r.as_object())
            .ok_or(CliError::EmptyResults)?;
        let mut columns: Vec<String> = first.keys().cloned().collect();
        columns.sort();
        let mut table = Table::new(columns.clone());
        for row in rows {
            let obj = row.as_object().ok_or_else(|| bad("expected objects"))?;
            if obj.len() != columns.len() {
                return Err(bad("rows have different keys"));
            }
            let mut cells = Vec::with_capacity(columns.len());
            for c in &columns {
                let cell = match obj.get(c).ok_or_else(|| bad("rows have different keys"))? {
                    serde_json::Value::Number(n) if n.is_i64() => {
                        Cell::Int(n.as_i64().expect("checked"))
                    }
                    serde_json::Value::Number(n) => Cell::Float(n.as_f64().expect("finite number")),
                    serde_json::Value::Null => Cell::Float(f64::NAN),
                    serde_json::Value::String(s) => Cell::Text(s.clone()),
                    serde_json::Value::Bool(b) => Cell::Text(b.to_string()),
                    _ => return Err(bad("nested values are not supported")),
                };
                cells.push(cell);
            }
            table.push(cells);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!(
                "unknown report format `{other}` (expected json or csv)"
            )),
        }
    }
}

pub fn render(table: &Table, format: ReportFormat) -> Result<String, CliError> {
    if table.rows.is_empty() {
        return Err(CliError::EmptyResults);
    }
    Ok(match format {
        ReportFormat::Json => render_json(table),
        ReportFormat::Csv => render_csv(table),
    })
}

fn render_json(table: &Table) -> String {
    let mut order: Vec<usize> = (0..table.columns.len()).collect();
    order.sort_by(|&a, &b| table.columns[a].cmp(&table.columns[b]));
    let mut out = String::from("[\n");
    for (r, row) in table.rows.iter().enumerate() {
        out.push_str("  {");
        for (k, &c) in order.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            let key = serde_json::to_string(&table.columns[c]).expect("strings serialize");
            write!(out, "{key}: {}", row[c].json()).expect("writing to a string");
        }
        out.push('}');
        if r + 1 < table.rows.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]\n");
    out
}

fn render_csv(table: &Table) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns).expect("writing to memory");
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv_field))
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing memory")).expect("csv of utf-8 fields")
}

/// Renders `table` and writes it to `path`.
pub fn emit_report(table: &Table, format: ReportFormat, path: &Path) -> Result<(), CliError> {
    let text = render(table, format)?;
    fs::write(path, text).map_err(io_error(path))
}
