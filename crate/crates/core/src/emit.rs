//! Result tables and their CSV, JSON and plain-text renderings.
//!
//! Report tables use the fixed columns [`REPORT_COLUMNS`]. Floats are written
//! with 17 significant digits, so CSV and JSON values parse back to the same
//! bits. Missing values are empty CSV fields and JSON `null`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::analytics::PerformanceReport;
use crate::error::{Error, Result};
use crate::sweep::SweepResult;

pub const REPORT_COLUMNS: [&str; 17] = [
    "axis",
    "overlay",
    "p_detect",
    "p_s1",
    "p_s2",
    "p_s3",
    "p_eff_one",
    "key_rate_bps",
    "qber",
    "method",
    "se_p_detect",
    "se_p_s1",
    "se_p_s2",
    "se_p_s3",
    "se_p_eff_one",
    "se_key_rate_bps",
    "se_qber",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn num(v: Option<f64>) -> Cell {
        match v {
            Some(x) if x.is_finite() => Cell::Num(x),
            _ => Cell::Empty,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::num(Some(v))
    }
}
impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::num(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

/// Column names plus rows of cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Value of column `name` in row `row`.
    pub fn get(&self, row: usize, name: &str) -> Option<&Cell> {
        self.column(name).and_then(|c| self.rows.get(row).map(|r| &r[c]))
    }

    pub fn report_table() -> Self {
        Table::new(REPORT_COLUMNS)
    }

    pub fn push_report(&mut self, axis: Option<f64>, overlay: Option<f64>, r: &PerformanceReport) {
        let se = r.se;
        self.push(vec![
            axis.into(),
            overlay.into(),
            r.p_detect.into(),
            r.p_s1.into(),
            r.p_s2.into(),
            r.p_s3.into(),
            r.p_eff_one.into(),
            r.key_rate.into(),
            r.qber.into(),
            r.method.as_str().into(),
            se.map(|s| s.p_detect).into(),
            se.map(|s| s.p_s1).into(),
            se.map(|s| s.p_s2).into(),
            se.map(|s| s.p_s3).into(),
            se.map(|s| s.p_eff_one).into(),
            se.map(|s| s.key_rate).into(),
            se.and_then(|s| r.qber.map(|_| s.qber)).into(),
        ]);
    }

    pub fn from_report(r: &PerformanceReport) -> Self {
        let mut t = Self::report_table();
        t.push_report(None, None, r);
        t
    }

    pub fn from_sweep(s: &SweepResult) -> Self {
        let mut t = Self::report_table();
        for row in &s.rows {
            t.push_report(Some(row.axis_value), row.overlay_value, &row.report);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::domain(format!("unknown format `{s}` (expected table, csv or json)"))),
        }
    }
}

fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(t: &Table) -> String {
    let mut out = String::new();
    let header: Vec<String> = t.columns.iter().map(|c| csv_field(c)).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for row in &t.rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => full(*v),
                Cell::Text(s) => csv_field(s),
                Cell::Bool(b) => b.to_string(),
                Cell::Empty => String::new(),
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn to_json(t: &Table) -> String {
    let mut out = String::from("[\n");
    for (i, row) in t.rows.iter().enumerate() {
        out.push_str("  {");
        for (j, (name, c)) in t.columns.iter().zip(row).enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let v = match c {
                Cell::Num(v) => full(*v),
                Cell::Text(s) => Value::String(s.clone()).to_string(),
                Cell::Bool(b) => b.to_string(),
                Cell::Empty => "null".into(),
            };
            let _ = write!(out, "{}: {v}", Value::String(name.clone()));
        }
        out.push('}');
        out.push_str(if i + 1 < t.rows.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

/// Aligned columns for terminals.
pub fn to_text(t: &Table) -> String {
    let cells: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| match c {
                    Cell::Num(v) => format!("{v:.6e}"),
                    Cell::Text(s) => s.clone(),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Empty => "-".into(),
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..t.columns.len())
        .map(|j| cells.iter().map(|r| r[j].len()).chain([t.columns[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, items: &[String]| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &t.columns);
    for r in &cells {
        line(&mut out, r);
    }
    out
}

pub fn render(t: &Table, format: Format) -> String {
    match format {
        Format::Table => to_text(t),
        Format::Csv => to_csv(t),
        Format::Json => to_json(t),
    }
}

/// Writes the rendering to `path`, or to stdout when `path` is `None`.
pub fn write_output(t: &Table, format: Format, path: Option<&Path>) -> Result<()> {
    let text = render(t, format);
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io { path: p.to_path_buf(), source }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    }
}

/// Parses [`to_json`] output back into a table.
pub fn parse_json(text: &str) -> Result<Table> {
    let bad = |m: &str| Error::Parse { line: 0, key: "json".into(), message: m.to_string() };
    let v: Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
    let rows = v.as_array().ok_or_else(|| bad("expected an array of rows"))?;
    let mut t = Table::default();
    for (i, r) in rows.iter().enumerate() {
        let obj = r.as_object().ok_or_else(|| bad("expected an object per row"))?;
        if i == 0 {
            t.columns = obj.keys().cloned().collect();
        } else if !obj.keys().eq(t.columns.iter()) {
            return Err(bad("rows have differing columns"));
        }
        let row = obj
            .values()
            .map(|x| match x {
                Value::Null => Ok(Cell::Empty),
                Value::Bool(b) => Ok(Cell::Bool(*b)),
                Value::Number(n) => n.as_f64().map(Cell::Num).ok_or_else(|| bad("bad number")),
                Value::String(s) => Ok(Cell::Text(s.clone())),
                _ => Err(bad("nested values are not part of the schema")),
            })
            .collect::<Result<Vec<_>>>()?;
        t.rows.push(row);
    }
    Ok(t)
}

/// Parses [`to_csv`] output back into a table. Unquoted fields only carry
/// numbers, booleans or plain text.
pub fn parse_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::domain("empty CSV"))?;
    let mut t = Table::new(header.split(','));
    for line in lines {
        let row = line
            .split(',')
            .map(|f| {
                if f.is_empty() {
                    Cell::Empty
                } else if let Ok(v) = f.parse::<f64>() {
                    Cell::Num(v)
                } else if let Ok(b) = f.parse::<bool>() {
                    Cell::Bool(b)
                } else {
                    Cell::Text(f.to_string())
                }
            })
            .collect::<Vec<_>>();
        if row.len() != t.columns.len() {
            return Err(Error::domain("CSV row width differs from header"));
        }
        t.rows.push(row);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{Method, StandardErrors};

    fn report(method: Method) -> PerformanceReport {
        PerformanceReport {
            p_detect: 0.123_456_789_012_345_67,
            p_s1: 1.0 / 3.0,
            p_s2: 2.2e-300,
            p_s3: 0.0,
            p_eff_one: std::f64::consts::PI / 10.0,
            key_rate: 31_415_926.535_897_93,
            qber: Some(7.000_000_000_000_001e-4),
            method,
            se: (method == Method::MonteCarlo).then_some(StandardErrors {
                p_detect: 1e-4,
                p_s1: 2e-4,
                p_s2: 3e-4,
                p_s3: 4e-4,
                p_eff_one: 5e-4,
                key_rate: 5e4,
                qber: 6e-5,
            }),
        }
    }

    #[test]
    fn single_report_csv() {
        let csv = to_csv(&Table::from_report(&report(Method::Analytic)));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_COLUMNS.join(","));
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(&fields[..2], &["", ""]);
        let mantissa = fields[2].split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17);
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.123_456_789_012_345_67);
        assert!(lines[1].contains(",analytic,"));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut t = Table::report_table();
        t.push_report(Some(0.05), Some(5e-5), &report(Method::Analytic));
        t.push_report(Some(0.05), Some(5e-5), &report(Method::MonteCarlo));
        let back = parse_json(&to_json(&t)).unwrap();
        assert_eq!(back.columns, t.columns);
        for (a, b) in t.rows.iter().flatten().zip(back.rows.iter().flatten()) {
            match (a, b) {
                (Cell::Num(x), Cell::Num(y)) => assert_eq!(x.to_bits(), y.to_bits()),
                _ => assert_eq!(a, b),
            }
        }
        assert_eq!(parse_csv(&to_csv(&t)).unwrap(), t);
    }

    #[test]
    fn missing_values() {
        let mut r = report(Method::MonteCarlo);
        r.qber = None;
        let t = Table::from_report(&r);
        assert_eq!(t.get(0, "qber"), Some(&Cell::Empty));
        assert_eq!(t.get(0, "se_qber"), Some(&Cell::Empty));
        assert!(to_json(&t).contains("\"qber\": null"));
        assert!(to_text(&t).contains('-'));
    }

    #[test]
    fn format_names() {
        assert_eq!("CSV".parse::<Format>().unwrap(), Format::Csv);
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn io_error_carries_path() {
        let t = Table::from_report(&report(Method::Analytic));
        let p = Path::new("/nonexistent-dir/out.csv");
        match write_output(&t, Format::Csv, Some(p)).unwrap_err() {
            Error::Io { path, .. } => assert_eq!(path, p),
            e => panic!("unexpected {e}"),
        }
    }
}
