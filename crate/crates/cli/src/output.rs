//! Tabular output in CSV or JSON lines.
//!
//! Both formats open with a header naming every column and its unit. CSV
//! headers read `name[unit]`; JSON lines start with a `{"columns": [...]}`
//! object followed by one object per record.

use std::io::Write;

use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // Shortest round-trip form, exponent notation for extremes.
            Cell::Real(v) => format!("{v:?}"),
            Cell::Text(v) => v.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            // Non-finite values have no JSON number form.
            Cell::Real(v) if v.is_finite() => json!(v),
            Cell::Real(v) => json!(v.to_string()),
            Cell::Text(v) => json!(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// An in-memory table; written in one go so partial files never appear.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<(&'static str, &'static str)>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[(&'static str, &'static str)]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
                w.write_record(self.columns.iter().map(|(n, u)| format!("{n}[{u}]")))
                    .map_err(|e| CliError::Io(e.to_string()))?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv)).map_err(|e| CliError::Io(e.to_string()))?;
                }
                w.into_inner().map_err(|e| CliError::Io(e.to_string()))
            }
            Format::JsonLines => {
                let mut out = Vec::new();
                let header: Vec<Value> = self
                    .columns
                    .iter()
                    .map(|(n, u)| json!({"name": n, "unit": u}))
                    .collect();
                writeln!(out, "{}", json!({ "columns": header })).map_err(|e| CliError::Io(e.to_string()))?;
                for row in &self.rows {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|((n, _), c)| (n.to_string(), c.json()))
                        .collect();
                    writeln!(out, "{}", Value::Object(obj)).map_err(|e| CliError::Io(e.to_string()))?;
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&[("t", "time"), ("x", "length"), ("kind", "-")]);
        t.push(vec![0.5.into(), 1e-20.into(), "a".into()]);
        t.push(vec![1.0.into(), f64::NAN.into(), "b".into()]);
        t
    }

    #[test]
    fn csv_has_units_and_lf() {
        let text = String::from_utf8(sample().render(Format::Csv).unwrap()).unwrap();
        assert_eq!(text, "t[time],x[length],kind[-]\n0.5,1e-20,a\n1.0,NaN,b\n");
    }

    #[test]
    fn jsonl_header_then_records() {
        let text = String::from_utf8(sample().render(Format::JsonLines).unwrap()).unwrap();
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["columns"][1]["unit"], "length");
        assert_eq!(lines[1]["x"], 1e-20);
        assert_eq!(lines[2]["x"], "NaN");
    }
}
