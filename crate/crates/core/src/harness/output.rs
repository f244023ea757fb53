//! Result tables with a metadata header, rendered as CSV or JSON.

use serde_json::{json, Map, Value};

use super::config::OutputFormat;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    /// Value that is undefined for this row (written as an empty CSV field
    /// and `null` in JSON).
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => v.to_string(),
            Cell::Float(_) | Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(_) | Cell::Missing => Value::Null,
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

/// One written result: configuration, scalar results and a data table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifact {
    /// Entries that reproduce the experiment, in config-file syntax.
    pub config: Vec<(String, String)>,
    /// Scalar results (fitted alpha, chi-squared, ...).
    pub summary: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Artifact {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            ..Self::default()
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn add_summary(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Values of one column as floats (`NaN` for missing cells).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| *c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[idx] {
                    Cell::Int(v) => v as f64,
                    Cell::Float(v) => v,
                    Cell::Missing => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// `#`-prefixed header (tool, configuration, results) followed by an
    /// RFC 4180 table. Numeric cells never need quoting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# tool = {}\n", tool_version()));
        for (k, v) in &self.config {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for (k, v) in &self.summary {
            out.push_str(&format!("# result.{k} = {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push_str("\r\n");
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&fields.join(","));
            out.push_str("\r\n");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let summary: Map<String, Value> = self
            .summary
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = json!({
            "metadata": {
                "tool": tool_version(),
                "config": config,
                "result": summary,
            },
            "columns": self.columns,
            "rows": rows,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
        text.push('\n');
        text
    }
}

pub fn tool_version() -> String {
    format!("egmc {}", env!("CARGO_PKG_VERSION"))
}

/// Recovers the configuration entries embedded in a CSV or JSON result.
pub fn embedded_config(text: &str) -> Option<Vec<(String, String)>> {
    if text.trim_start().starts_with('{') {
        let doc: Value = serde_json::from_str(text).ok()?;
        let config = doc.get("metadata")?.get("config")?.as_object()?;
        return config
            .iter()
            .map(|(k, v)| Some((k.clone(), v.as_str()?.to_string())))
            .collect();
    }
    let entries = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| k != "tool" && !k.starts_with("result."))
        .collect();
    Some(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Artifact {
        let mut a = Artifact::new(&["step", "value"]);
        a.config.push(("experiment".into(), "run3d".into()));
        a.add_summary("isdcd", 0.5);
        a.push_row(vec![Cell::from(0usize), Cell::from(0.25)]);
        a.push_row(vec![Cell::from(1usize), Cell::Missing]);
        a
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# tool = egmc "));
        assert_eq!(lines[1], "# experiment = run3d");
        assert_eq!(lines[2], "# result.isdcd = 0.5");
        assert_eq!(lines[3], "step,value");
        assert!(csv.contains("step,value\r\n"));
        assert_eq!(lines[4], "0,0.25");
        assert_eq!(lines[5], "1,");
    }

    #[test]
    fn json_layout() {
        let doc: Value = serde_json::from_str(&sample().to_json()).unwrap();
        assert_eq!(doc["columns"][1], "value");
        assert_eq!(doc["rows"][0][1], 0.25);
        assert!(doc["rows"][1][1].is_null());
        assert_eq!(doc["metadata"]["config"]["experiment"], "run3d");
    }

    #[test]
    fn config_is_recoverable_from_both_formats() {
        let a = sample();
        let expected = vec![("experiment".to_string(), "run3d".to_string())];
        assert_eq!(embedded_config(&a.to_csv()).unwrap(), expected);
        assert_eq!(embedded_config(&a.to_json()).unwrap(), expected);
    }

    #[test]
    fn column_extraction() {
        let a = sample();
        let v = a.column("value").unwrap();
        assert_eq!(v[0], 0.25);
        assert!(v[1].is_nan());
        assert!(a.column("missing").is_none());
    }
}
