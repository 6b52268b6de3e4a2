//! Tabular output as CSV or JSON, written atomically.
//!
//! Numbers are printed as `{:.16e}`, 17 significant digits, so that every
//! value parses back to the same bits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::config::Format;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

pub fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(v: &Value) -> String {
    match v {
        Value::Num(x) => number(*x),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) if s.contains([',', '"', '\n', '\r']) => {
            format!("\"{}\"", s.replace('"', "\"\""))
        }
        Value::Text(s) => s.clone(),
    }
}

fn json_value(v: &Value) -> String {
    match v {
        Value::Num(x) if x.is_finite() => number(*x),
        Value::Num(_) => "null".into(),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => serde_json::to_string(s).expect("strings serialize"),
    }
}

/// Named columns plus `key = value` metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, Value)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.push((key.to_owned(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Metadata as `# key = value` comment lines, then a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {}", csv_field(v));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(csv_field).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// `{"meta": {...}, "columns": {"name": [...], ...}}`
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n  \"meta\": {");
        for (i, (k, v)) in self.meta.iter().enumerate() {
            let sep = if i == 0 { "\n" } else { ",\n" };
            let _ = write!(
                out,
                "{sep}    {}: {}",
                json_value(&Value::Text(k.clone())),
                json_value(v)
            );
        }
        out.push_str(if self.meta.is_empty() {
            "},\n"
        } else {
            "\n  },\n"
        });
        out.push_str("  \"columns\": {");
        for (j, name) in self.columns.iter().enumerate() {
            let sep = if j == 0 { "\n" } else { ",\n" };
            let values: Vec<String> = self.rows.iter().map(|r| json_value(&r[j])).collect();
            let _ = write!(
                out,
                "{sep}    {}: [{}]",
                json_value(&Value::Text(name.clone())),
                values.join(", ")
            );
        }
        out.push_str(if self.columns.is_empty() {
            "}\n}\n"
        } else {
            "\n  }\n}\n"
        });
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Replaces `path` with `contents` via a temporary file in the same
/// directory; the target is never left half-written.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Booleans read as 1 and 0.
fn parse_field(s: &str) -> Option<f64> {
    match s {
        "true" => Some(1.0),
        "false" => Some(0.0),
        _ => s.parse().ok(),
    }
}

/// Numeric columns read back from a CSV or JSON table.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    names: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl Columns {
    pub fn get(&self, name: &str) -> Result<&[f64], CliError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "input has no column `{name}` (found {})",
                    self.names.join(", ")
                ))
            })
    }

    /// Parses JSON when the text starts with `{`, CSV otherwise.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text, origin)
        } else {
            Self::parse_csv(text, origin)
        }
    }

    fn parse_csv(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| CliError::Usage(format!("{origin}: no header row")))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_owned()).collect();
        let mut data = vec![Vec::new(); names.len()];
        for (n, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: expected {} fields, found {}",
                    n + 1,
                    names.len(),
                    fields.len()
                )));
            }
            for (col, field) in data.iter_mut().zip(fields) {
                let v = parse_field(field.trim()).ok_or_else(|| {
                    CliError::Usage(format!(
                        "{origin}:{}: `{}` is not a number",
                        n + 1,
                        field.trim()
                    ))
                })?;
                col.push(v);
            }
        }
        Ok(Self { names, data })
    }

    fn parse_json(text: &str, origin: &str) -> Result<Self, CliError> {
        let bad = |why: String| CliError::Usage(format!("{origin}: {why}"));
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let columns = doc
            .get("columns")
            .and_then(|c| c.as_object())
            .ok_or_else(|| bad("missing `columns` object".into()))?;
        let mut names = Vec::new();
        let mut data = Vec::new();
        for (name, values) in columns {
            let values = values
                .as_array()
                .ok_or_else(|| bad(format!("column `{name}` is not an array")))?;
            let col = values
                .iter()
                .map(|v| {
                    v.as_f64()
                        .or_else(|| v.as_bool().map(|b| if b { 1.0 } else { 0.0 }))
                        .ok_or_else(|| bad(format!("column `{name}` holds a non-number")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            names.push(name.clone());
            data.push(col);
        }
        Ok(Self { names, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["x", "y"])
            .meta("label", "a,b")
            .meta("n", 2usize);
        t.push(vec![0.1.into(), (1.0 / 3.0).into()]);
        t.push(vec![1e-300.into(), f64::MAX.into()]);
        t
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# label = \"a,b\"");
        assert_eq!(lines[1], "# n = 2");
        assert_eq!(lines[2], "x,y");
        assert_eq!(lines[3], "1.0000000000000001e-1,3.3333333333333331e-1");
    }

    #[test]
    fn numbers_round_trip_through_both_formats() {
        let t = sample();
        for text in [t.to_csv(), t.to_json()] {
            let cols = Columns::parse(&text, "test").unwrap();
            assert_eq!(cols.get("x").unwrap(), &[0.1, 1e-300]);
            assert_eq!(cols.get("y").unwrap(), &[1.0 / 3.0, f64::MAX]);
            assert!(cols.get("z").is_err());
        }
    }

    #[test]
    fn json_is_valid() {
        let v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        assert_eq!(v["meta"]["label"], "a,b");
        assert_eq!(v["meta"]["n"], 2);
        let empty: serde_json::Value = serde_json::from_str(&Table::new(&["f"]).to_json()).unwrap();
        assert_eq!(empty["columns"]["f"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let err = Columns::parse("a,b\n1,2\n3\n", "in.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("in.csv:3"), "{err}");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
