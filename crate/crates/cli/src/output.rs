//! Versioned CSV tables and JSON run summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A table whose first line is `# schema_version=.. config_hash=..`,
/// followed by an ordinary CSV header and rows.
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, headers: &[&'static str]) -> Self {
        Table { name, headers: headers.to_vec(), rows: Vec::new() }
    }

    pub fn push<I, T>(&mut self, row: I)
    where
        I: IntoIterator<Item = T>,
        T: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, hash: &str) -> std::io::Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "# schema_version={SCHEMA_VERSION} config_hash={hash}")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Node rows `(index, x1, x2, value)` of a nodal field.
pub fn field_table(name: &'static str, value: &'static str, u: &zaremba_core::DiscreteField) -> Table {
    let mut t = Table::new(name, &["index", "x1", "x2", value]);
    for (i, &v) in u.values.iter().enumerate() {
        let x = u.grid.node_coords(i);
        t.push([i.to_string(), x[0].to_string(), x[1].to_string(), v.to_string()]);
    }
    t
}

/// Node rows `(index, x1, x2)`.
pub fn node_table(name: &'static str, nodes: &zaremba_core::NodeSet, grid: &zaremba_core::Grid) -> Table {
    let mut t = Table::new(name, &["index", "x1", "x2"]);
    for (i, x1, x2) in nodes.rows(grid) {
        t.push([i.to_string(), x1.to_string(), x2.to_string()]);
    }
    t
}

/// Finite floats as numbers, everything else as `null`.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn write_summary(
    dir: &Path,
    subcommand: &str,
    hash: &str,
    wall_time_s: f64,
    results: Map<String, Value>,
    outputs: &[PathBuf],
) -> std::io::Result<(PathBuf, Value)> {
    let summary = serde_json::json!({
        "subcommand": subcommand,
        "schema_version": SCHEMA_VERSION,
        "config_hash": hash,
        "wall_time_s": wall_time_s,
        "results": Value::Object(results),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let path = dir.join(format!("{subcommand}_summary.json"));
    let mut file = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut file, &summary)?;
    writeln!(file)?;
    file.flush()?;
    Ok((path, summary))
}
