//! File emission with a provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use fqs_core::sweep::{format_sig, SweepResult};

use crate::config::Format;

/// Provenance written at the top of every output file.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl RunMeta {
    pub fn header(&self) -> Vec<(String, String)> {
        vec![
            ("tool".into(), format!("fqs {}", fqs_core::VERSION)),
            ("command".into(), self.command.clone()),
            ("config_sha256".into(), self.config_hash.clone()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

fn rounded(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let r: f64 = format_sig(v, 9).parse().expect("formatted float parses");
    json!(r)
}

fn meta_object(pairs: &[(String, String)]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.clone(), Value::String(v.clone()));
    }
    Value::Object(m)
}

pub fn table_json(table: &SweepResult, meta: &RunMeta) -> Value {
    let mut pairs = meta.header();
    pairs.extend(table.metadata.iter().cloned());
    json!({
        "metadata": meta_object(&pairs),
        "columns": table.columns,
        "rows": table.rows.iter().map(|r| r.iter().map(|v| rounded(*v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

pub fn table_csv(table: &SweepResult, meta: &RunMeta) -> String {
    let mut t = table.clone();
    let mut pairs = meta.header();
    pairs.append(&mut t.metadata);
    t.metadata = pairs;
    t.to_csv_with_metadata()
}

/// Writes `table` as `<dir>/<stem>.csv` or `.json`.
pub fn write_table(dir: &Path, stem: &str, table: &SweepResult, meta: &RunMeta, format: Format) -> std::io::Result<PathBuf> {
    let (path, body) = match format {
        Format::Csv => (dir.join(format!("{stem}.csv")), table_csv(table, meta)),
        Format::Json => (
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&table_json(table, meta)).expect("json") + "\n",
        ),
    };
    write_file(&path, &body)?;
    Ok(path)
}

pub fn write_file(path: &Path, body: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, body)
}

/// `# key: value` lines for free-form CSV files.
pub fn comment_header(meta: &RunMeta) -> String {
    meta.header().iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
}

pub fn meta_json(meta: &RunMeta) -> Value {
    meta_object(&meta.header())
}

pub fn json_number(v: f64) -> Value {
    rounded(v)
}
