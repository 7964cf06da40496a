use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::ExperimentError;

pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const SIGNATURES_FILE: &str = "signatures.json";
pub const RULES_FILE: &str = "rules.rules";
pub const WEIGHTS_FILE: &str = "weights.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const BOUNDS_TABLE_CSV: &str = "bounds_table.csv";
pub const BOUNDS_JSON: &str = "bounds.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

pub fn attacked_file(budget: usize) -> String {
    format!("attacked_b{budget}.jsonl")
}

fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io { path: path.to_path_buf(), source }
}

pub fn read_text(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| ExperimentError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("serializable");
        buf.write_all(b"\n").expect("in-memory write");
    }
    write_text(path, std::str::from_utf8(&buf).expect("json is utf-8"))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExperimentError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
