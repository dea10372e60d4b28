use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// A command's output. Contains no timestamps, so reruns are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub passed: bool,
    pub config: RunConfig,
    pub result: Value,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One header row and one data row; a suite report has one row per check instead.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let base = [("command", self.command.clone()), ("seed", self.seed.to_string()), ("passed", self.passed.to_string())];
        match self.result.get("checks").and_then(Value::as_array) {
            Some(checks) => {
                let mut first = true;
                for c in checks {
                    let mut fields = Vec::new();
                    flatten("", c, &mut fields);
                    if first {
                        let header = base.iter().map(|(k, _)| k.to_string()).chain(fields.iter().map(|(k, _)| k.clone()));
                        w.write_record(header.collect::<Vec<_>>()).expect("in-memory write");
                        first = false;
                    }
                    let row = base.iter().map(|(_, v)| v.clone()).chain(fields.into_iter().map(|(_, v)| v));
                    w.write_record(row.collect::<Vec<_>>()).expect("in-memory write");
                }
            }
            None => {
                let mut fields = Vec::new();
                flatten("", &self.result, &mut fields);
                let header = base.iter().map(|(k, _)| k.to_string()).chain(fields.iter().map(|(k, _)| k.clone()));
                w.write_record(header.collect::<Vec<_>>()).expect("in-memory write");
                let row = base.iter().map(|(_, v)| v.clone()).chain(fields.into_iter().map(|(_, v)| v));
                w.write_record(row.collect::<Vec<_>>()).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// Write to `--out`, or stdout when no path is set.
    pub fn write(&self, cfg: &RunConfig) -> Result<(), CliError> {
        let text = self.render(cfg.format);
        match &cfg.out {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io("<stdout>".as_ref(), e))
            }
        }
    }
}
