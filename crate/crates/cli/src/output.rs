//! Buffered command output in TSV or JSON, to stdout or a file.

use std::io::Write;
use std::path::PathBuf;

use clap::ValueEnum;
use serde_json::{Map, Value as Json};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

/// Rows go out as TSV lines or as one JSON object per line.
pub struct Output {
    format: Format,
    dest: Option<PathBuf>,
    buf: String,
}

fn cell(v: &Json) -> String {
    match v {
        Json::Null => "-".to_string(),
        Json::String(s) => s.replace(['\t', '\n'], " "),
        Json::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

impl Output {
    pub fn new(format: Format, dest: Option<PathBuf>) -> Output {
        Output {
            format,
            dest,
            buf: String::new(),
        }
    }

    /// Column names; TSV only.
    pub fn header(&mut self, cols: &[&str]) {
        if self.format == Format::Tsv {
            self.buf.push_str(&cols.join("\t"));
            self.buf.push('\n');
        }
    }

    pub fn row(&mut self, fields: &[(&str, Json)]) {
        match self.format {
            Format::Tsv => {
                let cells: Vec<String> = fields.iter().map(|(_, v)| cell(v)).collect();
                self.buf.push_str(&cells.join("\t"));
            }
            Format::Json => {
                let obj: Map<String, Json> = fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
                self.buf.push_str(&Json::Object(obj).to_string());
            }
        }
        self.buf.push('\n');
    }

    /// A single result: `key<TAB>value` lines, or one JSON object.
    pub fn record(&mut self, fields: &[(&str, Json)]) {
        match self.format {
            Format::Tsv => {
                for (k, v) in fields {
                    self.buf.push_str(&format!("{k}\t{}\n", cell(v)));
                }
            }
            Format::Json => self.row(fields),
        }
    }

    /// Program text, verbatim in TSV mode.
    pub fn source(&mut self, text: &str) {
        match self.format {
            Format::Tsv => self.buf.push_str(text),
            Format::Json => self.row(&[("source", Json::String(text.to_string()))]),
        }
    }

    pub fn raw(&mut self, text: &str) {
        self.buf.push_str(text);
    }

    pub fn finish(self) -> Result<(), Failure> {
        match &self.dest {
            Some(p) => std::fs::write(p, &self.buf)
                .map_err(|e| Failure::Diagnostic(format!("{}: {e}", p.display()))),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(self.buf.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|e| Failure::Diagnostic(format!("stdout: {e}")))
            }
        }
    }
}
