//! Output plumbing: CSV assembly and file-or-stdout writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Write to the given path, or stdout when no path is set.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

/// CSV buffer with a fixed header; fields are written with the shortest
/// round-trip float format so identical runs yield identical bytes.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "row width mismatch");
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub fn field_f64(v: f64) -> String {
    format!("{v}")
}

pub fn field_opt_f64(v: Option<f64>) -> String {
    match v {
        Some(v) => field_f64(v),
        None => String::new(),
    }
}
