//! CSV tables with a provenance comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ampr_core::{Error, Result};
use sha2::{Digest, Sha256};

pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }
}

/// Shortest round-trip form, scientific outside [1e-4, 1e15); blank when
/// missing or not finite.
pub fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v == 0.0 => "0".into(),
        Some(v) if v.is_finite() && (1e-4..1e15).contains(&v.abs()) => format!("{v}"),
        Some(v) if v.is_finite() => format!("{v:e}"),
        _ => String::new(),
    }
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn provenance(hash: &str, seed: u64) -> String {
    format!("# config_sha256={hash} seed={seed} version={}", env!("CARGO_PKG_VERSION"))
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

pub fn write_table(dir: &Path, table: &Table, provenance: &str) -> Result<()> {
    let file = File::create(dir.join(&table.name)).map_err(|e| io(format!("{}: {e}", table.name)))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{provenance}")?;
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(&table.header).map_err(io)?;
        for r in &table.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}
