//! Writing an envelope to disk: one CSV per table plus `envelope.json`.

use crate::run::{Envelope, Table};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV text of a table. Floats use the shortest representation that round-trips.
pub fn table_csv(table: &Table) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(ToString::to_string))?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Writes the requested formats into `dir`, overwriting earlier runs. Returns the files written.
pub fn emit(envelope: &Envelope, dir: &Path, csv_out: bool, json_out: bool) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if csv_out {
        for table in &envelope.tables {
            let path = dir.join(format!("{}.csv", table.name));
            let bytes = table_csv(table).map_err(|source| EmitError::Csv {
                path: path.clone(),
                source,
            })?;
            fs::write(&path, bytes).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    if json_out {
        let path = dir.join("envelope.json");
        let text = serde_json::to_string_pretty(&envelope.to_json()).expect("envelope serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
