//! Line-delimited JSON helpers shared by every artifact format.
//!
//! Artifacts may start with metadata lines whose single object key begins
//! with an underscore (`{"_provenance": ...}`); readers skip them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CorpusError, LineError};

pub fn is_metadata_line(line: &str) -> bool {
    line.trim_start().starts_with("{\"_")
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses every non-metadata line of `path` with `parse`, collecting all
/// failures with their 1-based line numbers.
pub fn read_lines_with<T, F>(path: &Path, mut parse: F) -> Result<Vec<T>, CorpusError>
where
    F: FnMut(&str, usize) -> Result<T, String>,
{
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let number = i + 1;
        if line.trim().is_empty() || is_metadata_line(&line) {
            continue;
        }
        match parse(&line, number) {
            Ok(v) => out.push(v),
            Err(message) => errors.push(LineError {
                line: number,
                message,
            }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(CorpusError::Schema(errors))
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    read_lines_with(path, |line, _| {
        serde_json::from_str(line).map_err(|e| e.to_string())
    })
}

/// Writes `header` lines verbatim followed by one JSON record per line.
pub fn write_jsonl<'a, T, I>(path: &Path, header: &[String], records: I) -> Result<(), CorpusError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for line in header {
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    for record in records {
        let json =
            serde_json::to_string(record).map_err(|e| CorpusError::Serialize(e.to_string()))?;
        writeln!(w, "{json}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
