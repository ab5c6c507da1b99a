//! JSONL persistence. Writers emit canonical (sorted-key) JSON, one record
//! per line, LF terminated, so equal data always produces equal bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::{Document, InteractionRecord, LabeledRecord, Query};
use crate::error::{Error, Result};
use crate::hashing::canonical_json;

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        out.write_all(canonical_json(record)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a full JSONL file. A malformed line is a corrupt-artifact error that
/// names the file and line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| {
        Error::corrupt(path.display().to_string(), format!("cannot open: {e}"))
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| {
            Error::corrupt(
                path.display().to_string(),
                format!("line {}: {e}", lineno + 1),
            )
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let queries: Vec<Query> = read_jsonl(path)?;
    for q in &queries {
        q.validate()
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?;
    }
    Ok(queries)
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    for d in &docs {
        d.validate()
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?;
    }
    Ok(docs)
}

pub fn read_interactions(path: &Path) -> Result<Vec<InteractionRecord>> {
    let recs: Vec<InteractionRecord> = read_jsonl(path)?;
    for r in &recs {
        r.validate()
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?;
    }
    Ok(recs)
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledRecord>> {
    read_jsonl(path)
}
