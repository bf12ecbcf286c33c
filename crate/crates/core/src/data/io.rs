//! Dataset and standardizer file I/O.
//!
//! A dataset file holds one record per line as self-describing JSON:
//! `{"id": "...", "env": 1|2|3, "frames": [{"pose": [[x,y,c] × 17],
//! "emotion": [7 floats], "label": 0|1}, ...]}`. Pose coordinates are
//! box-normalized (pre-standardization). The fitted standardizer lives in
//! a JSON sidecar of 34 means and 34 standard deviations so inference can
//! reuse training statistics bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataError, SequenceRecord, Standardizer};

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<SequenceRecord>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let mut record: SequenceRecord =
            serde_path_to_error::deserialize(&mut de).map_err(|e| DataError::Malformed {
                line: lineno,
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        for (fi, frame) in record.frames.iter().enumerate() {
            if let Err((field, message)) = frame.validate() {
                return Err(DataError::Malformed {
                    line: lineno,
                    field: format!("frames[{}].{}", fi, field),
                    message,
                });
            }
        }
        record.recompute_onset();
        records.push(record);
    }
    Ok(records)
}

pub fn save_dataset(records: &[SequenceRecord], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| DataError::Invalid(format!("serialize record {}: {}", record.id, e)))?;
        writeln!(writer, "{}", line).map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn save_standardizer(s: &Standardizer, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    s.validate()?;
    let json = serde_json::to_string_pretty(s)
        .map_err(|e| DataError::Invalid(format!("serialize standardizer: {}", e)))?;
    std::fs::write(path, json).map_err(|e| io_err(path, e))
}

pub fn load_standardizer(path: impl AsRef<Path>) -> Result<Standardizer, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let s: Standardizer = serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        line: e.line(),
        field: "standardizer".into(),
        message: e.to_string(),
    })?;
    s.validate()?;
    Ok(s)
}
