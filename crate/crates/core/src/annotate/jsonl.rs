//! Line-delimited record files.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::DatasetRecord;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every record; blank lines are skipped.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, JsonlError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Appends records, skipping ids already present in the file.
///
/// On open, existing lines are scanned for ids. A torn final line left by
/// an interrupted run is ignored and the next append starts on a new line.
#[derive(Debug)]
pub struct RecordWriter {
    path: PathBuf,
    file: File,
    seen: HashSet<String>,
    written: usize,
    skipped: usize,
}

impl RecordWriter {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err(&path))?;
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<serde_json::Value>(line) {
                Ok(v) => {
                    if let Some(id) = v.get("record_id").and_then(|v| v.as_str()) {
                        seen.insert(id.to_string());
                    }
                }
                Err(e) => log::warn!(
                    "{}:{}: ignoring unreadable line: {e}",
                    path.display(),
                    i + 1
                ),
            }
        }
        if !text.is_empty() && !text.ends_with('\n') {
            file.seek(SeekFrom::End(0)).map_err(io_err(&path))?;
            file.write_all(b"\n").map_err(io_err(&path))?;
        }
        Ok(Self {
            path,
            file,
            seen,
            written: 0,
            skipped: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, record_id: &str) -> bool {
        self.seen.contains(record_id)
    }

    /// Returns false when the record id was already present.
    pub fn write(&mut self, record: &DatasetRecord) -> Result<bool, JsonlError> {
        if self.seen.contains(&record.record_id) {
            self.skipped += 1;
            return Ok(false);
        }
        append_line(&mut self.file, record).map_err(io_err(&self.path))?;
        self.seen.insert(record.record_id.clone());
        self.written += 1;
        Ok(true)
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

/// Writes `value` as one JSON line and flushes.
pub(crate) fn append_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(std::io::Error::other)?;
    line.push(b'\n');
    w.write_all(&line)?;
    w.flush()
}

/// Appends one JSON line to `path`, creating it if needed.
pub fn append_jsonl<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), JsonlError> {
    let path = path.as_ref();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    append_line(&mut f, value).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_plan;

    fn rec(i: usize) -> DatasetRecord {
        let plan = parse_plan("[remove] Remove the <cup>", "c").unwrap();
        DatasetRecord::from_plan("s", format!("img/{i}.png"), "c", &plan)
    }

    #[test]
    fn resume_skips_existing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/records.jsonl");
        let mut w = RecordWriter::open(&path).unwrap();
        for i in 0..3 {
            assert!(w.write(&rec(i)).unwrap());
        }
        assert!(!w.write(&rec(1)).unwrap());
        drop(w);
        let mut w = RecordWriter::open(&path).unwrap();
        for i in 0..5 {
            w.write(&rec(i)).unwrap();
        }
        assert_eq!((w.written(), w.skipped()), (2, 3));
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back[4], rec(4));
    }

    #[test]
    fn torn_tail_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let first = serde_json::to_string(&rec(0)).unwrap();
        std::fs::write(&path, format!("{first}\n{{\"record_id\":\"trunc")).unwrap();
        let mut w = RecordWriter::open(&path).unwrap();
        assert!(w.contains(&rec(0).record_id));
        w.write(&rec(1)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let last = text.lines().last().unwrap();
        assert_eq!(serde_json::from_str::<DatasetRecord>(last).unwrap(), rec(1));
        assert!(matches!(
            read_records(&path),
            Err(JsonlError::Parse { line: 2, .. })
        ));
    }
}
