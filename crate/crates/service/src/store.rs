//! On-disk persistence: content-addressed upload blobs plus two append-only
//! JSON-lines logs, one for reports and one for feedback.
//!
//! ```text
//! <data_dir>/blobs/<sha256>      original upload bytes
//! <data_dir>/reports.jsonl       ReportLogEntry per line
//! <data_dir>/feedback.jsonl      FeedbackEvent per line
//! ```
//!
//! All appends go through one mutex, so lines never interleave.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use reportrank_core::corpus::{AnnotationSet, Document};
use reportrank_core::ingest::InputFormat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Parsing,
    Scored,
    Failed,
}

/// A stored upload. Scores are not persisted; they are a pure function of
/// the active checkpoint and the document and get recomputed after restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub doc_id: String,
    /// The id found inside the upload, if the format carries one.
    pub source_id: String,
    pub format: InputFormat,
    pub blob: String,
    pub status: ReportStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: String,
    pub document: Document,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_annotations: Option<AnnotationSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum ReportLogEntry {
    Created(ReportRecord),
    Status {
        doc_id: String,
        status: ReportStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub event_id: String,
    pub doc_id: String,
    pub req_id: String,
    pub segment_id: String,
    pub verdict: Verdict,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
}

/// Contents recovered from disk at startup.
#[derive(Debug, Default)]
pub struct Replayed {
    pub reports: HashMap<String, ReportRecord>,
    pub feedback: Vec<FeedbackEvent>,
    /// Lines that could not be decoded (e.g. a write torn by a crash).
    pub skipped_lines: usize,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    writer: Mutex<()>,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Store {
    pub fn open(dir: &Path) -> io::Result<(Store, Replayed)> {
        fs::create_dir_all(dir.join("blobs"))?;
        let store = Store {
            dir: dir.to_path_buf(),
            writer: Mutex::new(()),
        };
        let mut replayed = Replayed::default();
        for_each_line(&store.reports_path(), |line| match serde_json::from_str::<ReportLogEntry>(line) {
            Ok(ReportLogEntry::Created(rec)) => {
                replayed.reports.insert(rec.doc_id.clone(), rec);
            }
            Ok(ReportLogEntry::Status { doc_id, status, error }) => {
                if let Some(rec) = replayed.reports.get_mut(&doc_id) {
                    rec.status = status;
                    rec.error = error;
                }
            }
            Err(_) => replayed.skipped_lines += 1,
        })?;
        for_each_line(&store.feedback_path(), |line| match serde_json::from_str::<FeedbackEvent>(line) {
            Ok(ev) => replayed.feedback.push(ev),
            Err(_) => replayed.skipped_lines += 1,
        })?;
        Ok((store, replayed))
    }

    fn reports_path(&self) -> PathBuf {
        self.dir.join("reports.jsonl")
    }

    fn feedback_path(&self) -> PathBuf {
        self.dir.join("feedback.jsonl")
    }

    /// Stores `bytes` under their SHA-256 and returns the hash.
    pub fn put_blob(&self, bytes: &[u8]) -> io::Result<String> {
        let hash = content_hash(bytes);
        let path = self.dir.join("blobs").join(&hash);
        if !path.exists() {
            let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, bytes)?;
            fs::rename(tmp, &path)?;
        }
        Ok(hash)
    }

    pub fn read_blob(&self, hash: &str) -> io::Result<Vec<u8>> {
        if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a blob hash"));
        }
        fs::read(self.dir.join("blobs").join(hash))
    }

    pub fn append_report(&self, entry: &ReportLogEntry) -> io::Result<()> {
        self.append(&self.reports_path(), &serde_json::to_string(entry)?)
    }

    pub fn append_feedback(&self, event: &FeedbackEvent) -> io::Result<()> {
        self.append(&self.feedback_path(), &serde_json::to_string(event)?)
    }

    fn append(&self, path: &Path, line: &str) -> io::Result<()> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        file.write_all(&buf)?;
        file.flush()
    }
}

fn for_each_line(path: &Path, mut f: impl FnMut(&str)) -> io::Result<()> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            f(&line);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use reportrank_core::corpus::{Segment, SegmentKind, SourceFormat};

    fn record(id: &str) -> ReportRecord {
        ReportRecord {
            doc_id: id.into(),
            source_id: "src".into(),
            format: InputFormat::Json,
            blob: content_hash(b"x"),
            status: ReportStatus::Parsing,
            error: None,
            created_at: "2024-01-01T00:00:00Z".into(),
            document: Document::new(id, "de", SourceFormat::Json, vec![Segment::new("a", SegmentKind::Paragraph, "t")])
                .unwrap(),
            reference_annotations: None,
        }
    }

    #[test]
    fn replays_latest_status() {
        let dir = tempfile::tempdir().unwrap();
        let (store, replayed) = Store::open(dir.path()).unwrap();
        assert!(replayed.reports.is_empty());
        store.append_report(&ReportLogEntry::Created(record("r1"))).unwrap();
        store
            .append_report(&ReportLogEntry::Status {
                doc_id: "r1".into(),
                status: ReportStatus::Failed,
                error: Some("boom".into()),
            })
            .unwrap();
        let (_, replayed) = Store::open(dir.path()).unwrap();
        let rec = &replayed.reports["r1"];
        assert_eq!(rec.status, ReportStatus::Failed);
        assert_eq!(rec.error.as_deref(), Some("boom"));
    }

    #[test]
    fn torn_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = Store::open(dir.path()).unwrap();
        let ev = FeedbackEvent {
            event_id: "fb-1".into(),
            doc_id: "d".into(),
            req_id: "r".into(),
            segment_id: "s".into(),
            verdict: Verdict::Relevant,
            timestamp: "t".into(),
            client: None,
        };
        store.append_feedback(&ev).unwrap();
        fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join("feedback.jsonl"))
            .unwrap()
            .write_all(b"{\"event_id\": \"fb-2\", \"doc")
            .unwrap();
        let (_, replayed) = Store::open(dir.path()).unwrap();
        assert_eq!(replayed.feedback, vec![ev]);
        assert_eq!(replayed.skipped_lines, 1);
    }

    #[test]
    fn blobs_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = Store::open(dir.path()).unwrap();
        let h = store.put_blob(b"hello").unwrap();
        assert_eq!(h, content_hash(b"hello"));
        assert_eq!(store.put_blob(b"hello").unwrap(), h);
        assert_eq!(store.read_blob(&h).unwrap(), b"hello");
        assert!(store.read_blob("../etc/passwd").is_err());
    }
}
