//! Append-only rating log with a last-write-wins projection.
//!
//! Writers serialize through one mutex that owns the log file. Readers clone
//! an `Arc` to the current projection and never wait on the writer.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use synvox_core::ratings::{write_ratings_csv, RatingRecord};

use crate::study::ReviewStudy;
use crate::ReviewError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub received_at_ms: u64,
    pub record: RatingRecord,
}

type Key = (String, String);

#[derive(Debug, Clone, Default)]
pub struct Projection {
    live: BTreeMap<Key, RatingRecord>,
    audit: BTreeMap<Key, Vec<LogEntry>>,
}

impl Projection {
    fn apply(&mut self, e: LogEntry) {
        let key = (e.record.item_id.clone(), e.record.rater_id.clone());
        self.live.insert(key.clone(), e.record.clone());
        self.audit.entry(key).or_default().push(e);
    }

    pub fn is_rated(&self, item_id: &str, rater_id: &str) -> bool {
        self.live.contains_key(&(item_id.to_string(), rater_id.to_string()))
    }

    /// Live records ordered by (item, rater).
    pub fn records(&self) -> Vec<RatingRecord> {
        self.live.values().cloned().collect()
    }

    pub fn audit(&self, item_id: &str, rater_id: &str) -> &[LogEntry] {
        self.audit
            .get(&(item_id.to_string(), rater_id.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn rated_by(&self, rater_id: &str) -> usize {
        self.live.keys().filter(|(_, r)| r == rater_id).count()
    }
}

struct Writer {
    file: File,
    next_seq: u64,
}

pub struct StudyStore {
    pub study: Arc<ReviewStudy>,
    log_path: PathBuf,
    snapshot: RwLock<Arc<Projection>>,
    writer: Mutex<Writer>,
}

impl StudyStore {
    /// Open (or create) `{log_dir}/{study_id}.jsonl` and replay it.
    ///
    /// A torn final line, left by a crash mid-append, is dropped with a warning;
    /// a bad line anywhere else is an error.
    pub fn open(study: ReviewStudy, log_dir: &Path) -> Result<Self, ReviewError> {
        std::fs::create_dir_all(log_dir)?;
        let log_path = log_dir.join(format!("{}.jsonl", study.study_id));
        let mut proj = Projection::default();
        let mut next_seq = 0;
        if log_path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&log_path)?).lines().collect::<Result<_, _>>()?;
            let n = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LogEntry>(&line) {
                    Ok(e) => {
                        next_seq = next_seq.max(e.seq + 1);
                        proj.apply(e);
                    }
                    Err(e) if i + 1 == n => {
                        tracing::warn!("{}: dropping torn last line: {e}", log_path.display());
                    }
                    Err(e) => {
                        return Err(ReviewError::CorruptLog {
                            path: log_path.clone(),
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(StudyStore {
            study: Arc::new(study),
            log_path,
            snapshot: RwLock::new(Arc::new(proj)),
            writer: Mutex::new(Writer { file, next_seq }),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn snapshot(&self) -> Arc<Projection> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Append a validated record and publish the new projection. Returns the
    /// audit trail length for the (item, rater) pair.
    pub fn append(&self, record: RatingRecord) -> Result<usize, ReviewError> {
        let mut w = self.writer.lock().expect("writer lock poisoned");
        let entry = LogEntry {
            seq: w.next_seq,
            received_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            record,
        };
        let mut line = serde_json::to_string(&entry).expect("log entries serialize");
        line.push('\n');
        w.file.write_all(line.as_bytes())?;
        w.file.sync_data()?;
        w.next_seq += 1;

        let mut next = (*self.snapshot()).clone();
        let key = (entry.record.item_id.clone(), entry.record.rater_id.clone());
        next.apply(entry);
        let len = next.audit.get(&key).map_or(0, Vec::len);
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
        Ok(len)
    }

    pub fn export_csv(&self) -> Result<Vec<u8>, ReviewError> {
        let mut buf = Vec::new();
        write_ratings_csv(&mut buf, &self.snapshot().records())?;
        Ok(buf)
    }
}
