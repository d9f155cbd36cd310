use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::plan::Placement;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub subject_id: String,
    pub pair_id: String,
    /// Left-minus-right preference as entered, in `-3..=3`.
    pub raw_score: i8,
    /// Candidate-minus-anchor preference.
    pub stored_score: i8,
    pub timestamp_ms: u64,
    pub placement: Placement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<String>,
}

/// Append-only JSON-lines score log. Each record is one `write` of a full
/// line followed by `fsync`; a torn trailing line is discarded on reopen.
#[derive(Debug, Default)]
pub struct ScoreStore {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<ScoreRecord>,
}

impl ScoreStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        if path.exists() {
            let bytes = std::fs::read(path)?;
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                warn!("dropping torn trailing record in {}", path.display());
                let f = OpenOptions::new().write(true).open(path)?;
                f.set_len(complete as u64)?;
                f.sync_all()?;
            }
            for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
                if line.iter().all(|b| b.is_ascii_whitespace()) {
                    continue;
                }
                let r: ScoreRecord = serde_json::from_slice(line).map_err(|e| Error::Load {
                    path: path.to_path_buf(),
                    reason: format!("line {}: {e}", i + 1),
                })?;
                records.push(r);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(file),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, record: ScoreRecord) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.records.push(record);
        Ok(())
    }

    /// Every record ever appended, in order.
    pub fn log(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn contains(&self, subject_id: &str, pair_id: &str) -> bool {
        self.records.iter().any(|r| r.subject_id == subject_id && r.pair_id == pair_id)
    }

    /// Latest record per `(subject, pair)`; later submissions replace earlier.
    pub fn current(&self) -> Vec<ScoreRecord> {
        let mut latest: BTreeMap<(&str, &str), &ScoreRecord> = BTreeMap::new();
        for r in &self.records {
            latest.insert((&r.subject_id, &r.pair_id), r);
        }
        latest.into_values().cloned().collect()
    }

    pub fn export_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject_id", "pair_id", "raw_score", "stored_score", "timestamp_ms", "placement", "audit"])?;
        for r in self.current() {
            let placement = match r.placement {
                Placement::CandidateLeft => "candidate-left",
                Placement::AnchorLeft => "anchor-left",
            };
            w.write_record([
                r.subject_id.as_str(),
                &r.pair_id,
                &r.raw_score.to_string(),
                &r.stored_score.to_string(),
                &r.timestamp_ms.to_string(),
                placement,
                r.audit.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
