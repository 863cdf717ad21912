use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::parse::RaterResponse;
use super::RaterError;
use crate::codebook::VariableId;

/// Content-addressed key of one rating request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub String);

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// SHA-256 over (prompt version, model, temperature, variable, SHA-256 of the
/// post text), fields separated by 0x1f.
pub fn cache_key(
    prompt_version: &str,
    model_id: &str,
    temperature: f64,
    variable: VariableId,
    post_text: &str,
) -> CacheKey {
    let text_hash = hex::encode(Sha256::digest(post_text.as_bytes()));
    let material = format!(
        "{prompt_version}\u{1f}{model_id}\u{1f}{temperature:?}\u{1f}{}\u{1f}{text_hash}",
        variable.ordinal()
    );
    CacheKey(hex::encode(Sha256::digest(material.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub value: RaterResponse,
    pub created_at: DateTime<Utc>,
}

/// Source of `created_at` stamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        }
    }
}

/// Thread-safe rating cache. Identical keys carry identical values, so
/// concurrent inserts resolve last-writer-wins.
#[derive(Debug, Default)]
pub struct RatingCache {
    records: RwLock<HashMap<CacheKey, CacheRecord>>,
}

impl RatingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = CacheRecord>) -> Self {
        let cache = Self::new();
        for r in records {
            cache.insert(r);
        }
        cache
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheRecord> {
        self.records.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, record: CacheRecord) {
        self.records.write().expect("cache lock").insert(record.key.clone(), record);
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records ordered by key.
    pub fn records(&self) -> Vec<CacheRecord> {
        let mut out: Vec<CacheRecord> = self.records.read().expect("cache lock").values().cloned().collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    /// Write every record as one JSON line, ordered by key.
    pub fn write_archive(&self, path: &Path) -> Result<(), RaterError> {
        write_records(path, &self.records())
    }

    pub fn load_archive(path: &Path) -> Result<Self, RaterError> {
        Ok(Self::from_records(read_records(path)?))
    }

    /// Load if the archive exists, else start empty.
    pub fn open(path: &Path) -> Result<Self, RaterError> {
        if path.exists() {
            Self::load_archive(path)
        } else {
            Ok(Self::new())
        }
    }

    /// Append a single record to an archive file.
    pub fn append_to(path: &Path, record: &CacheRecord) -> Result<(), RaterError> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(record).map_err(|e| RaterError::Io(e.to_string()))?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

pub(crate) fn write_records(path: &Path, records: &[CacheRecord]) -> Result<(), RaterError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| RaterError::Io(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_records(path: &Path) -> Result<Vec<CacheRecord>, RaterError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RaterError::Archive {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
