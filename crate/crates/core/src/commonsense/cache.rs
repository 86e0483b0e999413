//! Append-only store of raw 1–10 match scores, keyed by scorer.
//!
//! The file form is newline-delimited JSON, one [`ScoreCacheEntry`] per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::CommonsenseError;
use crate::domain::{norm_key, ComponentType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCacheEntry {
    pub scorer_id: String,
    pub component_type: ComponentType,
    pub component_text: String,
    pub concept_text: String,
    pub raw_score: u8,
}

impl ScoreCacheEntry {
    pub fn new(
        scorer_id: &str,
        component_type: ComponentType,
        component: &str,
        concept: &str,
        raw_score: u8,
    ) -> Self {
        Self {
            scorer_id: scorer_id.to_string(),
            component_type,
            component_text: norm_key(component),
            concept_text: norm_key(concept),
            raw_score: raw_score.clamp(1, 10),
        }
    }

    fn key(&self) -> CacheKey {
        CacheKey {
            scorer_id: self.scorer_id.clone(),
            component_type: self.component_type,
            component: self.component_text.clone(),
            concept: self.concept_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub scorer_id: String,
    pub component_type: ComponentType,
    pub component: String,
    pub concept: String,
}

impl CacheKey {
    pub fn new(scorer_id: &str, component_type: ComponentType, component: &str, concept: &str) -> Self {
        Self {
            scorer_id: scorer_id.to_string(),
            component_type,
            component: norm_key(component),
            concept: norm_key(concept),
        }
    }
}

/// Concurrent reads, serialized appends. When opened on a file, every new
/// entry is appended to it immediately.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: RwLock<HashMap<CacheKey, u8>>,
    sink: Mutex<Option<BufWriter<File>>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScoreCacheEntry>) -> Self {
        let cache = Self::in_memory();
        for e in entries {
            cache.insert(e).expect("in-memory insert cannot fail");
        }
        cache
    }

    /// Reads `path` without keeping it open for appends.
    pub fn load(path: &Path) -> Result<Self, CommonsenseError> {
        let cache = Self::in_memory();
        cache.read_file(path)?;
        Ok(cache)
    }

    /// Loads existing entries (if the file exists) and appends new ones to it.
    pub fn open(path: &Path) -> Result<Self, CommonsenseError> {
        let cache = Self::in_memory();
        if path.exists() {
            cache.read_file(path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        *cache.sink.lock().expect("cache sink poisoned") = Some(BufWriter::new(file));
        Ok(cache)
    }

    fn read_file(&self, path: &Path) -> Result<(), CommonsenseError> {
        let reader = BufReader::new(File::open(path)?);
        let mut map = self.map.write().expect("cache lock poisoned");
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ScoreCacheEntry = serde_json::from_str(&line).map_err(|err| {
                CommonsenseError::Parse(format!("{}:{}: {err}", path.display(), lineno + 1))
            })?;
            if !(1..=10).contains(&e.raw_score) {
                return Err(CommonsenseError::Parse(format!(
                    "{}:{}: raw_score {} outside 1..=10",
                    path.display(),
                    lineno + 1,
                    e.raw_score
                )));
            }
            // first occurrence wins; the file is append-only
            map.entry(e.key()).or_insert(e.raw_score);
        }
        Ok(())
    }

    pub fn get(&self, key: &CacheKey) -> Option<u8> {
        self.map.read().expect("cache lock poisoned").get(key).copied()
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.get(key).is_some()
    }

    /// Stores the entry if its key is new. Returns whether it was added.
    pub fn insert(&self, entry: ScoreCacheEntry) -> Result<bool, CommonsenseError> {
        let key = entry.key();
        {
            let mut map = self.map.write().expect("cache lock poisoned");
            if map.contains_key(&key) {
                return Ok(false);
            }
            map.insert(key, entry.raw_score);
        }
        let mut sink = self.sink.lock().expect("cache sink poisoned");
        if let Some(w) = sink.as_mut() {
            serde_json::to_writer(&mut *w, &entry)
                .map_err(|e| CommonsenseError::Parse(e.to_string()))?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries in sorted key order.
    pub fn entries(&self) -> Vec<ScoreCacheEntry> {
        let map = self.map.read().expect("cache lock poisoned");
        let mut keys: Vec<&CacheKey> = map.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| ScoreCacheEntry {
                scorer_id: k.scorer_id.clone(),
                component_type: k.component_type,
                component_text: k.component.clone(),
                concept_text: k.concept.clone(),
                raw_score: map[k],
            })
            .collect()
    }

    /// Writes every entry, sorted, to a fresh file.
    pub fn write_all(&self, path: &Path) -> Result<(), CommonsenseError> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in self.entries() {
            serde_json::to_writer(&mut w, &e).map_err(|e| CommonsenseError::Parse(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}
