//! Unit-length language embeddings for concept phrases.
//!
//! Real sentence embeddings arrive as precomputed tables; the seeded
//! fallback provider stands in when no table is available.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::norm_key;

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("no embedding for '{0}'")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, got {got} (line {line})")]
    DimensionMismatch { expected: usize, got: usize, line: usize },
    #[error("parse error on line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("embedding has zero or non-finite norm")]
    Degenerate,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `values` to unit L2 norm.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(EmbeddingError::Degenerate);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier stored in checkpoints.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Standard-normal draws seeded by (seed, hash of normalized text), then
/// normalized.
pub fn fallback_embed(text: &str, seed: u64, dim: usize) -> EmbeddingVector {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(norm_key(text).as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    EmbeddingVector::normalized(values).expect("gaussian draw has nonzero norm")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl FallbackEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }
}

impl EmbeddingProvider for FallbackEmbedder {
    fn id(&self) -> String {
        format!("fallback:seed={}:dim={}", self.seed, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if norm_key(text).is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        Ok(fallback_embed(text, self.seed, self.dim))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(&norm_key(text))
    }

    pub fn insert(&mut self, text: &str, v: EmbeddingVector) -> Result<(), EmbeddingError> {
        if self.vectors.is_empty() && self.dim == 0 {
            self.dim = v.dim();
        }
        if v.dim() != self.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: self.dim, got: v.dim(), line: 0 });
        }
        self.vectors.insert(norm_key(text), v);
        Ok(())
    }

    /// One line per entry, sorted by text: `text<TAB>v1,v2,...`.
    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut w = BufWriter::new(File::create(path)?);
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        for k in keys {
            let vals: Vec<String> = self.vectors[k].values().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{k}\t{}", vals.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a tab-separated embedding table. Vectors are renormalized.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    let reader = BufReader::new(File::open(path)?);
    let mut table = EmbeddingTable::new(0);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (text, nums) = line.split_once('\t').ok_or_else(|| EmbeddingError::ParseError {
            line: lineno,
            reason: "missing tab separator".into(),
        })?;
        let values = nums
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EmbeddingError::ParseError { line: lineno, reason: e.to_string() })?;
        if table.dim != 0 && values.len() != table.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: table.dim, got: values.len(), line: lineno });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::ParseError { line: lineno, reason: "non-finite value".into() });
        }
        let v = EmbeddingVector::normalized(values)
            .map_err(|e| EmbeddingError::ParseError { line: lineno, reason: e.to_string() })?;
        table.insert(text, v)?;
    }
    Ok(table)
}

/// Table lookups; misses either fail (strict) or use the fallback.
pub struct TableEmbedder {
    table: EmbeddingTable,
    name: String,
    strict: bool,
    fallback: FallbackEmbedder,
}

impl TableEmbedder {
    pub fn new(table: EmbeddingTable, name: &str, strict: bool, fallback_seed: u64) -> Self {
        let dim = table.dim();
        Self { table, name: name.to_string(), strict, fallback: FallbackEmbedder::new(fallback_seed, dim) }
    }
}

impl EmbeddingProvider for TableEmbedder {
    fn id(&self) -> String {
        if self.strict {
            format!("table:{}", self.name)
        } else {
            format!("table:{}+{}", self.name, self.fallback.id())
        }
    }

    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if norm_key(text).is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        match self.table.get(text) {
            Some(v) => Ok(v.clone()),
            None if self.strict => Err(EmbeddingError::MissingEmbedding(text.to_string())),
            None => self.fallback.embed(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(v: &EmbeddingVector) -> f64 {
        v.values().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn fallback_is_seeded_and_normalized() {
        let a = fallback_embed("fragile", 7, DEFAULT_DIM);
        let b = fallback_embed("fragile", 7, DEFAULT_DIM);
        assert_eq!(a, b);
        assert_ne!(a, fallback_embed("fragile", 8, DEFAULT_DIM));
        assert_eq!(a, fallback_embed("Fragile ", 7, DEFAULT_DIM));
        assert_eq!(a.dim(), 768);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_load_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        let v1: Vec<String> = (0..768).map(|i| format!("{}", (i % 7) as f64 - 3.0)).collect();
        let v2: Vec<String> = (0..768).map(|i| format!("{}", (i % 5) as f64 * 0.5)).collect();
        std::fs::write(&path, format!("involves an open flame\t{}\nis fragile\t{}\n", v1.join(","), v2.join(","))).unwrap();
        let table = load_embedding_table(&path).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.dim(), 768);
        let emb = TableEmbedder::new(table, "t", true, 0);
        let v = emb.embed("Involves an  open flame").unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-12);
        assert!(matches!(emb.embed("is heavy"), Err(EmbeddingError::MissingEmbedding(_))));

        let saved = dir.path().join("saved.tsv");
        let table = load_embedding_table(&path).unwrap();
        table.save(&saved).unwrap();
        assert_eq!(load_embedding_table(&saved).unwrap().len(), 2);
    }

    #[test]
    fn table_dimension_mismatch_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        let a: Vec<String> = vec!["1".into(); 768];
        let b: Vec<String> = vec!["1".into(); 512];
        std::fs::write(&path, format!("a\t{}\nb\t{}\n", a.join(","), b.join(","))).unwrap();
        assert!(matches!(
            load_embedding_table(&path),
            Err(EmbeddingError::DimensionMismatch { expected: 768, got: 512, line: 2 })
        ));
        std::fs::write(&path, "").unwrap();
        assert!(load_embedding_table(&path).unwrap().is_empty());
    }

    #[test]
    fn lenient_table_falls_back() {
        let emb = TableEmbedder::new(EmbeddingTable::new(16), "t", false, 3);
        assert_eq!(emb.embed("x").unwrap(), fallback_embed("x", 3, 16));
    }

    proptest! {
        #[test]
        fn fallback_unit_norm(text in "[a-zA-Z ]{1,30}", seed in any::<u64>()) {
            prop_assume!(!norm_key(&text).is_empty());
            let v = FallbackEmbedder::new(seed, 64).embed(&text).unwrap();
            prop_assert!((norm(&v) - 1.0).abs() < 1e-6);
        }
    }
}
