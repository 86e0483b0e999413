//! Binary model files: `TAACO`, a version byte, a u64 little-endian header
//! length, a JSON header, then every tensor as little-endian f64 in
//! manifest order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::TaacoModel;
use super::training::{TrainConfig, TrainedModel};
use crate::commonsense::ConceptVocabulary;
use crate::domain::StateSpace;
use crate::neuralnet::Module;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"TAACO";
pub const CHECKPOINT_VERSION: u8 = 1;

const PREFIX: usize = CHECKPOINT_MAGIC.len() + 1 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {0} is not supported")]
    VersionUnsupported(u8),
    #[error("tensor manifest does not match the model: {0}")]
    ManifestMismatch(String),
    #[error("checkpoint is truncated: {0}")]
    TruncatedFile(String),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the data section.
    offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    hyperparameters: TrainConfig,
    language_dim: usize,
    state_variables: Vec<String>,
    vocabulary: ConceptVocabulary,
    embedding_provider: String,
    tensors: Vec<ManifestEntry>,
}

pub fn encode_checkpoint(trained: &TrainedModel) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    trained.model.visit(&mut |p| {
        tensors.push(ManifestEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset: data.len() as u64 });
        for v in p.value.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
    });
    let header = Header {
        hyperparameters: trained.config,
        language_dim: trained.model.language_dim(),
        state_variables: trained.state_space.variables().to_vec(),
        vocabulary: trained.vocabulary.clone(),
        embedding_provider: trained.embedder_id.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREFIX + header.len() + data.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel, CheckpointError> {
    let m = CHECKPOINT_MAGIC.len();
    if bytes[..bytes.len().min(m)] != CHECKPOINT_MAGIC[..bytes.len().min(m)] {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < PREFIX {
        return Err(CheckpointError::TruncatedFile(format!("{} bytes is shorter than the file prefix", bytes.len())));
    }
    if bytes[m] != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionUnsupported(bytes[m]));
    }
    let header_len = u64::from_le_bytes(bytes[m + 1..PREFIX].try_into().expect("8 bytes")) as usize;
    let data_start = PREFIX
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| CheckpointError::TruncatedFile(format!("header of {header_len} bytes runs past the end")))?;
    let header: Header = serde_json::from_slice(&bytes[PREFIX..data_start])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let data = &bytes[data_start..];

    let state_space =
        StateSpace::new(&header.state_variables).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut model = TaacoModel::new(header.hyperparameters.model, state_space.len(), header.language_dim)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut expected = Vec::new();
    let mut offset = 0u64;
    model.visit(&mut |p| {
        expected.push(ManifestEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset });
        offset += 8 * p.len() as u64;
    });
    if expected.len() != header.tensors.len() {
        return Err(CheckpointError::ManifestMismatch(format!(
            "{} tensors listed, model has {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    for (want, got) in expected.iter().zip(&header.tensors) {
        if want.name != got.name || want.shape != got.shape || want.offset != got.offset {
            return Err(CheckpointError::ManifestMismatch(format!(
                "entry '{}' {:?} @{} where '{}' {:?} @{} was expected",
                got.name, got.shape, got.offset, want.name, want.shape, want.offset
            )));
        }
    }
    let total = offset as usize;
    if data.len() < total {
        let short = expected
            .iter()
            .find(|e| e.offset as usize + 8 * e.shape.iter().product::<usize>() > data.len())
            .expect("some tensor overruns");
        return Err(CheckpointError::TruncatedFile(format!(
            "tensor '{}' {:?} needs bytes up to {}, data section has {}",
            short.name,
            short.shape,
            short.offset as usize + 8 * short.shape.iter().product::<usize>(),
            data.len()
        )));
    }
    if data.len() > total {
        return Err(CheckpointError::ManifestMismatch(format!("{} trailing bytes after the last tensor", data.len() - total)));
    }
    let mut cursor = 0;
    model.visit_mut(&mut |p| {
        for v in p.value.data_mut() {
            *v = f64::from_le_bytes(data[cursor..cursor + 8].try_into().expect("8 bytes"));
            cursor += 8;
        }
    });
    Ok(TrainedModel {
        config: header.hyperparameters,
        state_space,
        vocabulary: header.vocabulary,
        embedder_id: header.embedding_provider,
        model,
    })
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_checkpoint(trained: &TrainedModel, path: &Path) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(trained);
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
