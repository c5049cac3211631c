//! Text formats: the memory bank, region embedding records and canonical
//! phrase embeddings. Embeddings travel as base64 of little-endian f32s.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use semsplat::bank::BankError;
use semsplat::{BankEntry, Embedding, Label, MemoryBank, ViewEmbedding};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BANK_FORMAT: &str = "semsplat-bank";
pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TextFormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format `{found}` is not `{expected}`")]
    Format { found: String, expected: &'static str },
    #[error("unsupported version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("bad embedding payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Bank(#[from] BankError),
}

pub fn encode_f32s(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32s(text: &str) -> Result<Vec<f32>, TextFormatError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| TextFormatError::Payload(e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(TextFormatError::Payload(format!("{} bytes is not a whole number of f32", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct BankDoc {
    format: String,
    version: u32,
    seed: u64,
    lattice_m: usize,
    dim: usize,
    views: usize,
    #[serde(default)]
    reject_radius: Option<f32>,
    entries: Vec<EntryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryDoc {
    label: Label,
    id: [f32; 3],
    /// `null` marks the zero sentinel.
    views: Vec<Option<String>>,
}

pub fn bank_to_json(bank: &MemoryBank) -> String {
    let doc = BankDoc {
        format: BANK_FORMAT.into(),
        version: BANK_VERSION,
        seed: bank.seed(),
        lattice_m: bank.lattice_m(),
        dim: bank.dim(),
        views: bank.view_count(),
        reject_radius: bank.reject_radius(),
        entries: bank
            .entries()
            .iter()
            .map(|e| EntryDoc {
                label: e.label,
                id: e.id,
                views: e
                    .views
                    .iter()
                    .map(|v| (!v.is_zero()).then(|| encode_f32s(&v.0)))
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("bank serializes")
}

pub fn bank_from_json(text: &str) -> Result<MemoryBank, TextFormatError> {
    let doc: BankDoc = serde_json::from_str(text)?;
    if doc.format != BANK_FORMAT {
        return Err(TextFormatError::Format {
            found: doc.format,
            expected: BANK_FORMAT,
        });
    }
    if doc.version != BANK_VERSION {
        return Err(TextFormatError::Version {
            found: doc.version,
            expected: BANK_VERSION,
        });
    }
    let mut entries = Vec::with_capacity(doc.entries.len());
    for e in doc.entries {
        let views = e
            .views
            .iter()
            .map(|v| match v {
                Some(text) => decode_f32s(text).map(Embedding),
                None => Ok(Embedding::zeros(doc.dim)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(BankEntry {
            label: e.label,
            id: e.id,
            views,
        });
    }
    let bank = MemoryBank::from_parts(doc.dim, doc.lattice_m, doc.seed, doc.views, entries)?;
    Ok(bank.with_reject_radius(doc.reject_radius))
}

pub fn write_bank(path: &Path, bank: &MemoryBank) -> Result<(), TextFormatError> {
    std::fs::write(path, bank_to_json(bank))?;
    Ok(())
}

pub fn read_bank(path: &Path) -> Result<MemoryBank, TextFormatError> {
    bank_from_json(&std::fs::read_to_string(path)?)
}

/// Region embeddings as emitted by the preprocessing sidecar: one record
/// per (view, compacted label) pair that is visible in that view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecords {
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub view: usize,
    pub label: Label,
    pub embedding: String,
}

impl EmbeddingRecords {
    pub fn from_view_embeddings(dim: usize, records: &[ViewEmbedding]) -> Self {
        Self {
            dim,
            records: records
                .iter()
                .map(|r| EmbeddingRecord {
                    view: r.view,
                    label: r.label,
                    embedding: encode_f32s(&r.embedding.0),
                })
                .collect(),
        }
    }

    pub fn to_view_embeddings(&self) -> Result<Vec<ViewEmbedding>, TextFormatError> {
        self.records
            .iter()
            .map(|r| {
                Ok(ViewEmbedding {
                    view: r.view,
                    label: r.label,
                    embedding: Embedding(decode_f32s(&r.embedding)?),
                })
            })
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self, TextFormatError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), TextFormatError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Canonical phrases and their embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonFile {
    pub phrases: Vec<String>,
    pub embeddings: Vec<String>,
}

impl CanonFile {
    pub fn new(phrases: &[String], embeddings: &[Embedding]) -> Self {
        Self {
            phrases: phrases.to_vec(),
            embeddings: embeddings.iter().map(|e| encode_f32s(&e.0)).collect(),
        }
    }

    pub fn embeddings(&self) -> Result<Vec<Embedding>, TextFormatError> {
        if self.phrases.len() != self.embeddings.len() {
            return Err(TextFormatError::Payload(format!(
                "{} phrases but {} embeddings",
                self.phrases.len(),
                self.embeddings.len()
            )));
        }
        self.embeddings.iter().map(|e| decode_f32s(e).map(Embedding)).collect()
    }

    pub fn read(path: &Path) -> Result<Self, TextFormatError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), TextFormatError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
