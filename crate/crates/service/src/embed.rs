//! Text embedders: the external `/embed` service and a deterministic mock.
//!
//! Wire contract: `POST {url}/embed` with `{"texts": [...]}` answers
//! `{"embeddings": [[f32; D], ...]}`, one unit vector per text.

use std::time::Duration;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use semsplat::synthetic::random_unit;
use semsplat::Embedding;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedder unreachable: {0}")]
    Unreachable(String),
    #[error("embedder returned {got} embeddings for {want} texts")]
    Count { want: usize, got: usize },
    #[error("embedder returned an invalid embedding: {0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f32>>,
}

/// Hashes `text` with `seed` into a unit vector of length `dim`.
pub fn mock_embedding(text: &str, dim: usize, seed: u64) -> Embedding {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    random_unit(&mut Xoshiro256PlusPlus::from_seed(key), dim)
}

#[derive(Debug, Clone)]
pub enum Embedder {
    Mock { dim: usize, seed: u64 },
    Http { url: String, client: reqwest::Client },
}

impl Embedder {
    pub fn mock(dim: usize, seed: u64) -> Self {
        Self::Mock { dim, seed }
    }

    pub fn http(url: &str) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client");
        Self::Http {
            url: url.trim_end_matches('/').to_string(),
            client,
        }
    }

    pub async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        match self {
            Self::Mock { dim, seed } => Ok(texts.iter().map(|t| mock_embedding(t, *dim, *seed)).collect()),
            Self::Http { url, client } => {
                let resp = client
                    .post(format!("{url}/embed"))
                    .json(&EmbedRequest { texts: texts.to_vec() })
                    .send()
                    .await
                    .map_err(|e| EmbedError::Unreachable(e.to_string()))?;
                if !resp.status().is_success() {
                    return Err(EmbedError::Unreachable(format!("status {}", resp.status())));
                }
                let body: EmbedResponse = resp.json().await.map_err(|e| EmbedError::Invalid(e.to_string()))?;
                if body.embeddings.len() != texts.len() {
                    return Err(EmbedError::Count {
                        want: texts.len(),
                        got: body.embeddings.len(),
                    });
                }
                body.embeddings
                    .into_iter()
                    .map(|v| {
                        let e = Embedding(v);
                        if !e.is_finite() || e.is_zero() {
                            return Err(EmbedError::Invalid("zero or non-finite vector".into()));
                        }
                        Ok(e.normalized())
                    })
                    .collect()
            }
        }
    }
}
