//! Text generation and embedding behind small traits, each with a remote HTTP
//! implementation and a deterministic local one.

mod local;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};

pub use local::{fnv1a64, tokenize, LocalEmbedder, LOCAL_DIMS};
pub use remote::{HttpEmbedder, HttpGenerator, RetryPolicy};
pub use scripted::{KeyedResponse, ScriptFile, ScriptedGenerator};

pub const ENV_LLM_ENDPOINT: &str = "METALAKE_LLM_ENDPOINT";
pub const ENV_LLM_KEY: &str = "METALAKE_LLM_KEY";
pub const ENV_EMBED_ENDPOINT: &str = "METALAKE_EMBED_ENDPOINT";
pub const ENV_EMBED_KEY: &str = "METALAKE_EMBED_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("scripted provider has no response left for this prompt")]
    ScriptExhausted,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_output_tokens: u32) -> Self {
        Self {
            prompt: prompt.into(),
            max_output_tokens,
            temperature: 0.0,
        }
    }

    fn validate(&self) -> Result<(), ProviderError> {
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. Returns `None` for the zero vector.
    pub fn normalized(values: Vec<f64>) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// `1 - cos(a, b)` for unit vectors, in `[0, 2]`.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    (1.0 - a.dot(b)).clamp(0.0, 2.0)
}
