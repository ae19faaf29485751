//! Text embeddings and cosine similarity.
//!
//! Two providers share one interface: an offline hashed bag-of-words embedder used for
//! reproducible runs, and a client for a remote embeddings endpoint.

mod local;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use local::{embed_local, LocalEmbedder, LOCAL_DIM, LOCAL_PROVIDER_ID};
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBED_KEY_ENV, EMBED_URL_ENV};

/// Default model for question deduplication.
pub const DEDUP_MODEL: &str = "distilbert-base-nli-stsb-quora-ranking";
/// Default model for the recommender.
pub const RECOMMENDER_MODEL: &str = "all-mpnet-base-v2";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vectors from different providers: {left} vs {right}")]
    ProviderMismatch { left: String, right: String },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("embedding endpoint unreachable: {0}")]
    Transport(String),
    #[error("embedding endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected embedding response: {0}")]
    Protocol(String),
    #[error("embedding dimension drifted from {expected} to {got}")]
    DimensionDrift { expected: usize, got: usize },
    #[error("embedding provider not configured: {0}")]
    NotConfigured(String),
}

impl EmbedError {
    /// True when the provider itself is down rather than the input being bad.
    pub fn is_unavailable(&self) -> bool {
        match self {
            EmbedError::Transport(_) | EmbedError::Protocol(_) | EmbedError::NotConfigured(_) => {
                true
            }
            EmbedError::Http { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub provider_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(provider_id: impl Into<String>, values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self {
            provider_id: provider_id.into(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// A zero vector carries no direction and cannot take part in cosine similarity.
    pub fn is_usable(&self) -> bool {
        self.values.iter().any(|&v| v != 0.0)
    }
}

const LANES: usize = 8;

/// Dot product in `f64`, over the common prefix of `a` and `b`.
///
/// Summation order is fixed: eight interleaved partial sums, combined pairwise, then
/// the tail. Every similarity in the crate goes through here, so packed `f32` rows
/// widened on the fly score bit-identically to the same rows stored as `f64`.
pub fn dot<A: Copy + Into<f64>, B: Copy + Into<f64>>(a: &[A], b: &[B]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; LANES];
    let (a_chunks, b_chunks) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (a_tail, b_tail) = (a_chunks.remainder(), b_chunks.remainder());
    for (x, y) in a_chunks.zip(b_chunks) {
        for l in 0..LANES {
            acc[l] += x[l].into() * y[l].into();
        }
    }
    let mut tail = 0.0;
    for (x, y) in a_tail.iter().zip(b_tail) {
        tail += (*x).into() * (*y).into();
    }
    (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) + tail
}

pub fn norm<A: Copy + Into<f64>>(a: &[A]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine from precomputed norms. Callers that cache norms get bit-identical results
/// to [`cosine`].
pub fn cosine_with_norms<B: Copy + Into<f64>>(a: &[f64], b: &[B], norm_a: f64, norm_b: f64) -> f64 {
    (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// `(a·b) / (‖a‖‖b‖)`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.provider_id != b.provider_id {
        return Err(EmbedError::ProviderMismatch {
            left: a.provider_id.clone(),
            right: b.provider_id.clone(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok(cosine_with_norms(&a.values, &b.values, na, nb))
}

/// Anything that turns text into vectors. Implementations must be deterministic for a
/// given provider version and safe to share across threads.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    /// Output dimension, when known ahead of the first call.
    fn dim(&self) -> Option<usize>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop()
            .ok_or_else(|| EmbedError::Protocol("provider returned no vector".into()))
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn dim(&self) -> Option<usize> {
        (**self).dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}
