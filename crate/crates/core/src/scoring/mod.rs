//! Pair-scoring backends.
//!
//! A scorer maps a batch of (premise, hypothesis) pairs to match
//! probabilities. Thresholding happens in [`crate::inference`].

pub mod cache;
pub mod oracle;
pub mod remote;
pub mod tokens;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use crate::error::ScoreError;
use crate::prompting::PairInput;

pub use cache::CachedScorer;
pub use oracle::{OracleConfig, OracleScorer};
pub use remote::{RemoteConfig, RemoteScorer};
pub use tokens::{count_tokens, TokenizerSpec};

/// Backend limits, as served by `GET /v1/info`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub max_batch: usize,
    /// `None` means unbounded; premises are never truncated.
    #[serde(default)]
    pub max_sequence_length: Option<usize>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<PairInput>,
}

impl ScoreRequest {
    pub fn new(pairs: Vec<PairInput>) -> Self {
        ScoreRequest { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn check_size(&self, max_batch: usize) -> Result<(), ScoreError> {
        if self.pairs.is_empty() {
            Err(ScoreError::EmptyBatch)
        } else if self.pairs.len() > max_batch {
            Err(ScoreError::BatchTooLarge {
                size: self.pairs.len(),
                max: max_batch,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
    pub token_counts: Vec<u64>,
    pub model_id: String,
    /// Set by [`CachedScorer`]: which positions were served from cache.
    /// Empty means none were.
    #[serde(skip)]
    pub cache_hits: Vec<bool>,
}

impl ScoreResponse {
    /// Checks alignment with a request of `expected` pairs and the score range.
    pub fn validate(&self, expected: usize) -> Result<(), ScoreError> {
        if self.scores.len() != expected || self.token_counts.len() != expected {
            return Err(ScoreError::Misaligned {
                expected,
                scores: self.scores.len(),
                tokens: self.token_counts.len(),
            });
        }
        if let Some((index, &value)) = self
            .scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(ScoreError::OutOfRange { index, value });
        }
        Ok(())
    }

    pub fn is_cache_hit(&self, index: usize) -> bool {
        self.cache_hits.get(index).copied().unwrap_or(false)
    }
}

/// A pair-scoring backend. Implementations are shared across worker threads.
pub trait Scorer: Send + Sync {
    fn info(&self) -> ScorerInfo;

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn info(&self) -> ScorerInfo {
        (**self).info()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        (**self).score_batch(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn info(&self) -> ScorerInfo {
        (**self).info()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        (**self).score_batch(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn info(&self) -> ScorerInfo {
        (**self).info()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        (**self).score_batch(request)
    }
}

/// Scores a batch, enforcing the size limit and response alignment.
pub fn score_batch(
    scorer: &dyn Scorer,
    request: &ScoreRequest,
) -> Result<ScoreResponse, ScoreError> {
    request.check_size(scorer.info().max_batch)?;
    let response = scorer.score_batch(request)?;
    response.validate(request.len())?;
    Ok(response)
}
