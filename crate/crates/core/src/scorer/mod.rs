//! Sentence perplexity backends.
//!
//! Perplexity is `P(w_1..w_N)^(-1/N)`, the exponentiated per-word
//! cross-entropy in nats. Arithmetic stays in the log domain and the
//! perplexity is only materialized at the boundary.

mod ngram;
mod remote;

use thiserror::Error;

pub use ngram::{corpus_sentences, NgramError, NgramModel, DEFAULT_K, DEFAULT_ORDER};
pub use remote::{RemoteScorer, DEFAULT_TIMEOUT, PROTOCOL_NAME, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("cannot score an empty word sequence")]
    EmptyInput,
    #[error("cannot score an empty batch")]
    EmptyBatch,
    #[error("scorer transport failure: {0}")]
    Transport(String),
    #[error("scorer timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("malformed scorer response: {reason}; payload: {payload}")]
    Malformed { reason: String, payload: String },
    #[error("scorer protocol mismatch: {reason}; payload: {payload}")]
    VersionMismatch { reason: String, payload: String },
    #[error("scorer reported error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("scorer returned invalid perplexity {value}")]
    InvalidScore { value: f64 },
}

/// A sentence with its log probability and derived entropy/perplexity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredText {
    pub words: Vec<String>,
    /// Natural-log joint probability.
    pub log_prob: f64,
    /// Per-word entropy in nats.
    pub entropy: f64,
    pub perplexity: f64,
}

impl ScoredText {
    pub fn from_log_prob(words: Vec<String>, log_prob: f64) -> Self {
        let entropy = -log_prob / words.len() as f64;
        Self {
            words,
            log_prob,
            entropy,
            perplexity: entropy.exp(),
        }
    }
}

/// Anything that assigns perplexities to word sequences.
pub trait Scorer: Send + Sync {
    /// Element-wise perplexities, order preserved. A single failure fails the batch.
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError>;

    fn perplexity(&self, words: &[String]) -> Result<f64, ScorerError> {
        let out = self.batch_perplexity(&[words.to_vec()])?;
        Ok(out[0])
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        (**self).batch_perplexity(batch)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        (**self).batch_perplexity(batch)
    }
}

impl Scorer for NgramModel {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        if batch.is_empty() {
            return Err(ScorerError::EmptyBatch);
        }
        batch
            .iter()
            .map(|words| {
                if words.is_empty() {
                    Err(ScorerError::EmptyInput)
                } else {
                    Ok(self.score(words).perplexity)
                }
            })
            .collect()
    }
}

pub(crate) fn check_batch(batch: &[Vec<String>]) -> Result<(), ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyBatch);
    }
    if batch.iter().any(Vec::is_empty) {
        return Err(ScorerError::EmptyInput);
    }
    Ok(())
}

/// Which backend a [`ScorerHandle`] drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Ngram,
    External,
}

/// Exactly one active backend plus a batch size limit.
pub struct ScorerHandle {
    backend: Backend,
    batch_limit: usize,
}

enum Backend {
    Ngram(NgramModel),
    External(RemoteScorer),
}

impl ScorerHandle {
    pub fn ngram(model: NgramModel) -> Self {
        Self {
            backend: Backend::Ngram(model),
            batch_limit: usize::MAX,
        }
    }

    pub fn external(client: RemoteScorer, batch_limit: usize) -> Self {
        Self {
            backend: Backend::External(client),
            batch_limit: batch_limit.max(1),
        }
    }

    pub fn kind(&self) -> ScorerKind {
        match self.backend {
            Backend::Ngram(_) => ScorerKind::Ngram,
            Backend::External(_) => ScorerKind::External,
        }
    }

    pub fn batch_limit(&self) -> usize {
        self.batch_limit
    }
}

impl Scorer for ScorerHandle {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        check_batch(batch)?;
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.batch_limit) {
            let part = match &self.backend {
                Backend::Ngram(m) => m.batch_perplexity(chunk)?,
                Backend::External(r) => r.batch_perplexity(chunk)?,
            };
            out.extend(part);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scored_text_identities() {
        let s = ScoredText::from_log_prob(vec!["A".into(), "B".into()], -(100f64.ln()) * 2.0);
        assert!((s.perplexity - 100.0).abs() < 1e-9);
        assert!((s.entropy - 100f64.ln()).abs() < 1e-12);
        let sure = ScoredText::from_log_prob(vec!["A".into()], 0.0);
        assert_eq!(sure.perplexity, 1.0);
    }

    #[test]
    fn handle_chunks_batches() {
        let model = NgramModel::train("a b . b a .", 2, 0.5).unwrap();
        let single: Vec<f64> = model
            .batch_perplexity(&[vec!["A".into()], vec!["B".into(), "A".into()], vec!["C".into()]])
            .unwrap();
        let handle = ScorerHandle { backend: Backend::Ngram(model), batch_limit: 1 };
        assert_eq!(handle.kind(), ScorerKind::Ngram);
        let chunked = handle
            .batch_perplexity(&[vec!["A".into()], vec!["B".into(), "A".into()], vec!["C".into()]])
            .unwrap();
        assert_eq!(single, chunked);
        assert!(matches!(handle.batch_perplexity(&[]), Err(ScorerError::EmptyBatch)));
        assert!(matches!(handle.batch_perplexity(&[vec![]]), Err(ScorerError::EmptyInput)));
    }
}
