//! Viseme-to-word decoding.
//!
//! A pronouncing dictionary is mapped to viseme clusters and inverted into an
//! index from clusters to words. Viseme input is segmented against that index
//! and a beam search picks the word sequence with the lowest language-model
//! perplexity.

pub mod artifact;
pub mod chunker;
pub mod config;
pub mod decoder;
pub mod engine;
pub mod index;
pub mod lexicon;
pub mod metrics;
pub mod scorer;
pub mod viseme;

pub use chunker::{ChunkError, ChunkLimits, SegmentLattice, Segmentation, SegmentationSet};
pub use decoder::{decode_scenario1, decode_scenario2, DecodeError, DecodeOptions, DecodeResult, Scenario};
pub use engine::Engine;
pub use index::InverseIndex;
pub use lexicon::{Lexicon, LexiconError, VisemeCluster};
pub use metrics::{EditCounts, MetricsError, MetricsReport};
pub use scorer::{NgramModel, RemoteScorer, Scorer, ScorerError, ScorerHandle};
pub use viseme::{Phoneme, SymbolError, Viseme, VisemeMap};

/// Any error the library can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Artifact(#[from] artifact::ArtifactError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Eval(#[from] engine::EvalError),
}
