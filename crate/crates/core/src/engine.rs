//! Loaded lexicon, map and index, plus the text → visemes → words pipeline.

use rayon::prelude::*;
use thiserror::Error;

use crate::decoder::{decode_scenario1, decode_scenario2, DecodeError, DecodeOptions, DecodeResult, Scenario};
use crate::index::InverseIndex;
use crate::lexicon::{normalize_sentence, normalize_tokens, Lexicon, LexiconError, SentenceVisemes, VisemeCluster};
use crate::metrics::{aggregate, cer_counts, sar, ver_counts, wer_counts, MetricsError, MetricsReport, SentenceRow};
use crate::scorer::{Scorer, ScorerError};
use crate::viseme::{format_visemes, parse_visemes, SymbolError, VisemeMap};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Engine {
    map: VisemeMap,
    lexicon: Lexicon,
    index: InverseIndex,
}

impl Engine {
    pub fn new(lexicon: Lexicon, map: VisemeMap) -> Self {
        let index = InverseIndex::build(&lexicon, &map);
        Self { map, lexicon, index }
    }

    pub(crate) fn from_parts(lexicon: Lexicon, map: VisemeMap, index: InverseIndex) -> Self {
        Self { map, lexicon, index }
    }

    /// Parse dictionary text, optional rank text and optional map overrides.
    pub fn from_sources(dict: &str, ranks: Option<&str>, map_overrides: Option<&str>) -> Result<Self, EngineError> {
        let mut lexicon = Lexicon::parse_pronouncing_dict(dict)?;
        if let Some(ranks) = ranks {
            lexicon.load_frequency_ranks(ranks)?;
        }
        let map = match map_overrides {
            Some(text) => VisemeMap::with_overrides(text)?,
            None => VisemeMap::builtin(),
        };
        Ok(Self::new(lexicon, map))
    }

    pub fn map(&self) -> &VisemeMap {
        &self.map
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn index(&self) -> &InverseIndex {
        &self.index
    }

    /// Clusters for scenario 1, a flat stream for scenario 2.
    pub fn to_visemes(&self, text: &str, scenario: Scenario) -> Result<SentenceVisemes, LexiconError> {
        crate::lexicon::sentence_to_visemes(text, &self.lexicon, &self.map, scenario == Scenario::Segmented)
    }

    pub fn decode<S: Scorer + ?Sized>(
        &self,
        input: &SentenceVisemes,
        scorer: &S,
        options: &DecodeOptions,
    ) -> Result<DecodeResult, DecodeError> {
        match input {
            SentenceVisemes::Clusters(clusters) => decode_scenario1(clusters, &self.index, scorer, options),
            SentenceVisemes::Stream(seq) => decode_scenario2(seq, &self.index, scorer, options),
        }
    }
}

/// Text form of viseme input: clusters separated by `|`, visemes by spaces.
pub fn format_sentence_visemes(input: &SentenceVisemes) -> String {
    match input {
        SentenceVisemes::Clusters(clusters) => clusters.iter().map(ToString::to_string).collect::<Vec<_>>().join(" | "),
        SentenceVisemes::Stream(seq) => format_visemes(seq),
    }
}

/// Parse a viseme line. Scenario 1 splits clusters on `|`; scenario 2
/// ignores any `|` and reads one stream.
pub fn parse_viseme_line(line: &str, scenario: Scenario) -> Result<SentenceVisemes, SymbolError> {
    match scenario {
        Scenario::Segmented => {
            let mut clusters = Vec::new();
            for part in line.split('|') {
                if let Some(c) = VisemeCluster::parse(part)? {
                    clusters.push(c);
                }
            }
            Ok(SentenceVisemes::Clusters(clusters))
        }
        Scenario::Unsegmented => Ok(SentenceVisemes::Stream(parse_visemes(&line.replace('|', " "))?)),
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scorer failure: {0}")]
    Scorer(#[source] ScorerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub scenario: Scenario,
    pub decode: DecodeOptions,
    /// Count inter-word spaces as characters for CER.
    pub cer_spaces: bool,
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            scenario: Scenario::Segmented,
            decode: DecodeOptions::default(),
            cer_spaces: true,
            jobs: 1,
        }
    }
}

/// Scorer failures that make every later request meaningless.
pub fn is_fatal(err: &ScorerError) -> bool {
    matches!(
        err,
        ScorerError::Transport(_)
            | ScorerError::Timeout { .. }
            | ScorerError::Malformed { .. }
            | ScorerError::VersionMismatch { .. }
    )
}

/// Run `f` over `items` on at most `jobs` threads, keeping input order.
pub fn map_ordered<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>, EvalError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// Decode every `(id, reference)` pair and score the predictions.
/// Rows that cannot be converted or decoded are kept as skipped rows.
pub fn evaluate<S: Scorer + ?Sized>(
    engine: &Engine,
    corpus: &[(usize, String)],
    scorer: &S,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let rows = map_ordered(corpus, options.jobs, |(id, text)| evaluate_row(engine, *id, text, scorer, options))?;
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(rows)?)
}

fn evaluate_row<S: Scorer + ?Sized>(
    engine: &Engine,
    id: usize,
    text: &str,
    scorer: &S,
    options: &EvalOptions,
) -> Result<SentenceRow, EvalError> {
    let reference = normalize_sentence(text);
    let input = match engine.to_visemes(&reference, options.scenario) {
        Ok(input) => input,
        Err(e) => return Ok(SentenceRow::skipped(id, reference, e.to_string())),
    };
    let result = match engine.decode(&input, scorer, &options.decode) {
        Ok(r) => r,
        Err(DecodeError::Scorer(e)) if is_fatal(&e) => return Err(EvalError::Scorer(e)),
        Err(e) => return Ok(SentenceRow::skipped(id, reference, e.to_string())),
    };
    let hypothesis = result.text();
    let reference_perplexity = match scorer.perplexity(&normalize_tokens(&reference)) {
        Ok(p) => Some(p),
        Err(e) if is_fatal(&e) => return Err(EvalError::Scorer(e)),
        Err(_) => None,
    };
    let ref_visemes = engine.lexicon().sentence_to_stream(&reference, engine.map()).unwrap_or_default();
    let hyp_visemes = engine.lexicon().sentence_to_stream(&hypothesis, engine.map()).unwrap_or_default();
    Ok(SentenceRow {
        id,
        cer: cer_counts(&reference, &hypothesis, options.cer_spaces),
        wer: wer_counts(&reference, &hypothesis),
        ver: ver_counts(&ref_visemes, &hyp_visemes),
        sar: sar(&reference, &hypothesis),
        perplexity: Some(result.perplexity),
        reference_perplexity,
        reference,
        hypothesis: Some(hypothesis),
        skipped: None,
    })
}

/// Non-blank lines paired with their 1-based line numbers.
pub fn corpus_lines(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect()
}
