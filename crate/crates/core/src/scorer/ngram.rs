//! Add-k smoothed n-gram model over a closed vocabulary plus an UNK class.
//!
//! Sentences are padded with `order - 1` begin markers and one end marker.
//! The end marker is part of the predicted vocabulary; the begin marker is
//! not. When a context was never observed the model falls back to the
//! longest observed suffix of that context (the empty context always is).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ScoredText;
use crate::lexicon::normalize_tokens;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_K: f64 = 0.01;

const BOS: u32 = 0;
const END: u32 = 1;
const UNK: u32 = 2;
const FIRST_WORD: u32 = 3;

const BOS_TOKEN: &str = "<s>";
const END_TOKEN: &str = "</s>";
const MODEL_FORMAT: &str = "viseme-ngram";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("training corpus contains no sentences")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidK(f64),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    k: f64,
    words: Vec<String>,
    ids: HashMap<String, u32>,
    /// Keyed by context of every length `0..order`.
    contexts: HashMap<Vec<u32>, ContextCounts>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    k: f64,
    vocab: Vec<String>,
    /// Full-order n-grams: context tokens, predicted token, count.
    ngrams: Vec<(Vec<String>, String, u64)>,
}

/// Split a corpus into normalized sentences. Lines and standalone or trailing
/// `.`, `!`, `?` end sentences.
pub fn corpus_sentences(corpus: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for line in corpus.lines() {
        let mut current: Vec<String> = Vec::new();
        for raw in line.split_whitespace() {
            let ends = raw.ends_with(['.', '!', '?']);
            current.extend(normalize_tokens(raw));
            if ends && !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

impl NgramModel {
    pub fn train(corpus: &str, order: usize, k: f64) -> Result<Self, NgramError> {
        Self::train_sentences(&corpus_sentences(corpus), order, k)
    }

    pub fn train_sentences(sentences: &[Vec<String>], order: usize, k: f64) -> Result<Self, NgramError> {
        if order == 0 {
            return Err(NgramError::InvalidOrder);
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(NgramError::InvalidK(k));
        }
        if sentences.iter().all(Vec::is_empty) {
            return Err(NgramError::EmptyCorpus);
        }
        let mut words: Vec<String> = sentences.iter().flatten().cloned().collect();
        words.sort();
        words.dedup();
        let ids = word_ids(&words);
        let mut model = NgramModel { order, k, words, ids, contexts: HashMap::new() };
        for sentence in sentences.iter().filter(|s| !s.is_empty()) {
            let mut tokens = vec![BOS; order - 1];
            tokens.extend(sentence.iter().map(|w| model.ids[w]));
            tokens.push(END);
            for window in tokens.windows(order) {
                model.add_ngram(window, 1);
            }
        }
        Ok(model)
    }

    fn add_ngram(&mut self, window: &[u32], count: u64) {
        let (context, target) = window.split_at(window.len() - 1);
        for start in 0..=context.len() {
            let entry = self.contexts.entry(context[start..].to_vec()).or_default();
            entry.total += count;
            *entry.next.entry(target[0]).or_default() += count;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Size of the predicted vocabulary: training words, the end marker and UNK.
    pub fn vocab_size(&self) -> usize {
        self.words.len() + 2
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    fn id(&self, word: &str) -> u32 {
        self.ids.get(word).copied().unwrap_or(UNK)
    }

    fn prob_id(&self, target: u32, history: &[u32]) -> f64 {
        let start = history.len().saturating_sub(self.order - 1);
        let mut context = &history[start..];
        loop {
            if let Some(c) = self.contexts.get(context) {
                let hits = c.next.get(&target).copied().unwrap_or(0) as f64;
                return (hits + self.k) / (c.total as f64 + self.k * self.vocab_size() as f64);
            }
            context = &context[1..];
        }
    }

    /// `P(word | context)`. Context words are given oldest first; missing
    /// leading positions are begin markers. `None` as target means the end marker.
    pub fn prob(&self, word: Option<&str>, context: &[&str]) -> f64 {
        let target = word.map_or(END, |w| self.id(w));
        let history = self.history(context);
        self.prob_id(target, &history)
    }

    fn history(&self, context: &[&str]) -> Vec<u32> {
        let mut history = vec![BOS; self.order - 1];
        history.extend(context.iter().map(|w| self.id(w)));
        history
    }

    /// Natural-log joint probability of the words following the begin markers.
    pub fn log_prob(&self, words: &[String]) -> f64 {
        let mut history = vec![BOS; self.order - 1];
        let mut total = 0.0;
        for w in words {
            let id = self.id(w);
            total += self.prob_id(id, &history).ln();
            history.push(id);
        }
        total
    }

    /// Panics on an empty word list; callers validate first.
    pub fn score(&self, words: &[String]) -> ScoredText {
        assert!(!words.is_empty(), "cannot score an empty sentence");
        ScoredText::from_log_prob(words.to_vec(), self.log_prob(words))
    }

    /// Every observed context, as token strings (begin markers spelled `<s>`).
    pub fn observed_contexts(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self.contexts.keys().map(|c| c.iter().map(|&t| self.token(t)).collect()).collect();
        out.sort();
        out
    }

    /// Sum of `P(w | context)` over the whole predicted vocabulary.
    pub fn distribution_sum(&self, context: &[String]) -> f64 {
        let ctx: Vec<u32> = context
            .iter()
            .map(|t| if t == BOS_TOKEN { BOS } else { self.id(t) })
            .collect();
        let targets = [END, UNK].into_iter().chain(FIRST_WORD..FIRST_WORD + self.words.len() as u32);
        targets.map(|t| self.prob_id(t, &ctx)).sum()
    }

    fn token(&self, id: u32) -> String {
        match id {
            BOS => BOS_TOKEN.to_string(),
            END => END_TOKEN.to_string(),
            UNK => "<unk>".to_string(),
            _ => self.words[(id - FIRST_WORD) as usize].clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut ngrams: BTreeMap<(Vec<String>, String), u64> = BTreeMap::new();
        for (ctx, counts) in &self.contexts {
            if ctx.len() + 1 != self.order {
                continue;
            }
            let ctx_tokens: Vec<String> = ctx.iter().map(|&t| self.token(t)).collect();
            for (&target, &count) in &counts.next {
                ngrams.insert((ctx_tokens.clone(), self.token(target)), count);
            }
        }
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            order: self.order,
            k: self.k,
            vocab: self.words.clone(),
            ngrams: ngrams.into_iter().map(|((c, t), n)| (c, t, n)).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NgramError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| NgramError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(NgramError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        if file.order == 0 {
            return Err(NgramError::InvalidOrder);
        }
        if !(file.k.is_finite() && file.k > 0.0) {
            return Err(NgramError::InvalidK(file.k));
        }
        let ids = word_ids(&file.vocab);
        let mut model = NgramModel {
            order: file.order,
            k: file.k,
            words: file.vocab,
            ids,
            contexts: HashMap::new(),
        };
        let lookup = |tok: &str| -> Result<u32, NgramError> {
            match tok {
                BOS_TOKEN => Ok(BOS),
                END_TOKEN => Ok(END),
                _ => model.ids.get(tok).copied().ok_or_else(|| NgramError::Format(format!("token `{tok}` not in vocab"))),
            }
        };
        let mut windows = Vec::with_capacity(file.ngrams.len());
        for (ctx, target, count) in &file.ngrams {
            if ctx.len() + 1 != model.order {
                return Err(NgramError::Format(format!("n-gram of wrong order: {ctx:?} {target}")));
            }
            let mut window = ctx.iter().map(|t| lookup(t)).collect::<Result<Vec<_>, _>>()?;
            window.push(lookup(target)?);
            windows.push((window, *count));
        }
        if windows.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        for (window, count) in windows {
            model.add_ngram(&window, count);
        }
        Ok(model)
    }
}

fn word_ids(words: &[String]) -> HashMap<String, u32> {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), FIRST_WORD + i as u32))
        .collect()
}
