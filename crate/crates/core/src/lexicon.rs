//! Pronouncing dictionary, frequency ranks, and word → viseme conversion.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::viseme::{format_visemes, Phoneme, SymbolError, Viseme, VisemeMap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexiconError {
    #[error("dictionary line {line}: {message}")]
    Dictionary { line: usize, message: String },
    #[error("rank file line {line}: {message}")]
    Ranks { line: usize, message: String },
    #[error("duplicate rank entry for `{word}` (lines {first} and {second})")]
    DuplicateRank { word: String, first: usize, second: usize },
    #[error("out-of-vocabulary word `{0}`")]
    OutOfVocabulary(String),
}

/// Ordered viseme tuple spelling one word.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisemeCluster(Vec<Viseme>);

impl VisemeCluster {
    /// Returns `None` for an empty tuple.
    pub fn new(visemes: Vec<Viseme>) -> Option<Self> {
        (!visemes.is_empty()).then_some(Self(visemes))
    }

    pub fn visemes(&self) -> &[Viseme] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse(text: &str) -> Result<Option<Self>, SymbolError> {
        Ok(Self::new(crate::viseme::parse_visemes(text)?))
    }
}

impl std::borrow::Borrow<[Viseme]> for VisemeCluster {
    fn borrow(&self) -> &[Viseme] {
        &self.0
    }
}

impl fmt::Display for VisemeCluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_visemes(&self.0))
    }
}

pub type Pronunciation = Vec<Phoneme>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Pronunciation>>,
    ranks: HashMap<String, u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RankSummary {
    pub assigned: usize,
    /// Ranked words that are not in the lexicon.
    pub ignored: usize,
}

impl Lexicon {
    /// Parse a CMU-format pronouncing dictionary.
    pub fn parse_pronouncing_dict(text: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with(";;;") {
                continue;
            }
            let mut fields = line.split_whitespace();
            let headword = fields.next().unwrap_or_default();
            let word = strip_variant(headword).to_uppercase();
            let phonemes = fields
                .map(|f| {
                    f.parse::<Phoneme>().map_err(|e| LexiconError::Dictionary {
                        line: line_no,
                        message: format!("{e} in entry `{headword}`"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if phonemes.is_empty() {
                return Err(LexiconError::Dictionary {
                    line: line_no,
                    message: format!("entry `{headword}` has no phonemes"),
                });
            }
            let prons = lexicon.entries.entry(word).or_default();
            if !prons.contains(&phonemes) {
                prons.push(phonemes);
            }
        }
        Ok(lexicon)
    }

    /// Attach `rank<TAB>WORD` frequency ranks. Unknown words are counted and skipped.
    pub fn load_frequency_ranks(&mut self, text: &str) -> Result<RankSummary, LexiconError> {
        let mut summary = RankSummary::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut ranks = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(rank), Some(word), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(LexiconError::Ranks {
                    line: line_no,
                    message: format!("expected `rank<TAB>word`, got `{line}`"),
                });
            };
            let rank: u32 = rank.parse().ok().filter(|r| *r > 0).ok_or_else(|| LexiconError::Ranks {
                line: line_no,
                message: format!("rank `{rank}` is not a positive integer"),
            })?;
            let word = word.to_uppercase();
            if let Some(first) = seen.insert(word.clone(), line_no) {
                return Err(LexiconError::DuplicateRank { word, first, second: line_no });
            }
            if self.entries.contains_key(&word) {
                ranks.insert(word, rank);
                summary.assigned += 1;
            } else {
                summary.ignored += 1;
            }
        }
        if summary.ignored > 0 {
            log::warn!("{} ranked words are not in the lexicon", summary.ignored);
        }
        self.ranks = ranks;
        Ok(summary)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Pronunciation]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn rank(&self, word: &str) -> Option<u32> {
        self.ranks.get(word).copied()
    }

    pub fn ranked_len(&self) -> usize {
        self.ranks.len()
    }

    /// Words in lexicographic order with their pronunciations.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Pronunciation])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub(crate) fn insert_raw(&mut self, word: String, prons: Vec<Pronunciation>, rank: Option<u32>) {
        if let Some(r) = rank {
            self.ranks.insert(word.clone(), r);
        }
        self.entries.insert(word, prons);
    }

    /// One cluster per distinct pronunciation image, in pronunciation order.
    pub fn word_to_clusters(&self, word: &str, map: &VisemeMap) -> Result<Vec<VisemeCluster>, LexiconError> {
        let key = word.to_uppercase();
        let prons = self
            .entries
            .get(&key)
            .ok_or(LexiconError::OutOfVocabulary(key.clone()))?;
        let mut clusters: Vec<VisemeCluster> = Vec::with_capacity(prons.len());
        for pron in prons {
            let c = VisemeCluster(map.map_phonemes(pron));
            if !clusters.contains(&c) {
                clusters.push(c);
            }
        }
        Ok(clusters)
    }

    /// Cluster per token using each word's primary pronunciation.
    pub fn sentence_to_clusters(&self, text: &str, map: &VisemeMap) -> Result<Vec<VisemeCluster>, LexiconError> {
        normalize_tokens(text)
            .into_iter()
            .map(|tok| {
                let prons = self
                    .entries
                    .get(&tok)
                    .ok_or_else(|| LexiconError::OutOfVocabulary(tok.clone()))?;
                Ok(VisemeCluster(map.map_phonemes(&prons[0])))
            })
            .collect()
    }

    /// Concatenated viseme stream of a sentence (word boundaries dropped).
    pub fn sentence_to_stream(&self, text: &str, map: &VisemeMap) -> Result<Vec<Viseme>, LexiconError> {
        Ok(self
            .sentence_to_clusters(text, map)?
            .into_iter()
            .flat_map(|c| c.0)
            .collect())
    }
}

/// Either the cluster list or the flat stream of a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SentenceVisemes {
    Clusters(Vec<VisemeCluster>),
    Stream(Vec<Viseme>),
}

pub fn sentence_to_visemes(
    text: &str,
    lexicon: &Lexicon,
    map: &VisemeMap,
    keep_boundaries: bool,
) -> Result<SentenceVisemes, LexiconError> {
    if keep_boundaries {
        lexicon.sentence_to_clusters(text, map).map(SentenceVisemes::Clusters)
    } else {
        lexicon.sentence_to_stream(text, map).map(SentenceVisemes::Stream)
    }
}

fn strip_variant(headword: &str) -> &str {
    if let Some(open) = headword.rfind('(') {
        let tail = &headword[open + 1..];
        if open > 0 && tail.len() > 1 && tail.ends_with(')') && tail[..tail.len() - 1].bytes().all(|b| b.is_ascii_digit()) {
            return &headword[..open];
        }
    }
    headword
}

/// Upper-case tokens with everything but letters, digits and apostrophes removed.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|tok| {
            tok.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_uppercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn normalize_sentence(text: &str) -> String {
    normalize_tokens(text).join(" ")
}
