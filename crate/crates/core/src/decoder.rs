//! Beam-search conversion of viseme clusters to the minimum-perplexity sentence.
//!
//! Scenario 1 receives word boundaries (a cluster sequence). Scenario 2
//! receives a flat viseme stream and searches the segmentation lattice.
//!
//! Selection rules:
//! 1. one cluster with one matching word: that word;
//! 2. one cluster with several words: the best frequency-ranked word;
//! 3. otherwise all word pairs for the first two clusters are scored, the
//!    `B` best kept, and each survivor is extended by every word of the next
//!    cluster, rescoring the whole prefix and keeping the `B` best each step.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::chunker::{ChunkError, ChunkLimits, SegmentLattice};
use crate::index::InverseIndex;
use crate::lexicon::VisemeCluster;
use crate::scorer::{Scorer, ScorerError};
use crate::viseme::Viseme;

pub const DEFAULT_BEAM_WIDTH: usize = 50;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("nothing to decode")]
    EmptyInput,
    #[error("cluster `{0}` matches no word")]
    EmptyCluster(VisemeCluster),
    #[error("viseme stream has no segmentation into dictionary clusters")]
    NoSegmentation,
    #[error(transparent)]
    CapExceeded(#[from] ChunkError),
    #[error("beam width must be at least 1")]
    InvalidBeamWidth,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Word boundaries known.
    Segmented,
    /// Flat viseme stream.
    Unsegmented,
}

impl Scenario {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::Segmented),
            2 => Some(Self::Unsegmented),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::Segmented => 1,
            Self::Unsegmented => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub beam_width: usize,
    /// Take the single-word branch whenever the whole stream is a key,
    /// even if multi-cluster segmentations exist.
    pub eager_single_word: bool,
    pub limits: ChunkLimits,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam_width: DEFAULT_BEAM_WIDTH,
            eager_single_word: false,
            limits: ChunkLimits::default(),
        }
    }
}

/// Candidate word sequence. `spans` locate each word's cluster: cluster
/// indices in scenario 1, viseme positions in scenario 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub words: Vec<String>,
    pub perplexity: f64,
    pub cursor: usize,
    pub complete: bool,
    #[serde(skip)]
    pub spans: Vec<(usize, usize)>,
}

impl Hypothesis {
    pub fn sentence(&self) -> String {
        self.words.join(" ")
    }
}

/// Beam order: perplexity, then fewer words, then lexicographic words.
pub fn compare_hypotheses(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    a.perplexity
        .total_cmp(&b.perplexity)
        .then_with(|| a.words.len().cmp(&b.words.len()))
        .then_with(|| a.words.cmp(&b.words))
        .then_with(|| a.cursor.cmp(&b.cursor))
        .then_with(|| a.spans.cmp(&b.spans))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    capacity: usize,
    members: Vec<Hypothesis>,
}

impl Beam {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, members: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn members(&self) -> &[Hypothesis] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn all_complete(&self) -> bool {
        self.members.iter().all(|h| h.complete)
    }

    pub fn into_members(self) -> Vec<Hypothesis> {
        self.members
    }

    /// Sort, drop duplicate (words, cursor) pairs, keep the best `capacity`.
    /// Returns whether anything was cut.
    fn admit(&mut self, mut candidates: Vec<Hypothesis>) -> bool {
        candidates.sort_by(compare_hypotheses);
        let mut seen = HashSet::new();
        candidates.retain(|h| seen.insert((h.words.clone(), h.cursor)));
        let truncated = candidates.len() > self.capacity;
        candidates.truncate(self.capacity);
        self.members = candidates;
        truncated
    }
}

/// One way to grow a hypothesis by a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub word: String,
    pub span: (usize, usize),
    pub cursor: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecodeStats {
    pub clusters_processed: usize,
    pub hypotheses_scored: usize,
    pub iterations: usize,
    pub beam_truncated: bool,
    /// Scenario 2: number of complete segmentations (saturating).
    pub segmentations: u128,
    /// Scenario 2: the segmentation count exceeds the enumeration cap.
    /// Decoding walks the lattice, so this is informational.
    pub segmentation_cap_exceeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    SingleMatch,
    MostFrequent,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    pub sentence: Vec<String>,
    pub perplexity: f64,
    /// Remaining final beam, ascending, excluding the winner.
    pub alternates: Vec<Hypothesis>,
    /// The cluster each chosen word was matched against.
    #[serde(serialize_with = "serialize_clusters")]
    pub clusters: Vec<VisemeCluster>,
    pub selection: Selection,
    pub stats: DecodeStats,
}

impl DecodeResult {
    pub fn text(&self) -> String {
        self.sentence.join(" ")
    }

    pub fn visemes(&self) -> Vec<Viseme> {
        self.clusters.iter().flat_map(|c| c.visemes().iter().copied()).collect()
    }
}

fn serialize_clusters<S: serde::Serializer>(clusters: &[VisemeCluster], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(clusters.iter().map(|c| c.to_string()))
}

struct Candidate {
    words: Vec<String>,
    spans: Vec<(usize, usize)>,
    cursor: usize,
    complete: bool,
}

fn score_candidates<S: Scorer + ?Sized>(
    candidates: Vec<Candidate>,
    scorer: &S,
    stats: &mut DecodeStats,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let batch: Vec<Vec<String>> = candidates.iter().map(|c| c.words.clone()).collect();
    let scores = scorer.batch_perplexity(&batch)?;
    if scores.len() != candidates.len() {
        return Err(ScorerError::Malformed {
            reason: format!("expected {} scores, got {}", candidates.len(), scores.len()),
            payload: String::new(),
        }
        .into());
    }
    stats.hypotheses_scored += scores.len();
    candidates
        .into_iter()
        .zip(scores)
        .map(|(c, perplexity)| {
            if !(perplexity.is_finite() && perplexity > 0.0) {
                return Err(ScorerError::InvalidScore { value: perplexity }.into());
            }
            Ok(Hypothesis {
                words: c.words,
                perplexity,
                cursor: c.cursor,
                complete: c.complete,
                spans: c.spans,
            })
        })
        .collect()
}

fn seed_beam<S: Scorer + ?Sized>(
    candidates: Vec<Candidate>,
    scorer: &S,
    capacity: usize,
    stats: &mut DecodeStats,
) -> Result<Beam, DecodeError> {
    let scored = score_candidates(candidates, scorer, stats)?;
    let mut beam = Beam::new(capacity);
    stats.beam_truncated |= beam.admit(scored);
    stats.iterations += 1;
    Ok(beam)
}

/// One search step: every incomplete member `i` is replaced by its
/// `extensions[i]`, all new prefixes are scored in one batch, complete
/// members compete unchanged, and the best `capacity` survive.
pub fn extend_and_prune<S: Scorer + ?Sized>(
    beam: &Beam,
    extensions: &[Vec<Extension>],
    scorer: &S,
    capacity: usize,
    stats: &mut DecodeStats,
) -> Result<Beam, DecodeError> {
    if beam.is_empty() {
        return Err(DecodeError::EmptyInput);
    }
    let mut kept = Vec::new();
    let mut candidates = Vec::new();
    for (i, hyp) in beam.members.iter().enumerate() {
        if hyp.complete {
            kept.push(hyp.clone());
            continue;
        }
        for ext in extensions.get(i).map(Vec::as_slice).unwrap_or(&[]) {
            let mut words = hyp.words.clone();
            words.push(ext.word.clone());
            let mut spans = hyp.spans.clone();
            spans.push(ext.span);
            candidates.push(Candidate {
                words,
                spans,
                cursor: ext.cursor,
                complete: ext.complete,
            });
        }
    }
    kept.extend(score_candidates(candidates, scorer, stats)?);
    let mut next = Beam::new(capacity);
    stats.beam_truncated |= next.admit(kept);
    stats.iterations += 1;
    Ok(next)
}

fn finish(beam: Beam, clusters_of: impl Fn(&Hypothesis) -> Vec<VisemeCluster>, stats: DecodeStats) -> DecodeResult {
    let mut members = beam.into_members().into_iter();
    let winner = members.next().expect("nonempty final beam");
    DecodeResult {
        clusters: clusters_of(&winner),
        sentence: winner.words,
        perplexity: winner.perplexity,
        alternates: members.collect(),
        selection: Selection::Beam,
        stats,
    }
}

fn single_cluster<S: Scorer + ?Sized>(
    cluster: VisemeCluster,
    words: &[String],
    scorer: &S,
    mut stats: DecodeStats,
) -> Result<DecodeResult, DecodeError> {
    let word = words.first().ok_or_else(|| DecodeError::EmptyCluster(cluster.clone()))?;
    let perplexity = scorer.perplexity(std::slice::from_ref(word))?;
    stats.hypotheses_scored += 1;
    stats.clusters_processed = 1;
    Ok(DecodeResult {
        sentence: vec![word.clone()],
        perplexity,
        alternates: Vec::new(),
        clusters: vec![cluster],
        selection: if words.len() == 1 { Selection::SingleMatch } else { Selection::MostFrequent },
        stats,
    })
}

/// Decode a sequence of clusters with known word boundaries.
pub fn decode_scenario1<S: Scorer + ?Sized>(
    clusters: &[VisemeCluster],
    index: &InverseIndex,
    scorer: &S,
    options: &DecodeOptions,
) -> Result<DecodeResult, DecodeError> {
    if options.beam_width == 0 {
        return Err(DecodeError::InvalidBeamWidth);
    }
    if clusters.is_empty() {
        return Err(DecodeError::EmptyInput);
    }
    let matches: Vec<&[String]> = clusters
        .iter()
        .map(|c| index.get(c.visemes()).ok_or_else(|| DecodeError::EmptyCluster(c.clone())))
        .collect::<Result<_, _>>()?;
    let mut stats = DecodeStats::default();
    let n = clusters.len();
    if n == 1 {
        return single_cluster(clusters[0].clone(), matches[0], scorer, stats);
    }

    let mut seeds = Vec::with_capacity(matches[0].len() * matches[1].len());
    for w1 in matches[0] {
        for w2 in matches[1] {
            seeds.push(Candidate {
                words: vec![w1.clone(), w2.clone()],
                spans: vec![(0, 1), (1, 2)],
                cursor: 2,
                complete: n == 2,
            });
        }
    }
    let mut beam = seed_beam(seeds, scorer, options.beam_width, &mut stats)?;
    stats.clusters_processed = 2;

    for i in 2..n {
        let extensions: Vec<Vec<Extension>> = beam
            .members()
            .iter()
            .map(|_| {
                matches[i]
                    .iter()
                    .map(|w| Extension {
                        word: w.clone(),
                        span: (i, i + 1),
                        cursor: i + 1,
                        complete: i + 1 == n,
                    })
                    .collect()
            })
            .collect();
        beam = extend_and_prune(&beam, &extensions, scorer, options.beam_width, &mut stats)?;
        stats.clusters_processed = i + 1;
    }

    Ok(finish(
        beam,
        |h| h.spans.iter().map(|&(a, _)| clusters[a].clone()).collect(),
        stats,
    ))
}

/// Decode a flat viseme stream by searching its segmentation lattice.
pub fn decode_scenario2<S: Scorer + ?Sized>(
    seq: &[Viseme],
    index: &InverseIndex,
    scorer: &S,
    options: &DecodeOptions,
) -> Result<DecodeResult, DecodeError> {
    if options.beam_width == 0 {
        return Err(DecodeError::InvalidBeamWidth);
    }
    if seq.iter().all(|v| v.is_silent()) {
        return Err(DecodeError::EmptyInput);
    }
    let lattice = SegmentLattice::build(index, seq, &options.limits)?;
    if lattice.is_empty() {
        return Err(DecodeError::NoSegmentation);
    }
    let segmentations = lattice.path_count();
    let mut stats = DecodeStats {
        segmentations,
        segmentation_cap_exceeded: segmentations > options.limits.max_segmentations as u128,
        ..DecodeStats::default()
    };
    let sink = lattice.sink();
    let start = lattice.start();
    let words_at = |node: usize, end: usize| -> &[String] {
        index.get(&seq[node..end]).expect("lattice arcs are index keys")
    };

    let single_branch = if options.eager_single_word {
        lattice.has_whole_span_arc()
    } else {
        lattice.is_single_cluster()
    };
    if single_branch {
        let &(end, _) = lattice
            .arcs(start)
            .iter()
            .find(|&&(_, next)| next == sink)
            .expect("whole-span arc");
        return single_cluster(lattice.cluster(start, end), words_at(start, end), scorer, stats);
    }

    let mut seeds = Vec::new();
    for &(e1, n1) in lattice.arcs(start) {
        for w1 in words_at(start, e1) {
            if n1 == sink {
                seeds.push(Candidate {
                    words: vec![w1.clone()],
                    spans: vec![(start, e1)],
                    cursor: sink,
                    complete: true,
                });
                continue;
            }
            for &(e2, n2) in lattice.arcs(n1) {
                for w2 in words_at(n1, e2) {
                    seeds.push(Candidate {
                        words: vec![w1.clone(), w2.clone()],
                        spans: vec![(start, e1), (n1, e2)],
                        cursor: n2,
                        complete: n2 == sink,
                    });
                }
            }
        }
    }
    let mut beam = seed_beam(seeds, scorer, options.beam_width, &mut stats)?;
    stats.clusters_processed = 2;

    while !beam.all_complete() {
        let extensions: Vec<Vec<Extension>> = beam
            .members()
            .iter()
            .map(|h| {
                if h.complete {
                    return Vec::new();
                }
                lattice
                    .arcs(h.cursor)
                    .iter()
                    .flat_map(|&(end, next)| {
                        words_at(h.cursor, end).iter().map(move |w| Extension {
                            word: w.clone(),
                            span: (h.cursor, end),
                            cursor: next,
                            complete: next == sink,
                        })
                    })
                    .collect()
            })
            .collect();
        beam = extend_and_prune(&beam, &extensions, scorer, options.beam_width, &mut stats)?;
        stats.clusters_processed += 1;
    }

    Ok(finish(
        beam,
        |h| h.spans.iter().map(|&(a, b)| lattice.cluster(a, b)).collect(),
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viseme::Viseme::*;

    /// Scores a sentence by a fixed table; unknown sentences get a large score.
    struct TableScorer(Vec<(&'static str, f64)>);

    impl Scorer for TableScorer {
        fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
            Ok(batch
                .iter()
                .map(|w| {
                    let s = w.join(" ");
                    self.0.iter().find(|(k, _)| *k == s).map_or(1000.0, |(_, v)| *v)
                })
                .collect())
        }
    }

    fn c(v: &[Viseme]) -> VisemeCluster {
        VisemeCluster::new(v.to_vec()).unwrap()
    }

    fn toy_index() -> InverseIndex {
        InverseIndex::from_entries(
            vec![
                (c(&[P]), vec!["PA".into(), "PB".into()]),
                (c(&[T]), vec!["TA".into(), "TB".into()]),
                (c(&[P, T]), vec!["PT".into()]),
            ],
            |w| if w == "PB" { Some(1) } else { None },
        )
    }

    #[test]
    fn single_cluster_rules() {
        let idx = toy_index();
        let scorer = TableScorer(vec![]);
        let r = decode_scenario1(&[c(&[P, T])], &idx, &scorer, &DecodeOptions::default()).unwrap();
        assert_eq!(r.sentence, vec!["PT"]);
        assert_eq!(r.selection, Selection::SingleMatch);
        let r = decode_scenario1(&[c(&[P])], &idx, &scorer, &DecodeOptions::default()).unwrap();
        assert_eq!(r.sentence, vec!["PB"]);
        assert_eq!(r.selection, Selection::MostFrequent);
    }

    #[test]
    fn extend_and_prune_examples() {
        let scorer = TableScorer(vec![("X A", 2.0), ("X B", 3.0), ("X C", 3.0)]);
        let beam = Beam {
            capacity: 1,
            members: vec![Hypothesis {
                words: vec!["X".into()],
                perplexity: 1.0,
                cursor: 1,
                complete: false,
                spans: vec![(0, 1)],
            }],
        };
        let ext = |w: &str| Extension { word: w.into(), span: (1, 2), cursor: 2, complete: true };
        let mut stats = DecodeStats::default();
        let out = extend_and_prune(&beam, &[vec![ext("B"), ext("A")]], &scorer, 1, &mut stats).unwrap();
        assert_eq!(out.members()[0].words, vec!["X", "A"]);
        assert_eq!(out.members()[0].perplexity, 2.0);
        assert!(stats.beam_truncated);
        // equal scores: lexicographically smaller survives
        let out = extend_and_prune(&beam, &[vec![ext("C"), ext("B")]], &scorer, 1, &mut stats).unwrap();
        assert_eq!(out.members()[0].words, vec!["X", "B"]);
        // capacity above candidate count keeps everything, sorted
        let out = extend_and_prune(&beam, &[vec![ext("C"), ext("B"), ext("A")]], &scorer, 10, &mut stats).unwrap();
        let got: Vec<String> = out.members().iter().map(Hypothesis::sentence).collect();
        assert_eq!(got, vec!["X A", "X B", "X C"]);
        assert_eq!(stats.hypotheses_scored, 7);
    }

    #[test]
    fn complete_members_are_carried() {
        let scorer = TableScorer(vec![("Y Z", 5.0)]);
        let done = Hypothesis { words: vec!["W".into()], perplexity: 4.0, cursor: 2, complete: true, spans: vec![(0, 2)] };
        let open = Hypothesis { words: vec!["Y".into()], perplexity: 1.0, cursor: 1, complete: false, spans: vec![(0, 1)] };
        let beam = Beam { capacity: 5, members: vec![open, done.clone()] };
        let ext = Extension { word: "Z".into(), span: (1, 2), cursor: 2, complete: true };
        let mut stats = DecodeStats::default();
        let out = extend_and_prune(&beam, &[vec![ext], vec![]], &scorer, 5, &mut stats).unwrap();
        assert_eq!(out.members()[0], done);
        assert_eq!(out.members()[1].sentence(), "Y Z");
        assert!(out.all_complete());
    }

    #[test]
    fn scenario1_beam_picks_lowest() {
        let idx = toy_index();
        let scorer = TableScorer(vec![("PA TB", 3.0), ("PB TA", 2.5)]);
        let r = decode_scenario1(&[c(&[P]), c(&[T])], &idx, &scorer, &DecodeOptions::default()).unwrap();
        assert_eq!(r.text(), "PB TA");
        assert_eq!(r.alternates.len(), 3);
        assert_eq!(r.clusters, vec![c(&[P]), c(&[T])]);
        assert!(matches!(
            decode_scenario1(&[c(&[P]), c(&[K])], &idx, &scorer, &DecodeOptions::default()),
            Err(DecodeError::EmptyCluster(_))
        ));
        assert!(matches!(decode_scenario1(&[], &idx, &scorer, &DecodeOptions::default()), Err(DecodeError::EmptyInput)));
    }

    #[test]
    fn scenario2_over_lattice() {
        let idx = toy_index();
        // single-cluster reading PT competes as a complete hypothesis
        let scorer = TableScorer(vec![("PT", 4.0), ("PA TA", 5.0)]);
        let r = decode_scenario2(&[P, T], &idx, &scorer, &DecodeOptions::default()).unwrap();
        assert_eq!(r.text(), "PT");
        assert_eq!(r.selection, Selection::Beam);
        assert_eq!(r.stats.segmentations, 2);
        let scorer = TableScorer(vec![("PT", 6.0), ("PA TA", 5.0)]);
        let r = decode_scenario2(&[P, T], &idx, &scorer, &DecodeOptions::default()).unwrap();
        assert_eq!(r.text(), "PA TA");
        assert_eq!(r.visemes(), vec![P, T]);
        // the literal flowchart takes the single-word branch
        let literal = DecodeOptions { eager_single_word: true, ..DecodeOptions::default() };
        let r = decode_scenario2(&[P, T], &idx, &scorer, &literal).unwrap();
        assert_eq!(r.text(), "PT");
        assert_eq!(r.selection, Selection::SingleMatch);
        assert!(matches!(decode_scenario2(&[K], &idx, &scorer, &DecodeOptions::default()), Err(DecodeError::NoSegmentation)));
        assert!(matches!(decode_scenario2(&[], &idx, &scorer, &DecodeOptions::default()), Err(DecodeError::EmptyInput)));
    }

    #[test]
    fn scenario2_degenerate_single_word() {
        let idx = InverseIndex::from_entries(vec![(c(&[K, K]), vec!["ONLY".to_string()])], |_| None);
        let r = decode_scenario2(&[K, K], &idx, &TableScorer(vec![]), &DecodeOptions::default()).unwrap();
        assert_eq!(r.text(), "ONLY");
        assert_eq!(r.selection, Selection::SingleMatch);
    }

    #[test]
    fn zero_beam_rejected() {
        let idx = toy_index();
        let opts = DecodeOptions { beam_width: 0, ..DecodeOptions::default() };
        assert!(matches!(
            decode_scenario1(&[c(&[P])], &idx, &TableScorer(vec![]), &opts),
            Err(DecodeError::InvalidBeamWidth)
        ));
    }
}
