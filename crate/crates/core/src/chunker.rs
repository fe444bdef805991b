//! Segmentation of an unbounded viseme stream into index-key clusters.
//!
//! Two routes produce the same segmentation set: a step-for-step port of the
//! recursive shortest-prefix search, and a lattice over cut positions built
//! by dynamic programming. The lattice is what the decoder walks.
//!
//! The silent viseme `s` never occurs inside a key, so it acts as a forced
//! boundary: segmentation runs independently on the runs between silences.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::index::InverseIndex;
use crate::lexicon::VisemeCluster;
use crate::viseme::Viseme;

pub const DEFAULT_MAX_SEGMENTATIONS: usize = 10_000;
pub const DEFAULT_MAX_SEQUENCE_LEN: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("segmentation count exceeds the cap of {cap}")]
    TooManySegmentations { cap: usize },
    #[error("viseme sequence of length {len} exceeds the cap of {cap}")]
    SequenceTooLong { len: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkLimits {
    pub max_segmentations: usize,
    pub max_sequence_len: usize,
}

impl Default for ChunkLimits {
    fn default() -> Self {
        Self {
            max_segmentations: DEFAULT_MAX_SEGMENTATIONS,
            max_sequence_len: DEFAULT_MAX_SEQUENCE_LEN,
        }
    }
}

impl ChunkLimits {
    pub fn unbounded() -> Self {
        Self {
            max_segmentations: usize::MAX,
            max_sequence_len: usize::MAX,
        }
    }

    fn check_len(&self, len: usize) -> Result<(), ChunkError> {
        if len > self.max_sequence_len {
            Err(ChunkError::SequenceTooLong { len, cap: self.max_sequence_len })
        } else {
            Ok(())
        }
    }
}

pub type Segmentation = Vec<VisemeCluster>;

/// Deduplicated segmentations in canonical order: fewer clusters first,
/// then lexicographically by the sequence of cluster lengths.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentationSet(Vec<Segmentation>);

impl SegmentationSet {
    pub fn from_segmentations(segs: impl IntoIterator<Item = Segmentation>) -> Self {
        let keyed: BTreeSet<(usize, Vec<usize>, Segmentation)> = segs
            .into_iter()
            .map(|s| (s.len(), s.iter().map(VisemeCluster::len).collect(), s))
            .collect();
        Self(keyed.into_iter().map(|(_, _, s)| s).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Segmentation> {
        self.0.iter()
    }

    pub fn contains(&self, seg: &[VisemeCluster]) -> bool {
        self.0.iter().any(|s| s.as_slice() == seg)
    }

    pub fn into_vec(self) -> Vec<Segmentation> {
        self.0
    }
}

impl<'a> IntoIterator for &'a SegmentationSet {
    type Item = &'a Segmentation;
    type IntoIter = std::slice::Iter<'a, Segmentation>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Length of the shortest key prefix of `seq` longer than `min_length`, or 0.
pub fn find_shortest_prefix(index: &InverseIndex, seq: &[Viseme], min_length: usize) -> usize {
    let mut len = min_length + 1;
    loop {
        if len <= seq.len() && index.contains_key(&seq[..len]) {
            return len;
        }
        if len < seq.len() {
            len += 1;
        } else {
            return 0;
        }
    }
}

/// All segmentations of `seq`, via the memoized lattice.
pub fn find_possible_chunks(
    index: &InverseIndex,
    seq: &[Viseme],
    limits: &ChunkLimits,
) -> Result<SegmentationSet, ChunkError> {
    let lattice = SegmentLattice::build(index, seq, limits)?;
    lattice.segmentations(limits.max_segmentations)
}

/// All segmentations of `seq`, by the literal shortest-prefix recursion.
pub fn find_possible_chunks_literal(
    index: &InverseIndex,
    seq: &[Viseme],
    limits: &ChunkLimits,
) -> Result<SegmentationSet, ChunkError> {
    limits.check_len(seq.len())?;
    let runs: Vec<&[Viseme]> = seq.split(|v| v.is_silent()).filter(|r| !r.is_empty()).collect();
    if runs.is_empty() {
        return Ok(SegmentationSet::default());
    }
    let mut combined: Vec<Segmentation> = vec![Vec::new()];
    for run in runs {
        let mut budget = limits.max_segmentations;
        let parts = literal_recursion(index, run, &[], &mut budget)
            .ok_or(ChunkError::TooManySegmentations { cap: limits.max_segmentations })?;
        if parts.is_empty() {
            return Ok(SegmentationSet::default());
        }
        if combined.len().saturating_mul(parts.len()) > limits.max_segmentations {
            return Err(ChunkError::TooManySegmentations { cap: limits.max_segmentations });
        }
        combined = combined
            .iter()
            .flat_map(|head| {
                parts.iter().map(move |tail| {
                    let mut s = head.clone();
                    s.extend(tail.iter().cloned());
                    s
                })
            })
            .collect();
    }
    Ok(SegmentationSet::from_segmentations(combined))
}

/// `None` once more than `budget` successes have been produced.
fn literal_recursion(
    index: &InverseIndex,
    visemes: &[Viseme],
    current: &[VisemeCluster],
    budget: &mut usize,
) -> Option<Vec<Segmentation>> {
    let mut successes = Vec::new();
    let mut n = 0;
    while n < visemes.len() {
        n = find_shortest_prefix(index, visemes, n);
        // no prefix looks like a word
        if n == 0 {
            break;
        }
        let prefix = VisemeCluster::new(visemes[..n].to_vec()).expect("nonempty prefix");
        if n == visemes.len() {
            *budget = budget.checked_sub(1)?;
            let mut done = current.to_vec();
            done.push(prefix);
            successes.push(done);
            return Some(successes);
        }
        let mut next = current.to_vec();
        next.push(prefix);
        successes.extend(literal_recursion(index, &visemes[n..], &next, budget)?);
    }
    Some(successes)
}

/// DAG over cut positions `0..=len` whose start-to-sink paths are exactly
/// the segmentations of the sequence. Only nodes on some complete path are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLattice {
    seq: Vec<Viseme>,
    start: usize,
    /// `edges[i]` holds the end positions of key clusters starting at `i`,
    /// already advanced past any silence.
    edges: Vec<Vec<(usize, usize)>>,
    live: Vec<bool>,
}

impl SegmentLattice {
    pub fn build(index: &InverseIndex, seq: &[Viseme], limits: &ChunkLimits) -> Result<Self, ChunkError> {
        limits.check_len(seq.len())?;
        let n = seq.len();
        let skip_silence = |mut p: usize| {
            while p < n && seq[p].is_silent() {
                p += 1;
            }
            p
        };
        let start = skip_silence(0);

        // edge (cluster_end, next_node): cluster is seq[i..cluster_end]
        let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + 1];
        for (i, out) in edges.iter_mut().enumerate().take(n) {
            if seq[i].is_silent() {
                continue;
            }
            *out = index
                .prefix_lengths(&seq[i..])
                .into_iter()
                .map(|len| (i + len, skip_silence(i + len)))
                .collect();
        }

        // co-reachability (can reach sink), computed right to left
        let mut to_sink = vec![false; n + 1];
        to_sink[n] = true;
        for i in (0..n).rev() {
            edges[i].retain(|&(_, next)| to_sink[next]);
            to_sink[i] = !edges[i].is_empty();
        }
        // reachability from start
        let mut live = vec![false; n + 1];
        if to_sink[start] && start < n {
            live[start] = true;
            for i in start..=n {
                if live[i] {
                    for &(_, next) in &edges[i] {
                        live[next] = true;
                    }
                }
            }
        }
        for (i, out) in edges.iter_mut().enumerate() {
            if !live[i] {
                out.clear();
            }
        }
        Ok(Self {
            seq: seq.to_vec(),
            start,
            edges,
            live,
        })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn sink(&self) -> usize {
        self.seq.len()
    }

    pub fn sequence(&self) -> &[Viseme] {
        &self.seq
    }

    pub fn is_empty(&self) -> bool {
        !self.live[self.start]
    }

    pub fn node_count(&self) -> usize {
        self.live.iter().filter(|l| **l).count()
    }

    /// Outgoing arcs of a node as `(cluster_end, next_node)`; the cluster is
    /// `sequence()[node..cluster_end]`.
    pub fn arcs(&self, node: usize) -> &[(usize, usize)] {
        self.edges.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn cluster(&self, node: usize, cluster_end: usize) -> VisemeCluster {
        VisemeCluster::new(self.seq[node..cluster_end].to_vec()).expect("arcs span at least one viseme")
    }

    /// Number of complete paths, saturating at `u128::MAX`.
    pub fn path_count(&self) -> u128 {
        if self.is_empty() {
            return 0;
        }
        let n = self.seq.len();
        let mut count = vec![0u128; n + 1];
        count[n] = 1;
        for i in (0..n).rev() {
            count[i] = self.edges[i].iter().fold(0u128, |acc, &(_, next)| acc.saturating_add(count[next]));
        }
        count[self.start]
    }

    /// True when the only path is one cluster spanning the whole stream.
    pub fn is_single_cluster(&self) -> bool {
        self.path_count() == 1 && self.arcs(self.start).iter().all(|&(_, next)| next == self.sink())
    }

    /// The whole stream is itself a key.
    pub fn has_whole_span_arc(&self) -> bool {
        self.arcs(self.start).iter().any(|&(_, next)| next == self.sink())
    }

    /// Distinct next clusters after consuming `prefix` from the start.
    /// Empty when the prefix does not follow a lattice path or ends at the sink.
    pub fn continuations(&self, prefix: &[VisemeCluster]) -> Vec<VisemeCluster> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut node = self.start;
        for cluster in prefix {
            let Some(&(_, next)) = self
                .arcs(node)
                .iter()
                .find(|&&(end, _)| &self.seq[node..end] == cluster.visemes())
            else {
                return Vec::new();
            };
            node = next;
        }
        self.arcs(node).iter().map(|&(end, _)| self.cluster(node, end)).collect()
    }

    /// Enumerate every path; errors once more than `cap` paths exist.
    pub fn segmentations(&self, cap: usize) -> Result<SegmentationSet, ChunkError> {
        if self.path_count() > cap as u128 {
            return Err(ChunkError::TooManySegmentations { cap });
        }
        let mut out = Vec::new();
        if !self.is_empty() {
            let mut path = Vec::new();
            self.walk(self.start, &mut path, &mut out);
        }
        Ok(SegmentationSet::from_segmentations(out))
    }

    fn walk(&self, node: usize, path: &mut Segmentation, out: &mut Vec<Segmentation>) {
        if node == self.sink() {
            out.push(path.clone());
            return;
        }
        for &(end, next) in self.arcs(node) {
            path.push(self.cluster(node, end));
            self.walk(next, path, out);
            path.pop();
        }
    }
}
