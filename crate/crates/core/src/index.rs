//! Inverse index from viseme clusters to the words that produce them.

use std::collections::BTreeMap;

use crate::lexicon::{Lexicon, VisemeCluster};
use crate::viseme::{Viseme, VisemeMap};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct TrieNode {
    children: Vec<(Viseme, u32)>,
    entry: Option<u32>,
}

/// Cluster → words map. Each word list is ordered by frequency rank
/// (ranked words first, ascending), then lexicographically.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InverseIndex {
    entries: Vec<(VisemeCluster, Vec<String>)>,
    nodes: Vec<TrieNode>,
    max_key_len: usize,
}

impl InverseIndex {
    pub fn build(lexicon: &Lexicon, map: &VisemeMap) -> Self {
        let mut grouped: BTreeMap<VisemeCluster, Vec<String>> = BTreeMap::new();
        for (word, prons) in lexicon.iter() {
            for pron in prons {
                let Some(cluster) = VisemeCluster::new(map.map_phonemes(pron)) else {
                    continue;
                };
                let words = grouped.entry(cluster).or_default();
                if words.last().map(String::as_str) != Some(word) {
                    words.push(word.to_string());
                }
            }
        }
        Self::from_entries(grouped, |w| lexicon.rank(w))
    }

    /// Build from explicit cluster → word lists; words are reordered by `rank`.
    pub fn from_entries<I, F>(entries: I, rank: F) -> Self
    where
        I: IntoIterator<Item = (VisemeCluster, Vec<String>)>,
        F: Fn(&str) -> Option<u32>,
    {
        let mut grouped: BTreeMap<VisemeCluster, Vec<String>> = BTreeMap::new();
        for (cluster, words) in entries {
            grouped.entry(cluster).or_default().extend(words);
        }
        let entries = grouped
            .into_iter()
            .filter_map(|(cluster, mut words)| {
                words.sort_by(|a, b| word_order_key(a, &rank).cmp(&word_order_key(b, &rank)));
                words.dedup();
                (!words.is_empty()).then_some((cluster, words))
            })
            .collect();
        Self::from_sorted(entries)
    }

    /// `entries` must be sorted by cluster with nonempty, already ordered word lists.
    pub(crate) fn from_sorted(entries: Vec<(VisemeCluster, Vec<String>)>) -> Self {
        let mut index = InverseIndex {
            entries,
            nodes: vec![TrieNode::default()],
            max_key_len: 0,
        };
        for id in 0..index.entries.len() {
            let visemes = index.entries[id].0.visemes().to_vec();
            index.max_key_len = index.max_key_len.max(visemes.len());
            let mut node = 0usize;
            for v in visemes {
                node = match index.nodes[node].children.iter().find(|(c, _)| *c == v) {
                    Some(&(_, child)) => child as usize,
                    None => {
                        let child = index.nodes.len();
                        index.nodes.push(TrieNode::default());
                        index.nodes[node].children.push((v, child as u32));
                        child
                    }
                };
            }
            index.nodes[node].entry = Some(id as u32);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_key_len(&self) -> usize {
        self.max_key_len
    }

    pub fn get(&self, visemes: &[Viseme]) -> Option<&[String]> {
        let mut node = 0usize;
        for v in visemes {
            node = self.child(node, *v)?;
        }
        self.nodes[node].entry.map(|id| self.entries[id as usize].1.as_slice())
    }

    pub fn contains_key(&self, visemes: &[Viseme]) -> bool {
        self.get(visemes).is_some()
    }

    /// Lengths of every prefix of `visemes` that is a key, ascending.
    pub fn prefix_lengths(&self, visemes: &[Viseme]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut node = 0usize;
        for (i, v) in visemes.iter().enumerate() {
            match self.child(node, *v) {
                Some(next) => node = next,
                None => break,
            }
            if self.nodes[node].entry.is_some() {
                out.push(i + 1);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VisemeCluster, &[String])> {
        self.entries.iter().map(|(c, w)| (c, w.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &VisemeCluster> {
        self.entries.iter().map(|(c, _)| c)
    }

    fn child(&self, node: usize, v: Viseme) -> Option<usize> {
        self.nodes[node]
            .children
            .iter()
            .find(|(c, _)| *c == v)
            .map(|&(_, n)| n as usize)
    }
}

fn word_order_key<'a, F: Fn(&str) -> Option<u32>>(word: &'a str, rank: &F) -> (bool, u32, &'a str) {
    match rank(word) {
        Some(r) => (false, r, word),
        None => (true, 0, word),
    }
}
