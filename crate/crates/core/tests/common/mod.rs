//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use viseme_decode::scorer::{Scorer, ScorerError};
use viseme_decode::{Engine, InverseIndex, Viseme, VisemeCluster, VisemeMap};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

pub fn read_data(rel: &str) -> String {
    std::fs::read_to_string(data(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Full dictionary with ranks under the built-in map.
pub fn full_engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| {
        Engine::from_sources(&read_data("cmudict.dict"), Some(&read_data("word_ranks.tsv")), None).unwrap()
    })
}

/// Full dictionary under the map with AY drawn as `ah`.
pub fn full_engine_ay_as_ah() -> Engine {
    Engine::from_sources(
        &read_data("cmudict.dict"),
        Some(&read_data("word_ranks.tsv")),
        Some(&read_data("visemes_ay_as_ah.tsv")),
    )
    .unwrap()
}

pub fn cluster(v: &[Viseme]) -> VisemeCluster {
    VisemeCluster::new(v.to_vec()).unwrap()
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

// ---------------------------------------------------------------- scorers

/// Every word has probability `1/v`.
pub struct UniformScorer(pub f64);

impl Scorer for UniformScorer {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        Ok(batch
            .iter()
            .map(|w| {
                let n = w.len() as f64;
                let log_prob = -n * self.0.ln();
                (-log_prob / n).exp()
            })
            .collect())
    }
}

pub fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Deterministic pseudo-random score per sentence, with deliberate ties.
pub struct HashScorer {
    pub buckets: u64,
}

impl HashScorer {
    pub fn score(&self, words: &[String]) -> f64 {
        1.0 + (fnv1a(&words.join(" ")) % self.buckets) as f64 / 4.0
    }
}

impl Scorer for HashScorer {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        Ok(batch.iter().map(|w| self.score(w)).collect())
    }
}

// ---------------------------------------------------------------- toy indexes

pub const TOY_ALPHABET: [Viseme; 5] = [Viseme::P, Viseme::T, Viseme::K, Viseme::Aa, Viseme::Iy];

#[derive(Debug, Clone)]
pub struct ToyIndex {
    pub keys: Vec<Vec<Viseme>>,
    /// Words per key; every word belongs to exactly one key.
    pub words: BTreeMap<Vec<Viseme>, Vec<String>>,
    pub ranks: HashMap<String, u32>,
}

impl ToyIndex {
    pub fn random(rng: &mut impl Rng, max_keys: usize, max_key_len: usize, alphabet: usize, max_words: usize) -> Self {
        let alphabet = &TOY_ALPHABET[..alphabet.clamp(1, TOY_ALPHABET.len())];
        let n_keys = rng.gen_range(1..=max_keys);
        let mut keys = BTreeSet::new();
        for _ in 0..n_keys {
            let len = rng.gen_range(1..=max_key_len);
            keys.insert((0..len).map(|_| *alphabet.choose(rng).unwrap()).collect::<Vec<_>>());
        }
        let keys: Vec<Vec<Viseme>> = keys.into_iter().collect();
        let mut words = BTreeMap::new();
        let mut ranks = HashMap::new();
        let mut next_rank = 1;
        for (ki, key) in keys.iter().enumerate() {
            let n = rng.gen_range(1..=max_words);
            let ws: Vec<String> = (0..n).map(|j| format!("W{ki}X{j}")).collect();
            for w in &ws {
                if rng.gen_bool(0.5) {
                    ranks.insert(w.clone(), next_rank);
                    next_rank += 1;
                }
            }
            words.insert(key.clone(), ws);
        }
        // shuffle rank values so they do not follow key order
        let mut values: Vec<u32> = ranks.values().copied().collect();
        values.shuffle(rng);
        for (v, r) in ranks.values_mut().zip(values) {
            *v = r;
        }
        Self { keys, words, ranks }
    }

    pub fn index(&self) -> InverseIndex {
        InverseIndex::from_entries(
            self.words.iter().map(|(k, ws)| (cluster(k), ws.clone())),
            |w| self.ranks.get(w).copied(),
        )
    }

    /// Most frequent word for a key, computed from the raw ranks.
    pub fn most_frequent(&self, key: &[Viseme]) -> String {
        let mut ws = self.words[key].clone();
        ws.sort_by_key(|w| (!self.ranks.contains_key(w), self.ranks.get(w).copied(), w.clone()));
        ws[0].clone()
    }

    pub fn random_sequence(&self, rng: &mut impl Rng, max_len: usize, alphabet: usize) -> Vec<Viseme> {
        let alphabet = &TOY_ALPHABET[..alphabet.clamp(1, TOY_ALPHABET.len())];
        // half the time build from keys so that segmentations exist
        if rng.gen_bool(0.5) {
            let mut seq = Vec::new();
            while seq.len() < max_len {
                let k = self.keys.choose(rng).unwrap();
                if seq.len() + k.len() > max_len {
                    break;
                }
                seq.extend_from_slice(k);
                if rng.gen_bool(0.3) {
                    break;
                }
            }
            if !seq.is_empty() {
                return seq;
            }
        }
        let len = rng.gen_range(1..=max_len);
        (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
    }
}

// ---------------------------------------------------------------- oracles

/// Every split of `seq` whose parts are all keys, by trying all 2^(n-1) cut masks.
pub fn brute_force_segmentations(keys: &BTreeSet<Vec<Viseme>>, seq: &[Viseme]) -> BTreeSet<Vec<Vec<Viseme>>> {
    let mut out = BTreeSet::new();
    if seq.is_empty() {
        return out;
    }
    let n = seq.len();
    for mask in 0u32..(1 << (n - 1)) {
        let mut parts = Vec::new();
        let mut start = 0;
        for i in 1..n {
            if mask & (1 << (i - 1)) != 0 {
                parts.push(seq[start..i].to_vec());
                start = i;
            }
        }
        parts.push(seq[start..].to_vec());
        if parts.iter().all(|p| keys.contains(p)) {
            out.insert(parts);
        }
    }
    out
}

/// Plain recursive edit distance, memoized on suffix positions.
pub fn recursive_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j + 1, memo).min(go(a, b, i + 1, j, memo)).min(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// All sentences reachable from a segmentation list.
pub fn all_sentences(toy: &ToyIndex, segmentations: &BTreeSet<Vec<Vec<Viseme>>>) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for seg in segmentations {
        let mut partial: Vec<Vec<String>> = vec![Vec::new()];
        for key in seg {
            let ws = &toy.words[key];
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    ws.iter().map(move |w| {
                        let mut q = p.clone();
                        q.push(w.clone());
                        q
                    })
                })
                .collect();
        }
        out.extend(partial);
    }
    out
}

/// Lowest score, then fewer words, then lexicographic.
pub fn argmin_sentence(sentences: &[Vec<String>], score: impl Fn(&[String]) -> f64) -> (Vec<String>, f64) {
    sentences
        .iter()
        .map(|s| (s.clone(), score(s)))
        .min_by(|(a, sa), (b, sb)| sa.total_cmp(sb).then(a.len().cmp(&b.len())).then(a.cmp(b)))
        .expect("at least one sentence")
}

/// Expected decode of a toy instance: the rank rule when the only reading
/// is one cluster, else the exhaustive argmin.
pub fn oracle_decode(toy: &ToyIndex, segmentations: &BTreeSet<Vec<Vec<Viseme>>>, scorer: &HashScorer) -> Vec<String> {
    if segmentations.len() == 1 {
        let only = segmentations.iter().next().unwrap();
        if only.len() == 1 {
            return vec![toy.most_frequent(&only[0])];
        }
    }
    argmin_sentence(&all_sentences(toy, segmentations), |s| scorer.score(s)).0
}

pub fn keyset(toy: &ToyIndex) -> BTreeSet<Vec<Viseme>> {
    toy.keys.iter().cloned().collect()
}

pub fn builtin_map() -> VisemeMap {
    VisemeMap::builtin()
}
