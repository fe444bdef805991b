//! Deterministic text serialization of a built [`Engine`].
//!
//! ```text
//! VISEME-INDEX 1
//! source<TAB>dict<TAB><sha256>
//! map<TAB>AA<TAB>aa
//! word<TAB>EXCUSE<TAB>2210<TAB>IH K S K Y UW Z;EH K S K Y UW S
//! key<TAB>p iy<TAB>ME MY ...
//! checksum<TAB><sha256 of every preceding byte>
//! ```
//!
//! Index lines are redundant with the lexicon and map; loading verifies
//! that they agree.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::Engine;
use crate::index::InverseIndex;
use crate::lexicon::{Lexicon, Pronunciation, VisemeCluster};
use crate::viseme::{Phoneme, Viseme, VisemeMap};

pub const MAGIC: &str = "VISEME-INDEX 1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArtifactError {
    #[error("not an index artifact (missing `{MAGIC}` header)")]
    BadMagic,
    #[error("artifact line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("artifact checksum mismatch (recorded {recorded}, computed {computed})")]
    Checksum { recorded: String, computed: String },
    #[error("artifact is truncated (no checksum line)")]
    Truncated,
    #[error("artifact index does not match its lexicon and map")]
    InconsistentIndex,
}

/// SHA-256 digests of the inputs an artifact was built from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceDigests {
    pub entries: Vec<(String, String)>,
}

impl SourceDigests {
    pub fn add(&mut self, name: &str, content: &[u8]) {
        self.entries.push((name.to_string(), sha256_hex(content)));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn format_pron(p: &Pronunciation) -> String {
    p.iter().map(|ph| ph.label()).collect::<Vec<_>>().join(" ")
}

pub fn write_artifact(engine: &Engine, sources: &SourceDigests) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (name, digest) in &sources.entries {
        let _ = writeln!(out, "source\t{name}\t{digest}");
    }
    for (ph, v) in engine.map().iter() {
        let _ = writeln!(out, "map\t{}\t{}", ph.label(), v.label());
    }
    let lexicon = engine.lexicon();
    for (word, prons) in lexicon.iter() {
        let rank = lexicon.rank(word).map_or_else(|| "-".to_string(), |r| r.to_string());
        let prons: Vec<String> = prons.iter().map(format_pron).collect();
        let _ = writeln!(out, "word\t{word}\t{rank}\t{}", prons.join(";"));
    }
    for (cluster, words) in engine.index().iter() {
        let _ = writeln!(out, "key\t{cluster}\t{}", words.join(" "));
    }
    let digest = sha256_hex(out.as_bytes());
    let _ = writeln!(out, "checksum\t{digest}");
    out
}

pub fn read_artifact(text: &str) -> Result<(Engine, SourceDigests), ArtifactError> {
    if !text.starts_with(MAGIC) {
        return Err(ArtifactError::BadMagic);
    }
    let body_end = text.rfind("checksum\t").ok_or(ArtifactError::Truncated)?;
    let recorded = text[body_end + "checksum\t".len()..].trim_end().to_string();
    let computed = sha256_hex(&text.as_bytes()[..body_end]);
    if recorded != computed {
        return Err(ArtifactError::Checksum { recorded, computed });
    }

    let mut sources = SourceDigests::default();
    let mut map = VisemeMap::builtin();
    let mut lexicon = Lexicon::default();
    let mut keys: Vec<(VisemeCluster, Vec<String>)> = Vec::new();
    for (i, line) in text[..body_end].lines().enumerate().skip(1) {
        let line_no = i + 1;
        let bad = |message: String| ArtifactError::Line { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["source", name, digest] => sources.entries.push((name.to_string(), digest.to_string())),
            ["map", ph, v] => {
                let ph: Phoneme = ph.parse().map_err(|e| bad(format!("{e}")))?;
                let v: Viseme = v.parse().map_err(|e| bad(format!("{e}")))?;
                map.set(ph, v);
            }
            ["word", word, rank, prons] => {
                let rank = match *rank {
                    "-" => None,
                    r => Some(r.parse::<u32>().map_err(|e| bad(format!("bad rank `{r}`: {e}")))?),
                };
                let prons = prons
                    .split(';')
                    .map(|p| {
                        p.split_whitespace()
                            .map(|ph| ph.parse::<Phoneme>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| bad(format!("{e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if prons.iter().any(Vec::is_empty) {
                    return Err(bad(format!("`{word}` has an empty pronunciation")));
                }
                lexicon.insert_raw(word.to_string(), prons, rank);
            }
            ["key", cluster, words] => {
                let cluster = VisemeCluster::parse(cluster)
                    .map_err(|e| bad(format!("{e}")))?
                    .ok_or_else(|| bad("empty cluster".into()))?;
                keys.push((cluster, words.split(' ').map(str::to_string).collect()));
            }
            _ => return Err(bad(format!("unrecognized record `{}`", fields[0]))),
        }
    }
    let index = InverseIndex::from_sorted(keys);
    if index != InverseIndex::build(&lexicon, &map) {
        return Err(ArtifactError::InconsistentIndex);
    }
    Ok((Engine::from_parts(lexicon, map, index), sources))
}
