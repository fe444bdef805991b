//! Run configuration, resolved from defaults, `VISEME_DECODE_*` environment
//! variables, a TOML file and command-line flags (later layers win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::chunker::{ChunkLimits, DEFAULT_MAX_SEGMENTATIONS, DEFAULT_MAX_SEQUENCE_LEN};
use crate::decoder::{DecodeOptions, Scenario, DEFAULT_BEAM_WIDTH};
use crate::scorer::{DEFAULT_K, DEFAULT_ORDER};

pub const ENV_PREFIX: &str = "VISEME_DECODE_";
pub const CONFIG_ENV: &str = "VISEME_DECODE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerChoice {
    Ngram,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Table,
    Records,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub dict: Option<PathBuf>,
    pub ranks: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub artifact: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub lm_corpus: Option<PathBuf>,
    pub scenario: u8,
    pub beam: usize,
    pub scorer: ScorerChoice,
    pub external_cmd: Vec<String>,
    pub external_socket: Option<PathBuf>,
    pub external_timeout_ms: u64,
    pub external_batch: usize,
    pub order: usize,
    pub k: f64,
    pub max_segmentations: usize,
    pub max_sequence_len: usize,
    pub jobs: usize,
    pub format: OutputFormat,
    pub eager_single_word: bool,
    pub cer_spaces: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dict: None,
            ranks: None,
            map: None,
            artifact: None,
            lm: None,
            lm_corpus: None,
            scenario: 1,
            beam: DEFAULT_BEAM_WIDTH,
            scorer: ScorerChoice::Ngram,
            external_cmd: Vec::new(),
            external_socket: None,
            external_timeout_ms: 60_000,
            external_batch: 256,
            order: DEFAULT_ORDER,
            k: DEFAULT_K,
            max_segmentations: DEFAULT_MAX_SEGMENTATIONS,
            max_sequence_len: DEFAULT_MAX_SEQUENCE_LEN,
            jobs: 1,
            format: OutputFormat::Table,
            eager_single_word: false,
            cer_spaces: true,
        }
    }
}

/// One configuration layer; unset fields defer to lower layers.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigLayer {
    pub dict: Option<PathBuf>,
    pub ranks: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub artifact: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub lm_corpus: Option<PathBuf>,
    pub scenario: Option<u8>,
    pub beam: Option<usize>,
    pub scorer: Option<ScorerChoice>,
    #[serde(default, deserialize_with = "argv")]
    pub external_cmd: Option<Vec<String>>,
    pub external_socket: Option<PathBuf>,
    pub external_timeout_ms: Option<u64>,
    pub external_batch: Option<usize>,
    pub order: Option<usize>,
    pub k: Option<f64>,
    pub max_segmentations: Option<usize>,
    pub max_sequence_len: Option<usize>,
    pub jobs: Option<usize>,
    pub format: Option<OutputFormat>,
    pub eager_single_word: Option<bool>,
    pub cer_spaces: Option<bool>,
}

/// Accept either an array of arguments or one whitespace-separated string.
fn argv<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<String>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Argv {
        Line(String),
        List(Vec<String>),
    }
    Ok(Some(match Argv::deserialize(d)? {
        Argv::Line(s) => s.split_whitespace().map(str::to_string).collect(),
        Argv::List(v) => v,
    }))
}

macro_rules! overlay {
    ($cfg:ident, $layer:ident; $($field:ident),+ ; $($opt:ident),+) => {
        $( if let Some(v) = $layer.$field { $cfg.$field = v; } )+
        $( if $layer.$opt.is_some() { $cfg.$opt = $layer.$opt; } )+
    };
}

impl RunConfig {
    pub fn apply(&mut self, layer: ConfigLayer) {
        overlay!(self, layer;
            scenario, beam, scorer, external_cmd, external_timeout_ms, external_batch, order, k,
            max_segmentations, max_sequence_len, jobs, format, eager_single_word, cer_spaces;
            dict, ranks, map, artifact, lm, lm_corpus, external_socket);
    }

    /// Defaults, then environment, then the config file, then `flags`.
    /// The file is `file` if given, else `$VISEME_DECODE_CONFIG` if set.
    pub fn resolve<I>(env: I, file: Option<&Path>, flags: ConfigLayer) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let env: BTreeMap<String, String> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        let mut cfg = RunConfig::default();
        cfg.apply(layer_from_env(&env)?);
        let file = file.map(Path::to_path_buf).or_else(|| env.get(CONFIG_ENV).map(PathBuf::from));
        if let Some(path) = file {
            cfg.apply(layer_from_file(&path)?);
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if Scenario::from_number(self.scenario).is_none() {
            return Err(ConfigError::Invalid(format!("scenario must be 1 or 2, got {}", self.scenario)));
        }
        if self.beam == 0 {
            return Err(ConfigError::Invalid("beam width must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(ConfigError::Invalid(format!("k must be positive, got {}", self.k)));
        }
        if self.order == 0 {
            return Err(ConfigError::Invalid("n-gram order must be at least 1".into()));
        }
        for path in [&self.dict, &self.ranks, &self.map, &self.artifact, &self.lm, &self.lm_corpus]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::from_number(self.scenario).expect("validated scenario")
    }

    pub fn limits(&self) -> ChunkLimits {
        ChunkLimits {
            max_segmentations: self.max_segmentations,
            max_sequence_len: self.max_sequence_len,
        }
    }

    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            beam_width: self.beam,
            eager_single_word: self.eager_single_word,
            limits: self.limits(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn layer_from_file(path: &Path) -> Result<ConfigLayer, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `VISEME_DECODE_BEAM=20` becomes `beam = 20`. Values that are not valid
/// TOML literals are taken as strings.
fn layer_from_env(env: &BTreeMap<String, String>) -> Result<ConfigLayer, ConfigError> {
    let mut table = toml::Table::new();
    for (name, value) in env {
        if name == CONFIG_ENV {
            continue;
        }
        let key = name[ENV_PREFIX.len()..].to_lowercase().replace('_', "-");
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.clone()));
        table.insert(key, parsed);
    }
    let names: Vec<String> = env.keys().filter(|k| *k != CONFIG_ENV).cloned().collect();
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Env {
        name: names.join(", "),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(env(&[]), None, ConfigLayer::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.beam, 50);
        assert_eq!(cfg.scenario(), Scenario::Segmented);
    }

    #[test]
    fn precedence_flags_file_env() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "beam = 20\nscenario = 2\nexternal-cmd = \"python3 side.py --x\"").unwrap();
        let e = env(&[("VISEME_DECODE_BEAM", "7"), ("VISEME_DECODE_JOBS", "3"), ("OTHER", "1")]);
        let flags = ConfigLayer { scenario: Some(1), ..ConfigLayer::default() };
        let cfg = RunConfig::resolve(e, Some(file.path()), flags).unwrap();
        assert_eq!(cfg.beam, 20); // file over env
        assert_eq!(cfg.jobs, 3); // env over default
        assert_eq!(cfg.scenario, 1); // flag over file
        assert_eq!(cfg.external_cmd, vec!["python3", "side.py", "--x"]);
    }

    #[test]
    fn config_file_from_env_var() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "format = \"records\"").unwrap();
        let e = env(&[("VISEME_DECODE_CONFIG", file.path().to_str().unwrap())]);
        let cfg = RunConfig::resolve(e, None, ConfigLayer::default()).unwrap();
        assert_eq!(cfg.format, OutputFormat::Records);
    }

    #[test]
    fn env_strings_and_errors() {
        let cfg = RunConfig::resolve(env(&[("VISEME_DECODE_SCORER", "external")]), None, ConfigLayer::default()).unwrap();
        assert_eq!(cfg.scorer, ScorerChoice::External);
        let err = RunConfig::resolve(env(&[("VISEME_DECODE_BOGUS", "1")]), None, ConfigLayer::default()).unwrap_err();
        assert!(matches!(err, ConfigError::Env { .. }));
    }

    #[test]
    fn validation() {
        let bad = |layer: ConfigLayer| RunConfig::resolve(env(&[]), None, layer).unwrap_err();
        assert!(matches!(bad(ConfigLayer { scenario: Some(3), ..Default::default() }), ConfigError::Invalid(_)));
        assert!(matches!(bad(ConfigLayer { beam: Some(0), ..Default::default() }), ConfigError::Invalid(_)));
        match bad(ConfigLayer { dict: Some("/no/such/dict".into()), ..Default::default() }) {
            ConfigError::MissingFile(p) => assert_eq!(p, PathBuf::from("/no/such/dict")),
            other => panic!("{other:?}"),
        }
        let missing = RunConfig::resolve(env(&[]), Some(Path::new("/no/such.toml")), ConfigLayer::default()).unwrap_err();
        assert!(missing.to_string().contains("/no/such.toml"));
    }

    #[test]
    fn print_round_trips() {
        let cfg = RunConfig { dict: Some("d.txt".into()), ..RunConfig::default() };
        let layer: ConfigLayer = toml::from_str(&cfg.to_toml()).unwrap();
        let mut back = RunConfig::default();
        back.apply(layer);
        assert_eq!(back, cfg);
    }
}
