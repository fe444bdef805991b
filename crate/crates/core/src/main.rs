use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use viseme_decode::artifact::{read_artifact, write_artifact, SourceDigests};
use viseme_decode::config::{ConfigError, ConfigLayer, OutputFormat, RunConfig, ScorerChoice};
use viseme_decode::engine::{corpus_lines, evaluate, format_sentence_visemes, is_fatal, map_ordered, parse_viseme_line, Engine, EvalOptions};
use viseme_decode::lexicon::{LexiconError, SentenceVisemes};
use viseme_decode::scorer::{NgramModel, RemoteScorer, ScorerHandle};
use viseme_decode::{chunker, DecodeError, Scenario};

/// Fatal failures carry their exit code; everything else exits 2.
#[derive(Debug)]
struct Fatal(u8);

impl std::fmt::Display for Fatal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Fatal {}

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "viseme-decode", version, about = "Decode viseme sequences into English sentences")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct GlobalOpts {
    /// TOML config file (default: $VISEME_DECODE_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit
    #[arg(long, global = true)]
    print_config: bool,
    /// Pronouncing dictionary (CMU format)
    #[arg(long, global = true)]
    dict: Option<PathBuf>,
    /// Frequency ranks, `rank<TAB>WORD` per line
    #[arg(long, global = true)]
    ranks: Option<PathBuf>,
    /// Phoneme-to-viseme overrides, `PHONEME<TAB>viseme` per line
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Prebuilt index artifact (replaces --dict/--ranks/--map)
    #[arg(long, global = true)]
    artifact: Option<PathBuf>,
    /// Trained n-gram model (JSON from `scorer train`)
    #[arg(long, global = true)]
    lm: Option<PathBuf>,
    /// Train the n-gram model from this corpus at startup
    #[arg(long, global = true)]
    lm_corpus: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: Option<u8>,
    /// Beam width
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long, global = true, value_enum)]
    scorer: Option<ScorerArg>,
    /// External scorer command line, split on whitespace
    #[arg(long, global = true)]
    external_cmd: Option<String>,
    /// Unix socket of a running external scorer
    #[arg(long, global = true)]
    external_socket: Option<PathBuf>,
    #[arg(long, global = true)]
    external_timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    external_batch: Option<usize>,
    /// n-gram order
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Add-k smoothing constant
    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long, global = true)]
    max_segmentations: Option<usize>,
    #[arg(long, global = true)]
    max_sequence_len: Option<usize>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Take the single-word branch whenever the whole stream is one word
    #[arg(long, global = true)]
    eager_single_word: bool,
    /// Exclude spaces from CER
    #[arg(long, global = true)]
    no_cer_spaces: bool,
    /// More logging (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum ScorerArg {
    Ngram,
    External,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Table,
    Records,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the lexicon and inverse index artifact
    Build {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Convert text lines to viseme clusters or streams
    ToVisemes { input: Option<PathBuf> },
    /// List every segmentation of viseme streams
    Chunk {
        input: Option<PathBuf>,
        /// Use the plain shortest-prefix recursion instead of the lattice
        #[arg(long)]
        literal_recursion: bool,
    },
    /// Decode viseme lines into sentences
    Decode { input: Option<PathBuf> },
    /// Decode a reference corpus and report error rates
    Eval { corpus: PathBuf },
    /// Scorer utilities
    Scorer {
        #[command(subcommand)]
        command: ScorerCommand,
    },
}

#[derive(Subcommand, Debug)]
enum ScorerCommand {
    /// Train an n-gram model on a text corpus
    Train {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

impl GlobalOpts {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            dict: self.dict.clone(),
            ranks: self.ranks.clone(),
            map: self.map.clone(),
            artifact: self.artifact.clone(),
            lm: self.lm.clone(),
            lm_corpus: self.lm_corpus.clone(),
            scenario: self.scenario,
            beam: self.beam,
            scorer: self.scorer.map(|s| match s {
                ScorerArg::Ngram => ScorerChoice::Ngram,
                ScorerArg::External => ScorerChoice::External,
            }),
            external_cmd: self.external_cmd.as_ref().map(|s| s.split_whitespace().map(str::to_string).collect()),
            external_socket: self.external_socket.clone(),
            external_timeout_ms: self.external_timeout_ms,
            external_batch: self.external_batch,
            order: self.order,
            k: self.k,
            max_segmentations: self.max_segmentations,
            max_sequence_len: self.max_sequence_len,
            jobs: self.jobs,
            format: self.format.map(|f| match f {
                FormatArg::Table => OutputFormat::Table,
                FormatArg::Records => OutputFormat::Records,
            }),
            eager_single_word: self.eager_single_word.then_some(true),
            cer_spaces: self.no_cer_spaces.then_some(false),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let level = match cli.opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let code = err.downcast_ref::<Fatal>().map_or(EXIT_CONFIG, |f| f.0);
            let mut chain = err.chain().filter(|e| !e.is::<Fatal>());
            if let Some(first) = chain.next() {
                eprint!("error: {first}");
                for cause in chain {
                    eprint!(": {cause}");
                }
                eprintln!();
            }
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = RunConfig::resolve(std::env::vars(), cli.opts.config.as_deref(), cli.opts.layer())
        .map_err(|e: ConfigError| anyhow!(e))?;
    if cli.opts.print_config {
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let Some(command) = cli.command else {
        bail!("no command given; see --help");
    };
    match command {
        Command::Build { out } => cmd_build(&cfg, &out),
        Command::ToVisemes { input } => cmd_to_visemes(&cfg, input.as_deref()),
        Command::Chunk { input, literal_recursion } => cmd_chunk(&cfg, input.as_deref(), literal_recursion),
        Command::Decode { input } => cmd_decode(&cfg, input.as_deref()),
        Command::Eval { corpus } => cmd_eval(&cfg, &corpus),
        Command::Scorer { command: ScorerCommand::Train { corpus, out } } => cmd_train(&cfg, &corpus, &out),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => read_file(p),
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("cannot read standard input")?;
            Ok(s)
        }
    }
}

fn load_engine(cfg: &RunConfig) -> Result<Engine> {
    if let Some(path) = &cfg.artifact {
        let text = read_file(path)?;
        let (engine, _) = read_artifact(&text).with_context(|| format!("invalid artifact {}", path.display()))?;
        return Ok(engine);
    }
    let (engine, _) = engine_from_sources(cfg)?;
    Ok(engine)
}

fn engine_from_sources(cfg: &RunConfig) -> Result<(Engine, SourceDigests)> {
    let dict_path = cfg.dict.as_ref().ok_or_else(|| anyhow!("no dictionary: pass --dict or --artifact"))?;
    let dict = read_file(dict_path)?;
    let ranks = cfg.ranks.as_deref().map(read_file).transpose()?;
    let map = cfg.map.as_deref().map(read_file).transpose()?;
    let mut digests = SourceDigests::default();
    digests.add("dict", dict.as_bytes());
    if let Some(r) = &ranks {
        digests.add("ranks", r.as_bytes());
    }
    if let Some(m) = &map {
        digests.add("map", m.as_bytes());
    }
    let engine = Engine::from_sources(&dict, ranks.as_deref(), map.as_deref()).map_err(|e| {
        let which = match &e {
            viseme_decode::engine::EngineError::Lexicon(LexiconError::Ranks { .. } | LexiconError::DuplicateRank { .. }) => {
                cfg.ranks.clone()
            }
            viseme_decode::engine::EngineError::Symbol(_) => cfg.map.clone(),
            _ => Some(dict_path.clone()),
        };
        anyhow!(e).context(format!("cannot load {}", which.unwrap_or_default().display()))
    })?;
    Ok((engine, digests))
}

fn load_scorer(cfg: &RunConfig) -> Result<ScorerHandle> {
    match cfg.scorer {
        ScorerChoice::Ngram => {
            let model = if let Some(path) = &cfg.lm {
                NgramModel::from_json(&read_file(path)?).with_context(|| format!("invalid model {}", path.display()))?
            } else if let Some(path) = &cfg.lm_corpus {
                NgramModel::train(&read_file(path)?, cfg.order, cfg.k)
                    .with_context(|| format!("cannot train on {}", path.display()))?
            } else {
                bail!("the n-gram scorer needs --lm or --lm-corpus");
            };
            Ok(ScorerHandle::ngram(model))
        }
        ScorerChoice::External => {
            let timeout = Duration::from_millis(cfg.external_timeout_ms);
            let client = if let Some(sock) = &cfg.external_socket {
                connect_socket(sock, timeout)?
            } else if !cfg.external_cmd.is_empty() {
                RemoteScorer::spawn(&cfg.external_cmd, timeout).map_err(|e| anyhow!(e).context(Fatal(EXIT_RUNTIME)))?
            } else {
                bail!("the external scorer needs --external-cmd or --external-socket");
            };
            Ok(ScorerHandle::external(client, cfg.external_batch))
        }
    }
}

#[cfg(unix)]
fn connect_socket(path: &Path, timeout: Duration) -> Result<RemoteScorer> {
    RemoteScorer::connect_unix(path, timeout).map_err(|e| anyhow!(e).context(Fatal(EXIT_RUNTIME)))
}

#[cfg(not(unix))]
fn connect_socket(_: &Path, _: Duration) -> Result<RemoteScorer> {
    bail!("socket scorers are only supported on Unix")
}

fn cmd_build(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let (engine, digests) = engine_from_sources(cfg)?;
    let text = write_artifact(&engine, &digests);
    fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    println!(
        "entries: {}  ranked: {}  index keys: {}  longest key: {}",
        engine.lexicon().len(),
        engine.lexicon().ranked_len(),
        engine.index().len(),
        engine.index().max_key_len()
    );
    Ok(0)
}

fn emit(lines: &[String]) -> Result<()> {
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_to_visemes(cfg: &RunConfig, input: Option<&Path>) -> Result<u8> {
    let engine = load_engine(cfg)?;
    let text = read_input(input)?;
    let scenario = cfg.scenario();
    let mut failed = false;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            out.push(match cfg.format {
                OutputFormat::Table => String::new(),
                OutputFormat::Records => json!({"line": line_no, "visemes": ""}).to_string(),
            });
            continue;
        }
        match engine.to_visemes(line, scenario) {
            Ok(v) => {
                let s = format_sentence_visemes(&v);
                out.push(match cfg.format {
                    OutputFormat::Table => s,
                    OutputFormat::Records => json!({"line": line_no, "visemes": s}).to_string(),
                });
            }
            Err(e) => {
                failed = true;
                let token = match &e {
                    LexiconError::OutOfVocabulary(t) => Some(t.clone()),
                    _ => None,
                };
                eprintln!("line {line_no}: {e}");
                out.push(match cfg.format {
                    OutputFormat::Table => format!("ERROR\t{e}"),
                    OutputFormat::Records => json!({"line": line_no, "error": e.to_string(), "token": token}).to_string(),
                });
            }
        }
    }
    emit(&out)?;
    Ok(if failed { EXIT_PARTIAL } else { 0 })
}

fn cmd_chunk(cfg: &RunConfig, input: Option<&Path>, literal: bool) -> Result<u8> {
    let engine = load_engine(cfg)?;
    let text = read_input(input)?;
    let limits = cfg.limits();
    let mut failed = false;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let result = parse_viseme_line(line, Scenario::Unsegmented)
            .map_err(|e| e.to_string())
            .and_then(|v| match v {
                SentenceVisemes::Stream(seq) => {
                    let find = if literal { chunker::find_possible_chunks_literal } else { chunker::find_possible_chunks };
                    find(engine.index(), &seq, &limits).map_err(|e| e.to_string())
                }
                SentenceVisemes::Clusters(_) => unreachable!("scenario 2 parse yields a stream"),
            });
        match result {
            Ok(set) => {
                let segs: Vec<String> = set
                    .iter()
                    .map(|seg| seg.iter().map(ToString::to_string).collect::<Vec<_>>().join(" | "))
                    .collect();
                match cfg.format {
                    OutputFormat::Table => out.extend(segs.into_iter().map(|s| format!("{line_no}\t{s}"))),
                    OutputFormat::Records => out.push(json!({"line": line_no, "segmentations": segs}).to_string()),
                }
            }
            Err(e) => {
                failed = true;
                eprintln!("line {line_no}: {e}");
                out.push(match cfg.format {
                    OutputFormat::Table => format!("{line_no}\tERROR\t{e}"),
                    OutputFormat::Records => json!({"line": line_no, "error": e}).to_string(),
                });
            }
        }
    }
    emit(&out)?;
    Ok(if failed { EXIT_PARTIAL } else { 0 })
}

enum LineOutcome {
    Blank,
    Decoded(Box<viseme_decode::DecodeResult>),
    Failed(String),
}

fn cmd_decode(cfg: &RunConfig, input: Option<&Path>) -> Result<u8> {
    let engine = load_engine(cfg)?;
    let scorer = load_scorer(cfg)?;
    let text = read_input(input)?;
    let scenario = cfg.scenario();
    let options = cfg.decode_options();
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let outcomes = map_ordered(&lines, cfg.jobs, |&(_, line)| -> Result<LineOutcome, DecodeError> {
        if line.trim().is_empty() {
            return Ok(LineOutcome::Blank);
        }
        let input = match parse_viseme_line(line, scenario) {
            Ok(v) => v,
            Err(e) => return Ok(LineOutcome::Failed(e.to_string())),
        };
        match engine.decode(&input, &scorer, &options) {
            Ok(r) => Ok(LineOutcome::Decoded(Box::new(r))),
            Err(DecodeError::Scorer(e)) if is_fatal(&e) => Err(DecodeError::Scorer(e)),
            Err(e) => Ok(LineOutcome::Failed(e.to_string())),
        }
    })?;

    let mut failed = false;
    let mut out = Vec::new();
    for ((line_no, _), outcome) in lines.iter().zip(outcomes) {
        let outcome = outcome.map_err(|e| anyhow!(e).context(Fatal(EXIT_RUNTIME)))?;
        out.push(match (outcome, cfg.format) {
            (LineOutcome::Blank, OutputFormat::Table) => String::new(),
            (LineOutcome::Blank, OutputFormat::Records) => json!({"line": line_no, "sentence": null}).to_string(),
            (LineOutcome::Decoded(r), OutputFormat::Table) => format!("{}\t{:.4}", r.text(), r.perplexity),
            (LineOutcome::Decoded(r), OutputFormat::Records) => json!({
                "line": line_no,
                "sentence": r.text(),
                "perplexity": r.perplexity,
                "clusters": r.clusters.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "selection": r.selection,
                "alternates": r.alternates.iter().map(|h| json!({"sentence": h.sentence(), "perplexity": h.perplexity})).collect::<Vec<_>>(),
                "stats": r.stats,
            })
            .to_string(),
            (LineOutcome::Failed(e), format) => {
                failed = true;
                eprintln!("line {line_no}: {e}");
                match format {
                    OutputFormat::Table => format!("ERROR\t{e}"),
                    OutputFormat::Records => json!({"line": line_no, "error": e}).to_string(),
                }
            }
        });
    }
    emit(&out)?;
    Ok(if failed { EXIT_PARTIAL } else { 0 })
}

fn cmd_eval(cfg: &RunConfig, corpus: &Path) -> Result<u8> {
    let engine = load_engine(cfg)?;
    let scorer = load_scorer(cfg)?;
    let corpus = corpus_lines(&read_file(corpus)?);
    let options = EvalOptions {
        scenario: cfg.scenario(),
        decode: cfg.decode_options(),
        cer_spaces: cfg.cer_spaces,
        jobs: cfg.jobs,
    };
    let report = evaluate(&engine, &corpus, &scorer, &options).map_err(|e| {
        let code = if matches!(e, viseme_decode::engine::EvalError::Metrics(_)) { EXIT_PARTIAL } else { EXIT_RUNTIME };
        anyhow!(e).context(Fatal(code))
    })?;
    match cfg.format {
        OutputFormat::Table => print!("{}", report.to_table(&format!("Scenario {}", cfg.scenario))),
        OutputFormat::Records => print!("{}", report.to_records()),
    }
    io::stdout().flush()?;
    Ok(if report.totals.skipped > 0 { EXIT_PARTIAL } else { 0 })
}

fn cmd_train(cfg: &RunConfig, corpus: &Path, out: &Path) -> Result<u8> {
    let text = read_file(corpus)?;
    let model = NgramModel::train(&text, cfg.order, cfg.k).with_context(|| format!("cannot train on {}", corpus.display()))?;
    fs::write(out, model.to_json()).with_context(|| format!("cannot write {}", out.display()))?;
    println!("order: {}  k: {}  vocabulary: {}", model.order(), model.k(), model.vocab_size());
    Ok(0)
}

