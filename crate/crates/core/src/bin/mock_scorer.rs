//! Protocol test fixture: a scorer that needs no model.
//!
//! By default every word has probability `1/V`, so every nonempty text has
//! perplexity `V`. `--hash` instead derives a stable score from the text.
//! The remaining flags inject protocol faults.

use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "viseme-mock-scorer")]
struct Opts {
    /// Vocabulary size of the uniform model
    #[arg(long, default_value_t = 10)]
    vocab: u32,
    /// Score by a hash of the text instead
    #[arg(long)]
    hash: bool,
    /// Announce this protocol version
    #[arg(long, default_value_t = 1)]
    version: u64,
    /// Stop answering (but stay alive) after this many responses
    #[arg(long)]
    hang_after: Option<u64>,
    /// Reply with a non-JSON line after this many responses
    #[arg(long)]
    garbage_after: Option<u64>,
    /// Reply with the wrong id after this many responses
    #[arg(long)]
    wrong_id_after: Option<u64>,
    /// Exit without replying after this many responses
    #[arg(long)]
    exit_after: Option<u64>,
    /// Serve one connection on a Unix socket instead of stdio
    #[arg(long)]
    socket: Option<PathBuf>,
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

fn perplexity(opts: &Opts, text: &str) -> f64 {
    let n = text.split_whitespace().count().max(1) as f64;
    if opts.hash {
        return 1.0 + (fnv1a(text) % 100_000) as f64 / 100.0;
    }
    let log_prob = -n * f64::from(opts.vocab).ln();
    (-log_prob / n).exp()
}

fn respond(opts: &Opts, line: &str) -> Value {
    let Ok(req) = serde_json::from_str::<Value>(line) else {
        return json!({"id": null, "error": "malformed request"});
    };
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    let Some(texts) = req.get("texts").and_then(Value::as_array) else {
        return json!({"id": id, "error": "missing texts"});
    };
    if texts.is_empty() {
        return json!({"id": id, "error": "empty"});
    }
    let mut ppl = Vec::with_capacity(texts.len());
    for t in texts {
        match t.as_str() {
            Some(s) if !s.trim().is_empty() => ppl.push(perplexity(opts, s)),
            _ => return json!({"id": id, "error": "empty"}),
        }
    }
    json!({"id": id, "ppl": ppl})
}

fn serve(opts: &Opts, reader: impl BufRead, mut writer: impl Write) -> Result<()> {
    let hello = json!({"hello": "viseme-scorer", "version": opts.version, "model": "mock", "tokens": "words"});
    writeln!(writer, "{hello}")?;
    writer.flush()?;
    let mut answered = 0u64;
    for line in reader.lines() {
        let line = line?;
        if opts.exit_after == Some(answered) {
            return Ok(());
        }
        if opts.hang_after == Some(answered) {
            std::thread::park();
            continue;
        }
        let out = if opts.garbage_after == Some(answered) {
            "this is not json".to_string()
        } else {
            let mut v = respond(opts, &line);
            if opts.wrong_id_after == Some(answered) {
                v["id"] = json!(v["id"].as_u64().unwrap_or(0) + 1000);
            }
            v.to_string()
        };
        writeln!(writer, "{out}")?;
        writer.flush()?;
        answered += 1;
    }
    Ok(())
}

fn main() -> Result<()> {
    let opts = Opts::parse();
    match &opts.socket {
        #[cfg(unix)]
        Some(path) => {
            let listener = std::os::unix::net::UnixListener::bind(path)?;
            let (stream, _) = listener.accept()?;
            serve(&opts, BufReader::new(stream.try_clone()?), stream)
        }
        #[cfg(not(unix))]
        Some(_) => anyhow::bail!("sockets need Unix"),
        None => serve(&opts, io::stdin().lock(), io::stdout().lock()),
    }
}
