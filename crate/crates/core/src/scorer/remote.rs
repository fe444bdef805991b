//! Client for an external perplexity scorer speaking newline-delimited JSON.
//!
//! ```text
//! <- {"hello":"viseme-scorer","version":1}
//! -> {"id":1,"texts":["EXCUSE ME"]}
//! <- {"id":1,"ppl":[5.3]}            or {"id":1,"error":"..."}
//! ```
//!
//! Requests on one connection are serialized and ids strictly increase.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{check_batch, Scorer, ScorerError};

pub const PROTOCOL_NAME: &str = "viseme-scorer";
pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: bool,
}

pub struct RemoteScorer {
    conn: Mutex<Connection>,
    child: Option<Child>,
    timeout: Duration,
    handshake: Value,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("timeout", &self.timeout)
            .field("handshake", &self.handshake)
            .finish()
    }
}

impl RemoteScorer {
    /// Launch `argv` as a child process and complete the handshake.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self, ScorerError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ScorerError::Transport("empty external scorer command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::Transport(format!("cannot launch `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::over_streams(stdout, stdin, timeout) {
            Ok(mut scorer) => {
                scorer.child = Some(child);
                Ok(scorer)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    /// Connect to a scorer listening on a Unix domain socket.
    #[cfg(unix)]
    pub fn connect_unix(path: &std::path::Path, timeout: Duration) -> Result<Self, ScorerError> {
        let stream = std::os::unix::net::UnixStream::connect(path)
            .map_err(|e| ScorerError::Transport(format!("cannot connect to {}: {e}", path.display())))?;
        let reader = stream
            .try_clone()
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        Self::over_streams(reader, stream, timeout)
    }

    /// Speak the protocol over an arbitrary byte stream pair.
    pub fn over_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, ScorerError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("scorer-reader".into())
            .spawn(move || {
                for line in BufReader::new(reader).lines() {
                    let failed = line.is_err();
                    if tx.send(line).is_err() || failed {
                        break;
                    }
                }
            })
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        let mut conn = Connection {
            writer: Box::new(writer),
            lines: rx,
            next_id: 1,
            broken: false,
        };
        let line = read_line(&mut conn, timeout)?;
        let handshake = check_handshake(&line)?;
        Ok(Self {
            conn: Mutex::new(conn),
            child: None,
            timeout,
            handshake,
        })
    }

    /// The sidecar's handshake object, including any declared conventions.
    pub fn handshake(&self) -> &Value {
        &self.handshake
    }

    /// Send one request and return the perplexities in order.
    pub fn score_texts(&self, texts: &[String]) -> Result<Vec<f64>, ScorerError> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if conn.broken {
            return Err(ScorerError::Transport("connection unusable after an earlier failure".into()));
        }
        let result = self.exchange(&mut conn, texts);
        if matches!(
            result,
            Err(ScorerError::Transport(_) | ScorerError::Timeout { .. } | ScorerError::Malformed { .. })
        ) {
            conn.broken = true;
        }
        result
    }

    fn exchange(&self, conn: &mut Connection, texts: &[String]) -> Result<Vec<f64>, ScorerError> {
        let id = conn.next_id;
        conn.next_id += 1;
        let request = json!({ "id": id, "texts": texts });
        let mut payload = request.to_string();
        payload.push('\n');
        conn.writer
            .write_all(payload.as_bytes())
            .and_then(|_| conn.writer.flush())
            .map_err(|e| ScorerError::Transport(format!("write failed: {e}")))?;

        let line = read_line(conn, self.timeout)?;
        let malformed = |reason: &str| ScorerError::Malformed {
            reason: reason.to_string(),
            payload: line.clone(),
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| malformed(&format!("invalid JSON ({e})")))?;
        let got_id = value.get("id").and_then(Value::as_u64).ok_or_else(|| malformed("missing integer id"))?;
        if got_id != id {
            return Err(malformed(&format!("response id {got_id} does not match request id {id}")));
        }
        if let Some(err) = value.get("error") {
            let message = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
            return Err(ScorerError::Remote { id, message });
        }
        let ppl = value.get("ppl").and_then(Value::as_array).ok_or_else(|| malformed("missing ppl array"))?;
        if ppl.len() != texts.len() {
            return Err(malformed(&format!("expected {} perplexities, got {}", texts.len(), ppl.len())));
        }
        ppl.iter()
            .map(|v| {
                let x = v.as_f64().ok_or_else(|| malformed("non-numeric perplexity"))?;
                if x.is_finite() && x > 0.0 {
                    Ok(x)
                } else {
                    Err(ScorerError::InvalidScore { value: x })
                }
            })
            .collect()
    }
}

impl Scorer for RemoteScorer {
    fn batch_perplexity(&self, batch: &[Vec<String>]) -> Result<Vec<f64>, ScorerError> {
        check_batch(batch)?;
        let texts: Vec<String> = batch.iter().map(|words| words.join(" ")).collect();
        self.score_texts(&texts)
    }
}

impl Drop for RemoteScorer {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn read_line(conn: &mut Connection, timeout: Duration) -> Result<String, ScorerError> {
    match conn.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => Ok(line),
        Ok(Err(e)) => Err(ScorerError::Transport(format!("read failed: {e}"))),
        Err(RecvTimeoutError::Timeout) => Err(ScorerError::Timeout {
            timeout_ms: timeout.as_millis() as u64,
        }),
        Err(RecvTimeoutError::Disconnected) => Err(ScorerError::Transport("scorer closed its output".into())),
    }
}

fn check_handshake(line: &str) -> Result<Value, ScorerError> {
    let mismatch = |reason: &str| ScorerError::VersionMismatch {
        reason: reason.to_string(),
        payload: line.to_string(),
    };
    let value: Value = serde_json::from_str(line).map_err(|e| ScorerError::Malformed {
        reason: format!("invalid handshake JSON ({e})"),
        payload: line.to_string(),
    })?;
    if value.get("hello").and_then(Value::as_str) != Some(PROTOCOL_NAME) {
        return Err(mismatch("unexpected protocol name"));
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(PROTOCOL_VERSION) => Ok(value),
        _ => Err(mismatch("unsupported protocol version")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    /// Write sink that discards everything.
    struct Sink;
    impl Write for Sink {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    fn scripted(lines: &str) -> Result<RemoteScorer, ScorerError> {
        RemoteScorer::over_streams(Cursor::new(lines.to_string().into_bytes()), Sink, Duration::from_secs(5))
    }

    #[test]
    fn handshake_checks() {
        assert!(scripted("{\"hello\":\"viseme-scorer\",\"version\":1}\n").is_ok());
        assert!(matches!(
            scripted("{\"hello\":\"viseme-scorer\",\"version\":2}\n"),
            Err(ScorerError::VersionMismatch { .. })
        ));
        assert!(matches!(scripted("{\"hello\":\"other\",\"version\":1}\n"), Err(ScorerError::VersionMismatch { .. })));
        assert!(matches!(scripted("nope\n"), Err(ScorerError::Malformed { .. })));
        assert!(matches!(scripted(""), Err(ScorerError::Transport(_))));
    }

    #[test]
    fn scripted_responses() {
        let s = scripted(concat!(
            "{\"hello\":\"viseme-scorer\",\"version\":1,\"tokens\":\"model\"}\n",
            "{\"id\":1,\"ppl\":[5.5,7.0]}\n",
            "{\"id\":2,\"error\":\"empty\"}\n",
            "{\"id\":7,\"ppl\":[1.0]}\n",
        ))
        .unwrap();
        assert_eq!(s.handshake()["tokens"], "model");
        let out = s.batch_perplexity(&[vec!["EXCUSE".into(), "ME".into()], vec!["HI".into()]]).unwrap();
        assert_eq!(out, vec![5.5, 7.0]);
        match s.score_texts(&[]) {
            Err(ScorerError::Remote { id: 2, message }) => assert_eq!(message, "empty"),
            other => panic!("{other:?}"),
        }
        match s.score_texts(&["X".into()]) {
            Err(ScorerError::Malformed { payload, .. }) => assert!(payload.contains("\"id\":7")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(s.score_texts(&["X".into()]), Err(ScorerError::Transport(_))));
    }

    #[test]
    fn arity_and_value_checks() {
        let s = scripted("{\"hello\":\"viseme-scorer\",\"version\":1}\n{\"id\":1,\"ppl\":[2.0]}\n").unwrap();
        assert!(matches!(s.score_texts(&["A".into(), "B".into()]), Err(ScorerError::Malformed { .. })));
        let s = scripted("{\"hello\":\"viseme-scorer\",\"version\":1}\n{\"id\":1,\"ppl\":[-1.0]}\n").unwrap();
        assert!(matches!(s.score_texts(&["A".into()]), Err(ScorerError::InvalidScore { .. })));
    }
}
