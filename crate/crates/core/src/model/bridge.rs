//! Client (and reference server) for the external-model wire protocol.
//!
//! The protocol is newline-delimited JSON over the bridge process's standard
//! streams, one response line per request line:
//!
//! | request | response |
//! |---|---|
//! | `{"op":"hello","version":1,"k":5}` | `{"version":1,"vocab_size":N,"eos_id":E,"sos_id":S,"vocab":[...]}` |
//! | `{"op":"score","prefix":[0,17],"source":[...]}` | `{"entries":[[id,logprob],...]}` |
//! | `{"op":"encode","text":"..."}` | `{"ids":[...]}` |
//! | `{"op":"bye"}` | `{"ok":true}` |
//!
//! Any request may instead be answered with `{"error":"..."}`. `sos_id`
//! defaults to 0 and `vocab` (surface strings indexed by id) is optional.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ModelError, ScoringModel, TokenDistribution};
use crate::TokenId;

pub const PROTOCOL_VERSION: u64 = 1;

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
}

impl Connection {
    fn request(&mut self, req: &Value) -> Result<Value, ModelError> {
        let io_err = |e: io::Error| ModelError::Io(e.to_string());
        writeln!(self.writer, "{req}").map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(line) => line.map_err(io_err)?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(ModelError::Timeout {
                    millis: self.timeout.as_millis() as u64,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ModelError::Io("bridge closed its output".into()))
            }
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| ModelError::Protocol {
            message: format!("response is not JSON: {e}"),
            payload: line.clone(),
        })?;
        if let Some(err) = value.get("error") {
            return Err(ModelError::Protocol {
                message: format!("bridge reported an error: {err}"),
                payload: line,
            });
        }
        Ok(value)
    }
}

/// A [`ScoringModel`] served by an external process.
pub struct BridgeModel {
    conn: Mutex<Connection>,
    vocab_size: usize,
    sos: TokenId,
    eos: TokenId,
    vocab: Option<Vec<String>>,
}

fn protocol_err(message: impl Into<String>, payload: &Value) -> ModelError {
    ModelError::Protocol {
        message: message.into(),
        payload: payload.to_string(),
    }
}

fn token_list(v: &Value, field: &str, whole: &Value) -> Result<Vec<TokenId>, ModelError> {
    v.as_array()
        .ok_or_else(|| protocol_err(format!("`{field}` is not an array"), whole))?
        .iter()
        .map(|x| {
            x.as_u64()
                .and_then(|x| TokenId::try_from(x).ok())
                .ok_or_else(|| protocol_err(format!("`{field}` holds a non-integer token id"), whole))
        })
        .collect()
}

impl BridgeModel {
    /// Launches `command` through the shell and performs the handshake.
    pub fn spawn(command: &str, top_k: usize, timeout: Duration) -> Result<Self, ModelError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Io(format!("cannot launch bridge `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::handshake(Box::new(stdin), stdout, Some(child), top_k, timeout)
    }

    /// Speaks the protocol over arbitrary streams.
    pub fn connect<R, W>(reader: R, writer: W, top_k: usize, timeout: Duration) -> Result<Self, ModelError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::handshake(Box::new(writer), reader, None, top_k, timeout)
    }

    fn handshake<R: Read + Send + 'static>(
        writer: Box<dyn Write + Send>,
        reader: R,
        child: Option<Child>,
        top_k: usize,
        timeout: Duration,
    ) -> Result<Self, ModelError> {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut conn = Connection {
            writer,
            lines: rx,
            child,
            timeout,
        };
        let hello = conn.request(&json!({"op": "hello", "version": PROTOCOL_VERSION, "k": top_k}))?;
        let version = hello.get("version").and_then(Value::as_u64);
        if version != Some(PROTOCOL_VERSION) {
            return Err(protocol_err(
                format!("protocol version mismatch: expected {PROTOCOL_VERSION}, got {version:?}"),
                &hello,
            ));
        }
        let field = |name: &str| {
            hello
                .get(name)
                .and_then(Value::as_u64)
                .ok_or_else(|| protocol_err(format!("hello response lacks `{name}`"), &hello))
        };
        let vocab_size = field("vocab_size")? as usize;
        let eos = field("eos_id")? as TokenId;
        let sos = hello.get("sos_id").and_then(Value::as_u64).unwrap_or(0) as TokenId;
        let vocab = match hello.get("vocab") {
            None | Some(Value::Null) => None,
            Some(Value::Array(words)) => Some(
                words
                    .iter()
                    .map(|w| w.as_str().map(str::to_owned))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| protocol_err("`vocab` must hold strings", &hello))?,
            ),
            Some(_) => return Err(protocol_err("`vocab` must be an array", &hello)),
        };
        Ok(Self {
            conn: Mutex::new(conn),
            vocab_size,
            sos,
            eos,
            vocab,
        })
    }

    fn request(&self, req: &Value) -> Result<Value, ModelError> {
        self.conn
            .lock()
            .map_err(|_| ModelError::Io("bridge connection poisoned".into()))?
            .request(req)
    }
}

impl Drop for BridgeModel {
    fn drop(&mut self) {
        let Ok(conn) = self.conn.get_mut() else { return };
        let _ = writeln!(conn.writer, "{}", json!({"op": "bye"}));
        let _ = conn.writer.flush();
        let _ = conn.lines.recv_timeout(Duration::from_millis(500));
        if let Some(mut child) = conn.child.take() {
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl ScoringModel for BridgeModel {
    fn score(&self, prefix: &[TokenId], source: &[TokenId], top_k: usize) -> Result<TokenDistribution, ModelError> {
        let resp = self.request(&json!({"op": "score", "prefix": prefix, "source": source}))?;
        let entries = resp
            .get("entries")
            .and_then(Value::as_array)
            .ok_or_else(|| protocol_err("score response lacks `entries`", &resp))?;
        let mut parsed = Vec::with_capacity(entries.len());
        for e in entries {
            let pair = e.as_array().filter(|p| p.len() == 2);
            let (id, lp) = match pair {
                Some(p) => (p[0].as_u64(), p[1].as_f64()),
                None => (None, None),
            };
            match (id, lp) {
                (Some(id), Some(lp)) if (id as usize) < self.vocab_size && lp <= 0.0 && lp.is_finite() => {
                    parsed.push((id as TokenId, lp))
                }
                _ => return Err(protocol_err(format!("malformed entry {e}"), &resp)),
            }
        }
        Ok(TokenDistribution::new(parsed, top_k))
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn sos_id(&self) -> TokenId {
        self.sos
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }

    fn token_text(&self, id: TokenId) -> String {
        self.vocab
            .as_ref()
            .and_then(|v| v.get(id as usize).cloned())
            .unwrap_or_else(|| id.to_string())
    }

    fn encode(&self, text: &str) -> Result<Vec<TokenId>, ModelError> {
        let resp = self.request(&json!({"op": "encode", "text": text}))?;
        let ids = resp
            .get("ids")
            .ok_or_else(|| protocol_err("encode response lacks `ids`", &resp))?;
        token_list(ids, "ids", &resp)
    }
}

/// Serves any [`ScoringModel`] over the wire protocol until `bye` or end of
/// input. Used as a stub bridge and as the reference for external bridges.
pub fn serve<M, R, W>(model: &M, reader: R, mut writer: W) -> io::Result<()>
where
    M: ScoringModel + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut k = super::DEFAULT_TOP_K;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Value>(&line) {
            Err(e) => json!({"error": format!("request is not JSON: {e}")}),
            Ok(req) => match req.get("op").and_then(Value::as_str) {
                Some("hello") => {
                    if let Some(req_k) = req.get("k").and_then(Value::as_u64) {
                        k = req_k as usize;
                    }
                    let vocab: Vec<String> = (0..model.vocab_size() as TokenId).map(|t| model.token_text(t)).collect();
                    json!({
                        "version": PROTOCOL_VERSION,
                        "vocab_size": model.vocab_size(),
                        "eos_id": model.eos_id(),
                        "sos_id": model.sos_id(),
                        "vocab": vocab,
                    })
                }
                Some("score") => {
                    let prefix = req.get("prefix").map(|p| token_list(p, "prefix", &req));
                    let source = req
                        .get("source")
                        .map(|s| token_list(s, "source", &req))
                        .unwrap_or(Ok(Vec::new()));
                    match (prefix, source) {
                        (Some(Ok(prefix)), Ok(source)) => match model.score(&prefix, &source, k) {
                            Ok(d) => json!({"entries": d.entries()}),
                            Err(e) => json!({"error": e.to_string()}),
                        },
                        (Some(Err(e)), _) | (_, Err(e)) => json!({"error": e.to_string()}),
                        (None, _) => json!({"error": "score request lacks `prefix`"}),
                    }
                }
                Some("encode") => match req.get("text").and_then(Value::as_str) {
                    Some(text) => match model.encode(text) {
                        Ok(ids) => json!({"ids": ids}),
                        Err(e) => json!({"error": e.to_string()}),
                    },
                    None => json!({"error": "encode request lacks `text`"}),
                },
                Some("bye") => {
                    writeln!(writer, "{}", json!({"ok": true}))?;
                    writer.flush()?;
                    return Ok(());
                }
                other => json!({"error": format!("unknown op {other:?}")}),
            },
        };
        writeln!(writer, "{reply}")?;
        writer.flush()?;
    }
    Ok(())
}
