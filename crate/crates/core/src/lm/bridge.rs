//! Client side of the external-model bridge protocol, plus a mock server that
//! answers from an n-gram model.
//!
//! Newline-delimited JSON, one message per line:
//!
//! ```text
//! server -> {"v":1,"vocab_hash":"<sha256>","vocab_size":V}        handshake
//! client -> {"v":1,"op":"dist","ctx":[ids...],"precision":P}
//! server -> {"v":1,"weights":[w_0,...,w_{V-1}]}                  sum = 2^P
//! server -> {"v":1,"error":"..."}                                 on failure
//! ```
//!
//! Weights are already quantized by the server, so both ends of a stego
//! session see identical integers regardless of float behaviour inside the
//! model process.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ContextState, DistributionProvider, LogitsVector};
use crate::corpus::{NGramModel, TokenId, VocabIdentity};
use crate::error::{Result, StegoError};
use crate::lm::ProbDist;
use crate::quantize::quantize;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub v: u32,
    pub vocab_hash: String,
    pub vocab_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistRequest {
    pub v: u32,
    pub op: String,
    pub ctx: Vec<TokenId>,
    pub precision: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Weights { v: u32, weights: Vec<u64> },
    Error { v: u32, error: String },
}

/// Checks a weights frame against the expected vocabulary size and precision.
pub fn validate_weights(weights: &[u64], vocab_size: usize, precision: u32) -> Result<()> {
    if weights.len() != vocab_size {
        return Err(StegoError::Bridge(format!(
            "response has {} weights, vocabulary has {vocab_size}",
            weights.len()
        )));
    }
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum != 1u128 << precision {
        return Err(StegoError::Bridge(format!(
            "weights sum to {sum}, expected 2^{precision}"
        )));
    }
    Ok(())
}

/// [`DistributionProvider`] talking to an external process over stdio or TCP.
pub struct BridgeProvider {
    lines: Receiver<std::io::Result<String>>,
    writer: Box<dyn Write + Send>,
    vocab_size: usize,
    precision: u32,
    timeout: Duration,
    child: Option<Child>,
    // the reader thread holds a clone, so the socket needs an explicit shutdown
    tcp: Option<TcpStream>,
}

impl BridgeProvider {
    /// Performs the handshake over an already-open transport and checks the
    /// server's vocabulary against `vocab`.
    pub fn from_streams<R, W>(
        reader: R,
        writer: W,
        vocab: &VocabIdentity,
        precision: u32,
        timeout: Duration,
    ) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut provider = BridgeProvider {
            lines: rx,
            writer: Box::new(writer),
            vocab_size: vocab.size,
            precision,
            timeout,
            child: None,
            tcp: None,
        };
        let line = provider.read_line()?;
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| StegoError::Bridge(format!("bad handshake {line:?}: {e}")))?;
        if hs.v != PROTOCOL_VERSION {
            return Err(StegoError::Bridge(format!(
                "protocol version {} not supported",
                hs.v
            )));
        }
        if hs.vocab_size != vocab.size || hs.vocab_hash != vocab.hash {
            return Err(StegoError::Bridge(format!(
                "bridge vocabulary ({}, {}) does not match local ({}, {})",
                hs.vocab_size, hs.vocab_hash, vocab.size, vocab.hash
            )));
        }
        Ok(provider)
    }

    pub fn connect_tcp(
        addr: impl ToSocketAddrs,
        vocab: &VocabIdentity,
        precision: u32,
        timeout: Duration,
    ) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let handle = stream.try_clone()?;
        let mut p = Self::from_streams(reader, stream, vocab, precision, timeout)?;
        p.tcp = Some(handle);
        Ok(p)
    }

    /// Spawns `program args...` and speaks the protocol over its stdin/stdout.
    pub fn spawn(
        program: &str,
        args: &[String],
        vocab: &VocabIdentity,
        precision: u32,
        timeout: Duration,
    ) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        match Self::from_streams(BufReader::new(stdout), stdin, vocab, precision, timeout) {
            Ok(mut p) => {
                p.child = Some(child);
                Ok(p)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    fn read_line(&mut self) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(StegoError::Bridge(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(StegoError::Bridge(format!(
                "no response within {:?}",
                self.timeout
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(StegoError::Bridge("bridge closed the connection".into()))
            }
        }
    }

    /// Raw quantized weights for `ctx`.
    pub fn weights(&mut self, ctx: &[TokenId]) -> Result<Vec<u64>> {
        let req = DistRequest {
            v: PROTOCOL_VERSION,
            op: "dist".into(),
            ctx: ctx.to_vec(),
            precision: self.precision,
        };
        let mut line = serde_json::to_string(&req).expect("request serializes");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| StegoError::Bridge(format!("write failed: {e}")))?;
        let reply = self.read_line()?;
        match serde_json::from_str::<Response>(&reply) {
            Ok(Response::Weights { v, weights }) if v == PROTOCOL_VERSION => {
                validate_weights(&weights, self.vocab_size, self.precision)?;
                Ok(weights)
            }
            Ok(Response::Weights { v, .. }) => Err(StegoError::Bridge(format!(
                "response has protocol version {v}"
            ))),
            Ok(Response::Error { error, .. }) => {
                Err(StegoError::Bridge(format!("bridge reported: {error}")))
            }
            Err(e) => Err(StegoError::Bridge(format!("malformed response {reply:?}: {e}"))),
        }
    }
}

impl Drop for BridgeProvider {
    fn drop(&mut self) {
        if let Some(s) = self.tcp.take() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Integer weights as logits `ln(w / 2^P)`; zero weights become `-inf`.
pub fn weights_to_logits(weights: &[u64], precision: u32) -> LogitsVector {
    let scale = precision as f64 * std::f64::consts::LN_2;
    LogitsVector {
        scores: weights
            .iter()
            .map(|&w| {
                if w == 0 {
                    f64::NEG_INFINITY
                } else {
                    (w as f64).ln() - scale
                }
            })
            .collect(),
    }
}

impl DistributionProvider for BridgeProvider {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&mut self, ctx: &ContextState) -> Result<LogitsVector> {
        let weights = self.weights(ctx.history())?;
        Ok(weights_to_logits(&weights, self.precision))
    }
}

/// Answers one request line. Returns the JSON reply (without newline).
pub fn mock_reply(model: &NGramModel, line: &str) -> String {
    let reply = match serde_json::from_str::<DistRequest>(line) {
        Err(e) => Response::Error {
            v: PROTOCOL_VERSION,
            error: format!("malformed request: {e}"),
        },
        Ok(req) if req.v != PROTOCOL_VERSION || req.op != "dist" => Response::Error {
            v: PROTOCOL_VERSION,
            error: format!("unsupported request v={} op={:?}", req.v, req.op),
        },
        Ok(req) if !(8..=32).contains(&req.precision) => Response::Error {
            v: PROTOCOL_VERSION,
            error: format!("precision {} outside 8..=32", req.precision),
        },
        Ok(req) if req.ctx.iter().any(|&t| t as usize >= model.vocab_size()) => Response::Error {
            v: PROTOCOL_VERSION,
            error: "context token outside vocabulary".into(),
        },
        Ok(req) => {
            let probs = ProbDist {
                probs: model.conditional(&req.ctx).to_f64(),
            };
            match quantize(&probs, req.precision) {
                Ok(q) => Response::Weights {
                    v: PROTOCOL_VERSION,
                    weights: q.weights().to_vec(),
                },
                Err(e) => Response::Error {
                    v: PROTOCOL_VERSION,
                    error: e.to_string(),
                },
            }
        }
    };
    serde_json::to_string(&reply).expect("response serializes")
}

/// Serves the protocol from an n-gram model until the reader closes.
pub fn serve_mock<R: BufRead, W: Write>(
    model: &NGramModel,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    let hs = Handshake {
        v: PROTOCOL_VERSION,
        vocab_hash: model.vocab().hash.clone(),
        vocab_size: model.vocab_size(),
    };
    writeln!(writer, "{}", serde_json::to_string(&hs).expect("handshake serializes"))?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", mock_reply(model, &line))?;
        writer.flush()?;
    }
    Ok(())
}
