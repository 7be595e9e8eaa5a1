//! Client for oracles running in another process, over stdio or TCP.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::protocol::{Message, VERSION};
use super::{LogitVector, Oracle, OracleDescriptor, OracleError, OracleInput, OracleKind, Query};
use crate::render::Image;

pub const TIMEOUT_ENV: &str = "MAPS_ORACLE_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command whose stdin/stdout carry the protocol.
    Exec(String),
    Tcp(String),
}

impl Endpoint {
    /// Parses `exec:<cmd>` or `tcp:<host:port>`.
    pub fn parse(s: &str) -> Option<Endpoint> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            Some(Endpoint::Exec(cmd.to_string()))
        } else {
            s.strip_prefix("tcp:").map(|a| Endpoint::Tcp(a.to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientOptions {
    pub timeout_ms: u64,
    /// Batches in flight at once. The protocol is lockstep, so 1 unless the
    /// server is known to pipeline.
    pub window: usize,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            timeout_ms: DEFAULT_TIMEOUT_MS,
            window: 1,
        }
    }
}

impl ClientOptions {
    /// Defaults with the timeout taken from `MAPS_ORACLE_TIMEOUT_MS` when set.
    pub fn from_env() -> Self {
        let timeout_ms = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        Self { timeout_ms, ..Self::default() }
    }
}

type Line = Result<String, String>;

pub struct ExternalOracle {
    desc: OracleDescriptor,
    max_batch: usize,
    opts: ClientOptions,
    writer: Box<dyn Write + Send>,
    lines: Receiver<Line>,
    child: Option<Child>,
    /// Kept to shut the connection down on drop; the reader thread holds a clone.
    socket: Option<TcpStream>,
    next_seq: u64,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("desc", &self.desc)
            .field("max_batch", &self.max_batch)
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

fn spawn_reader(r: impl std::io::Read + Send + 'static) -> Receiver<Line> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(r).lines() {
            let failed = line.is_err();
            if tx.send(line.map_err(|e| e.to_string())).is_err() || failed {
                return;
            }
        }
    });
    rx
}

impl ExternalOracle {
    pub fn connect(endpoint: &Endpoint) -> Result<Self, OracleError> {
        Self::connect_with(endpoint, ClientOptions::from_env())
    }

    pub fn connect_with(endpoint: &Endpoint, opts: ClientOptions) -> Result<Self, OracleError> {
        let hs = |e: std::io::Error| OracleError::Handshake(e.to_string());
        let (writer, lines, child, socket): (Box<dyn Write + Send>, _, _, _) = match endpoint {
            Endpoint::Exec(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(hs)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), spawn_reader(stdout), Some(child), None)
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(hs)?;
                stream.set_nodelay(true).ok();
                let read = stream.try_clone().map_err(hs)?;
                let keep = stream.try_clone().map_err(hs)?;
                (Box::new(stream), spawn_reader(read), None, Some(keep))
            }
        };
        let id = match endpoint {
            Endpoint::Exec(c) => format!("exec:{c}"),
            Endpoint::Tcp(a) => format!("tcp:{a}"),
        };
        let mut oracle = Self {
            desc: OracleDescriptor {
                kind: OracleKind::External,
                id,
                class_count: 0,
                metadata: serde_json::Value::Null,
            },
            max_batch: 1,
            opts,
            writer,
            lines,
            child,
            socket,
            next_seq: 0,
        };
        oracle.handshake()?;
        Ok(oracle)
    }

    fn handshake(&mut self) -> Result<(), OracleError> {
        let line = Message::Hello { version: VERSION }.to_line();
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| OracleError::Handshake(e.to_string()))?;
        let reply = match self.lines.recv_timeout(Duration::from_millis(self.opts.timeout_ms)) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(OracleError::Handshake(e)),
            Err(RecvTimeoutError::Timeout) => return Err(OracleError::Handshake(format!("no reply within {} ms", self.opts.timeout_ms))),
            Err(RecvTimeoutError::Disconnected) => return Err(OracleError::Handshake("connection closed".into())),
        };
        match Message::parse(&reply) {
            Ok(Message::Ready { class_count, max_batch, id }) => {
                if class_count < 2 {
                    return Err(OracleError::Handshake(format!("class_count {class_count} < 2")));
                }
                if max_batch == 0 {
                    return Err(OracleError::Handshake("max_batch 0".into()));
                }
                self.desc.metadata = serde_json::json!({ "endpoint": self.desc.id, "max_batch": max_batch });
                self.desc.id = id;
                self.desc.class_count = class_count;
                self.max_batch = max_batch;
                Ok(())
            }
            Ok(Message::Error { message, .. }) => Err(OracleError::Handshake(message)),
            Ok(other) => Err(OracleError::Handshake(format!("unexpected reply {other:?}"))),
            Err(e) => Err(OracleError::Handshake(format!("malformed reply: {e}"))),
        }
    }

    pub fn max_batch(&self) -> usize {
        self.max_batch
    }

    fn send(&mut self, seq: u64, images: &[&Image]) -> Result<(), OracleError> {
        let (w, h) = (images[0].width, images[0].height);
        let mut px = Vec::with_capacity(w * h * 3 * images.len());
        for img in images {
            if (img.width, img.height) != (w, h) {
                return Err(OracleError::ImageSize {
                    expected: (w, h),
                    got: (img.width, img.height),
                });
            }
            px.extend(img.to_rgb8());
        }
        let line = Message::batch(seq, w, h, &px, images.len()).to_line();
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| OracleError::Transport {
                batch: seq as usize,
                message: e.to_string(),
            })
    }

    /// Waits for the next reply line; `waiting` is reported on failure.
    fn recv(&mut self, waiting: u64) -> Result<Message, OracleError> {
        let batch = waiting as usize;
        let line = match self.lines.recv_timeout(Duration::from_millis(self.opts.timeout_ms)) {
            Ok(Ok(l)) => l,
            Ok(Err(message)) => return Err(OracleError::Transport { batch, message }),
            Err(RecvTimeoutError::Timeout) => {
                return Err(OracleError::Timeout {
                    batch,
                    millis: self.opts.timeout_ms,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(OracleError::Transport {
                    batch,
                    message: "stream closed".into(),
                })
            }
        };
        Message::parse(&line).map_err(|e| OracleError::Malformed {
            batch,
            message: e.to_string(),
        })
    }

    fn check_values(&self, seq: u64, values: Vec<Vec<f64>>, count: usize) -> Result<Vec<LogitVector>, OracleError> {
        let batch = seq as usize;
        if values.len() != count {
            return Err(OracleError::Malformed {
                batch,
                message: format!("{} rows for {count} images", values.len()),
            });
        }
        values
            .into_iter()
            .map(|row| {
                if row.len() != self.desc.class_count {
                    return Err(OracleError::Malformed {
                        batch,
                        message: format!("row of {} logits, expected {}", row.len(), self.desc.class_count),
                    });
                }
                LogitVector::new(row).map_err(|e| OracleError::Malformed {
                    batch,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// Sends every chunk, keeping at most `window` in flight, and reassembles
    /// replies by seq.
    pub fn classify(&mut self, images: &[&Image]) -> Result<Vec<LogitVector>, OracleError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[&Image]> = images.chunks(self.max_batch).collect();
        let base = self.next_seq;
        self.next_seq += chunks.len() as u64;
        let window = self.opts.window.max(1);
        let mut pending: BTreeMap<u64, usize> = BTreeMap::new();
        let mut done: BTreeMap<u64, Vec<LogitVector>> = BTreeMap::new();
        let mut sent = 0;
        while done.len() < chunks.len() {
            while sent < chunks.len() && pending.len() < window {
                let seq = base + sent as u64;
                self.send(seq, chunks[sent])?;
                pending.insert(seq, chunks[sent].len());
                sent += 1;
            }
            let oldest = *pending.keys().next().expect("something in flight");
            match self.recv(oldest)? {
                Message::Logits { seq, values } => {
                    let Some(count) = pending.remove(&seq) else {
                        return Err(OracleError::Malformed {
                            batch: oldest as usize,
                            message: format!("reply for unknown seq {seq}"),
                        });
                    };
                    done.insert(seq, self.check_values(seq, values, count)?);
                }
                Message::Error { seq, message } => {
                    return Err(OracleError::Remote {
                        batch: seq.unwrap_or(oldest) as usize,
                        message,
                    })
                }
                other => {
                    return Err(OracleError::Malformed {
                        batch: oldest as usize,
                        message: format!("unexpected message {other:?}"),
                    })
                }
            }
        }
        Ok(done.into_values().flatten().collect())
    }
}

impl Oracle for ExternalOracle {
    fn descriptor(&self) -> &OracleDescriptor {
        &self.desc
    }

    fn input(&self) -> OracleInput {
        OracleInput::Image
    }

    fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError> {
        let images = batch
            .iter()
            .map(|q| q.image.ok_or_else(|| OracleError::MissingImage(self.desc.id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.classify(&images)
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
        if let Some(s) = &self.socket {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
    }
}
