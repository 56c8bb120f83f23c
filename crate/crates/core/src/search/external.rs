use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EvalRequest, EvalResult, Evaluator};
use crate::graph::NetworkGraph;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("empty evaluator command")]
    EmptyCommand,
    #[error("cannot parse evaluator command {0:?}")]
    BadCommand(String),
    #[error("cannot spawn evaluator {command:?}")]
    Spawn { command: String, source: std::io::Error },
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Request<'a> {
    Evaluate { id: &'a str, epochs: u32, arch: &'a NetworkGraph },
    Shutdown,
}

#[derive(Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum Outcome {
    Ok {
        val_accuracy: f64,
    },
    Error {
        #[serde(default)]
        message: String,
    },
}

#[derive(Deserialize)]
struct Response {
    #[serde(rename = "type")]
    kind: String,
    id: String,
    #[serde(flatten)]
    outcome: Outcome,
}

/// Child process speaking the JSON-lines evaluation protocol.
///
/// All requests of a batch are written up front; responses may arrive in any
/// order. The timeout bounds the wait for the next response, so a slow but
/// progressing evaluator is not cut off.
pub struct ExternalEvaluator {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Option<String>>,
    reader: Option<JoinHandle<()>>,
    timeout: Duration,
    exited: bool,
}

impl ExternalEvaluator {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ExternalError> {
        let argv = shlex::split(command).ok_or_else(|| ExternalError::BadCommand(command.to_string()))?;
        let (program, args) = argv.split_first().ok_or(ExternalError::EmptyCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ExternalError::Spawn { command: command.to_string(), source })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Some(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(None);
        });
        Ok(Self { command: command.to_string(), child, stdin, lines: rx, reader: Some(reader), timeout, exited: false })
    }

    fn send(&mut self, request: &Request<'_>) -> std::io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or_else(|| std::io::Error::other("stdin closed"))?;
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        stdin.write_all(line.as_bytes())?;
        stdin.flush()
    }

    /// Sends the shutdown message and reaps the child.
    pub fn shutdown(&mut self) {
        if !self.exited {
            let _ = self.send(&Request::Shutdown);
        }
        self.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => break,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    break;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            }
        }
        self.exited = true;
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate_batch(&mut self, batch: &[EvalRequest<'_>]) -> Vec<EvalResult> {
        let mut results: Vec<Option<EvalResult>> = vec![None; batch.len()];
        if self.exited {
            return batch.iter().map(|_| Err("evaluator process has exited".into())).collect();
        }
        let mut pending: HashMap<&str, usize> = HashMap::new();
        for (i, r) in batch.iter().enumerate() {
            let sent = self.send(&Request::Evaluate { id: r.id, epochs: r.epochs, arch: r.graph });
            match sent {
                Ok(()) => {
                    pending.insert(r.id, i);
                }
                Err(e) => results[i] = Some(Err(format!("cannot send request: {e}"))),
            }
        }
        let mut deadline = Instant::now() + self.timeout;
        while !pending.is_empty() {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(wait) {
                Ok(Some(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let resp: Response = match serde_json::from_str(&line) {
                        Ok(r) => r,
                        Err(e) => {
                            log::warn!("evaluator protocol error ({e}): {line}");
                            continue;
                        }
                    };
                    if resp.kind != "result" {
                        log::warn!("evaluator sent unexpected message type {:?}: {line}", resp.kind);
                        continue;
                    }
                    let Some(i) = pending.remove(resp.id.as_str()) else {
                        log::warn!("evaluator answered unknown or finished id {:?}", resp.id);
                        continue;
                    };
                    results[i] = Some(match resp.outcome {
                        Outcome::Ok { val_accuracy } if val_accuracy.is_finite() => Ok(val_accuracy),
                        Outcome::Ok { val_accuracy } => Err(format!("non-finite accuracy {val_accuracy}")),
                        Outcome::Error { message } => Err(message),
                    });
                    deadline = Instant::now() + self.timeout;
                }
                Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                    log::error!("evaluator {:?} exited with {} requests pending", self.command, pending.len());
                    self.exited = true;
                    for (_, i) in pending.drain() {
                        results[i] = Some(Err("evaluator process exited".into()));
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    log::error!("evaluator timed out after {:?}", self.timeout);
                    for (_, i) in pending.drain() {
                        results[i] = Some(Err(format!("timed out after {:?}", self.timeout)));
                    }
                }
            }
        }
        results.into_iter().map(|r| r.expect("every request resolved")).collect()
    }

    fn describe(&self) -> String {
        format!("extern:{}", self.command)
    }
}

/// Spawns an evaluator, scores one batch and shuts it down.
pub fn evaluate_external(
    batch: &[EvalRequest<'_>],
    command: &str,
    timeout: Duration,
) -> Result<Vec<EvalResult>, ExternalError> {
    let mut ev = ExternalEvaluator::spawn(command, timeout)?;
    let out = ev.evaluate_batch(batch);
    ev.shutdown();
    Ok(out)
}
