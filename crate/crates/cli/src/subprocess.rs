//! Epoch oracle backed by a child process speaking the advisor message
//! kinds with the roles reversed: the scheduler registers a configuration,
//! asks for each epoch with a `continue` decision, and ends it with
//! `finalize`; the child answers with `ack` and `epoch_report`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use curvestop_core::curve::MetricOrientation;
use curvestop_core::dataset::CurveDataset;
use curvestop_core::scheduler::{Candidate, EpochOracle};
use curvestop_core::stopping::Action;

use crate::advisor::{parse_line, Envelope, Message};
use crate::error::{CliError, Result};

pub struct SubprocessOracle {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    orientation: MetricOrientation,
    registered: BTreeSet<u64>,
    progress: BTreeMap<u64, usize>,
}

fn oracle_err(msg: impl Into<String>) -> curvestop_core::Error {
    curvestop_core::Error::Oracle(msg.into())
}

impl SubprocessOracle {
    pub fn spawn(mut command: Command, orientation: MetricOrientation) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| CliError::runtime(format!("cannot start oracle process: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| CliError::runtime("oracle stdout unavailable"))?);
        Ok(SubprocessOracle { child, stdin, stdout, orientation, registered: BTreeSet::new(), progress: BTreeMap::new() })
    }

    fn exchange(&mut self, message: Message) -> curvestop_core::Result<Message> {
        let stdin = self.stdin.as_mut().ok_or_else(|| oracle_err("oracle input closed"))?;
        writeln!(stdin, "{}", Envelope::new(message).to_line())
            .and_then(|_| stdin.flush())
            .map_err(|e| oracle_err(format!("oracle write failed: {e}")))?;
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line).map_err(|e| oracle_err(format!("oracle read failed: {e}")))?;
        if n == 0 {
            return Err(oracle_err("oracle process closed its output"));
        }
        match parse_line(line.trim_end()) {
            Ok(Message::Error { message, .. }) => Err(oracle_err(message)),
            Ok(m) => Ok(m),
            Err(e) => Err(oracle_err(format!("bad oracle reply: {}", e.to_line()))),
        }
    }
}

impl EpochOracle for SubprocessOracle {
    fn run_one_epoch(&mut self, candidate: &Candidate) -> curvestop_core::Result<f64> {
        let session = candidate.key.to_string();
        if !self.registered.contains(&candidate.key) {
            let reply = self.exchange(Message::Register {
                session: session.clone(),
                ap: candidate.config.ap.clone(),
                hp: candidate.config.hp.clone(),
            })?;
            if !matches!(reply, Message::Ack { .. }) {
                return Err(oracle_err(format!("expected ack, got {reply:?}")));
            }
            self.registered.insert(candidate.key);
        }
        let done = self.progress.get(&candidate.key).copied().unwrap_or(0);
        let reply = self.exchange(Message::Decision {
            session,
            epoch: done,
            action: Action::Continue,
            probability: 0.0,
            reference: None,
            y_hat: None,
            sigma: None,
        })?;
        match reply {
            Message::EpochReport { epoch, value, .. } if epoch == done + 1 => {
                self.progress.insert(candidate.key, epoch);
                Ok(value)
            }
            other => Err(oracle_err(format!("expected epoch_report {}, got {other:?}", done + 1))),
        }
    }

    fn reset(&mut self, candidate: &Candidate) -> curvestop_core::Result<()> {
        if self.registered.remove(&candidate.key) {
            self.exchange(Message::Finalize { session: candidate.key.to_string(), value: None })?;
        }
        self.progress.remove(&candidate.key);
        Ok(())
    }

    fn orientation(&self) -> MetricOrientation {
        self.orientation
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        // closing stdin ends the worker loop
        self.stdin.take();
        let _ = self.child.wait();
    }
}

/// Worker side: serves curves of `dataset`; session ids are record indices.
pub fn replay_worker<R: BufRead, W: Write>(dataset: &CurveDataset, reader: R, mut writer: W) -> Result<()> {
    let mut progress: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::runtime(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match parse_line(&line) {
            Err(e) => e,
            Ok(m) => Envelope::new(worker_step(dataset, &mut progress, m)),
        };
        writeln!(writer, "{}", reply.to_line())
            .and_then(|_| writer.flush())
            .map_err(|e| CliError::runtime(format!("write failed: {e}")))?;
    }
    Ok(())
}

fn worker_step(dataset: &CurveDataset, progress: &mut BTreeMap<String, (usize, usize)>, m: Message) -> Message {
    let err = |session: &str, message: String| Message::Error { session: Some(session.to_string()), message };
    match m {
        Message::Register { session, ap, hp } => {
            let Some(index) = session.parse::<usize>().ok().filter(|&i| i < dataset.len()) else {
                return err(&session, format!("no record {session}"));
            };
            let record = &dataset.records()[index];
            if record.config.ap != ap || record.config.hp != hp {
                return err(&session, format!("descriptor does not match record `{}`", record.id()));
            }
            progress.insert(session.clone(), (index, 0));
            Message::Ack { session, best: None }
        }
        Message::Decision { session, action: Action::Continue, .. } => {
            let Some((index, done)) = progress.get_mut(&session) else {
                return err(&session, format!("session `{session}` is not registered"));
            };
            match dataset.records()[*index].curve.values().get(*done) {
                Some(&value) => {
                    *done += 1;
                    Message::EpochReport { session, epoch: *done, value }
                }
                None => err(&session, format!("session `{session}` has no epoch {}", *done + 1)),
            }
        }
        Message::Decision { session, .. } | Message::Finalize { session, .. } => {
            progress.remove(&session);
            Message::Ack { session, best: None }
        }
        other => Message::Error { session: None, message: format!("unexpected message {other:?}") },
    }
}
