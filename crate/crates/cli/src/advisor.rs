//! Line-delimited JSON advisor.
//!
//! A training process registers a configuration, reports one metric value
//! per epoch and receives a continue/terminate decision after every report.
//! Every message carries `"v": 1`:
//!
//! ```text
//! > {"v":1,"kind":"register","session":"a","ap":{"layers":4},"hp":{"learning_rate":0.01}}
//! < {"v":1,"kind":"ack","session":"a"}
//! > {"v":1,"kind":"epoch_report","session":"a","epoch":1,"value":0.31}
//! < {"v":1,"kind":"decision","session":"a","epoch":1,"action":"continue","probability":0.0,"reference":null,"y_hat":null,"sigma":null}
//! > {"v":1,"kind":"finalize","session":"a","value":0.83}
//! < {"v":1,"kind":"ack","session":"a","best":0.83}
//! ```
//!
//! Problems are answered with `{"v":1,"kind":"error","session":..,"message":..}`
//! and leave the session as it was.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use curvestop_core::curve::{ConfigDescriptor, MetricOrientation};
use curvestop_core::srm::SequentialRegressionModel;
use curvestop_core::stopping::{should_terminate, update_best, Action, TerminationPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsio;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Register {
        session: String,
        #[serde(default)]
        ap: BTreeMap<String, f64>,
        #[serde(default)]
        hp: BTreeMap<String, f64>,
    },
    EpochReport {
        session: String,
        epoch: usize,
        value: f64,
    },
    Decision {
        session: String,
        epoch: usize,
        action: Action,
        probability: f64,
        reference: Option<f64>,
        y_hat: Option<f64>,
        sigma: Option<f64>,
    },
    Finalize {
        session: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    Ack {
        session: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        best: Option<f64>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(flatten)]
    pub message: Message,
}

impl Envelope {
    pub fn new(message: Message) -> Self {
        Envelope { v: PROTOCOL_VERSION, message }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }

    pub fn error(session: Option<String>, message: impl Into<String>) -> Self {
        Envelope::new(Message::Error { session, message: message.into() })
    }
}

/// Parses one line; the error reply names the session when it can be found.
pub fn parse_line(line: &str) -> std::result::Result<Message, Envelope> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Envelope::error(None, format!("malformed message: {e}")))?;
    let session = value.get("session").and_then(|s| s.as_str()).map(str::to_string);
    match value.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == PROTOCOL_VERSION as u64 => {}
        Some(v) => return Err(Envelope::error(session, format!("unsupported protocol version {v}"))),
        None => return Err(Envelope::error(session, "missing protocol version field `v`")),
    }
    serde_json::from_value::<Envelope>(value)
        .map(|e| e.message)
        .map_err(|e| Envelope::error(session, format!("malformed message: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub session: String,
    /// Higher-is-better scale.
    pub score: f64,
    pub predicted: bool,
}

/// Finished scores shared by all sessions; persisted after every change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLedger {
    pub v: u32,
    pub orientation: MetricOrientation,
    pub entries: Vec<LedgerEntry>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl BestLedger {
    pub fn new(orientation: MetricOrientation) -> Self {
        BestLedger { v: PROTOCOL_VERSION, orientation, entries: Vec::new(), sorted: Vec::new() }
    }

    pub fn load(path: &Path, orientation: MetricOrientation) -> Result<Self> {
        if !path.exists() {
            return Ok(BestLedger::new(orientation));
        }
        let mut l: BestLedger = serde_json::from_str(&fsio::read_to_string(path)?)
            .map_err(|e| CliError::validation(format!("{}: malformed ledger: {e}", path.display())))?;
        if l.orientation != orientation {
            return Err(CliError::validation(format!(
                "{}: ledger orientation {} does not match the model's {orientation}",
                path.display(),
                l.orientation
            )));
        }
        let mut sorted = Vec::new();
        for e in &l.entries {
            sorted = update_best(sorted, e.score)?;
        }
        l.sorted = sorted;
        Ok(l)
    }

    pub fn push(&mut self, session: &str, score: f64, predicted: bool) -> Result<()> {
        self.sorted = update_best(std::mem::take(&mut self.sorted), score)?;
        self.entries.push(LedgerEntry { session: session.to_string(), score, predicted });
        Ok(())
    }

    /// Scores in descending order.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn best_raw(&self) -> Option<f64> {
        self.sorted.first().map(|&s| self.orientation.denormalize(s))
    }
}

#[derive(Debug, Clone)]
struct Session {
    config: ConfigDescriptor,
    curve: Vec<f64>,
    stopped: bool,
    finalized: bool,
}

/// Session table, model and ledger behind one advisor.
#[derive(Debug)]
pub struct Advisor {
    model: SequentialRegressionModel,
    policy: TerminationPolicy,
    sessions: HashMap<String, Session>,
    ledger: BestLedger,
    ledger_path: Option<PathBuf>,
}

impl Advisor {
    pub fn new(model: SequentialRegressionModel, policy: TerminationPolicy, ledger_path: Option<PathBuf>) -> Result<Self> {
        policy.validate()?;
        let ledger = match &ledger_path {
            Some(p) => BestLedger::load(p, model.orientation())?,
            None => BestLedger::new(model.orientation()),
        };
        Ok(Advisor { model, policy, sessions: HashMap::new(), ledger, ledger_path })
    }

    pub fn ledger(&self) -> &BestLedger {
        &self.ledger
    }

    fn unfinalize(&mut self, session: &str) {
        if let Some(s) = self.sessions.get_mut(session) {
            s.finalized = false;
        }
    }

    fn persist(&self) -> Result<()> {
        match &self.ledger_path {
            Some(p) => fsio::write_json(p, &self.ledger),
            None => Ok(()),
        }
    }

    pub fn handle(&mut self, message: Message) -> Message {
        let session = match &message {
            Message::Register { session, .. } | Message::EpochReport { session, .. } | Message::Finalize { session, .. } => {
                session.clone()
            }
            _ => {
                return Message::Error { session: None, message: "the advisor only accepts register, epoch_report and finalize".into() }
            }
        };
        match self.dispatch(message) {
            Ok(reply) => reply,
            Err(e) => Message::Error { session: Some(session), message: e.to_string() },
        }
    }

    pub fn handle_line(&mut self, line: &str) -> String {
        let reply = match parse_line(line) {
            Ok(m) => Envelope::new(self.handle(m)),
            Err(e) => e,
        };
        reply.to_line()
    }

    fn dispatch(&mut self, message: Message) -> Result<Message> {
        match message {
            Message::Register { session, ap, hp } => {
                if self.sessions.contains_key(&session) {
                    return Err(CliError::validation(format!("session `{session}` is already registered")));
                }
                let config = ConfigDescriptor::new(ap, hp);
                config.validate()?;
                self.model.space().keys.check(&config)?;
                self.sessions.insert(session.clone(), Session { config, curve: Vec::new(), stopped: false, finalized: false });
                Ok(Message::Ack { session, best: None })
            }
            Message::EpochReport { session, epoch, value } => self.report(session, epoch, value),
            Message::Finalize { session, value } => self.finalize(session, value),
            _ => unreachable!("filtered in handle"),
        }
    }

    fn report(&mut self, session: String, epoch: usize, value: f64) -> Result<Message> {
        let horizon = self.model.horizon();
        let orientation = self.model.orientation();
        let s = self
            .sessions
            .get_mut(&session)
            .ok_or_else(|| CliError::validation(format!("epoch_report for unregistered session `{session}`")))?;
        if s.stopped || s.finalized {
            return Err(CliError::validation(format!("session `{session}` has already ended")));
        }
        if epoch != s.curve.len() + 1 {
            return Err(CliError::validation(format!(
                "out-of-order epoch {epoch} for session `{session}`, expected {}",
                s.curve.len() + 1
            )));
        }
        if epoch > horizon {
            return Err(CliError::validation(format!("epoch {epoch} is beyond the horizon {horizon}")));
        }
        if !orientation.is_valid_raw(value) {
            return Err(CliError::validation(format!("value {value} is out of range for {orientation}")));
        }
        s.curve.push(value);
        let tau = s.curve.len();
        let undecided = Message::Decision {
            session: session.clone(),
            epoch,
            action: Action::Continue,
            probability: 0.0,
            reference: None,
            y_hat: None,
            sigma: None,
        };
        if tau >= horizon || !self.model.has_tau(tau) || self.ledger.sorted().len() < self.policy.top_n {
            return Ok(undecided);
        }
        let normalized = orientation.normalize_all(&s.curve);
        let (y_hat, sigma) = self.model.predict_normalized(&s.config, &normalized)?;
        let d = should_terminate(&self.policy, y_hat, sigma, self.ledger.sorted())?;
        if d.terminate() {
            s.stopped = true;
            self.ledger.push(&session, y_hat, true)?;
            self.persist()?;
        }
        Ok(Message::Decision {
            session,
            epoch,
            action: d.action,
            probability: d.probability,
            reference: d.reference.map(|r| orientation.denormalize(r)),
            y_hat: Some(orientation.denormalize(y_hat)),
            sigma: Some(sigma),
        })
    }

    fn finalize(&mut self, session: String, value: Option<f64>) -> Result<Message> {
        let horizon = self.model.horizon();
        let orientation = self.model.orientation();
        let s = self
            .sessions
            .get_mut(&session)
            .ok_or_else(|| CliError::validation(format!("finalize for unregistered session `{session}`")))?;
        if s.finalized {
            return Err(CliError::validation(format!("session `{session}` is already finalized")));
        }
        let stopped = s.stopped;
        let observed = s.curve.clone();
        s.finalized = true;
        if !stopped {
            let final_value = match value {
                Some(v) => v,
                None if observed.len() == horizon => observed[horizon - 1],
                None => {
                    self.unfinalize(&session);
                    return Err(CliError::validation(format!(
                        "session `{session}` reported {} of {horizon} epochs; finalize needs a value",
                        observed.len()
                    )));
                }
            };
            if !orientation.is_valid_raw(final_value) {
                self.unfinalize(&session);
                return Err(CliError::validation(format!("value {final_value} is out of range for {orientation}")));
            }
            self.ledger.push(&session, orientation.normalize(final_value), false)?;
            self.persist()?;
        }
        Ok(Message::Ack { session, best: self.ledger.best_raw() })
    }
}

/// Serves one line-oriented stream until EOF. Decisions serialize on the
/// advisor lock.
pub fn serve<R: BufRead, W: Write>(advisor: &Mutex<Advisor>, reader: R, mut writer: W) -> Result<()> {
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::runtime(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = advisor.lock().map_err(|_| CliError::runtime("advisor state poisoned"))?.handle_line(&line);
        writeln!(writer, "{reply}").and_then(|_| writer.flush()).map_err(|e| CliError::runtime(format!("write failed: {e}")))?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(advisor: Arc<Mutex<Advisor>>, listener: TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| CliError::runtime(format!("accept failed: {e}")))?;
        let advisor = Arc::clone(&advisor);
        std::thread::spawn(move || {
            let Ok(read_half) = stream.try_clone() else { return };
            // a broken connection ends only its own session stream
            let _ = serve(&advisor, BufReader::new(read_half), stream);
        });
    }
    Ok(())
}
