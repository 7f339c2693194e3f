//! Append-only event log and deterministic reputation replay.
//!
//! A user's reputation is `r0 + rp + rr + ep + er`: initial reputation, the
//! weighted ratings earned by their projects and by their referee reports,
//! and the accuracy scores of the ratings they gave on projects and reports.

mod event;
mod io;
mod replay;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::BenchmarkError;
use crate::ids::{ItemId, Label, LabelSet, Question, UserId};
use crate::mechanism::{MechanismError, ScoreStatus};
use crate::scoring::ScoringError;
use crate::tokens::TokenError;

pub use event::{EventBody, LedgerEvent};
pub use io::{read_log, write_log, LogHeader, LOG_FORMAT, LOG_VERSION};
pub use replay::{finalized_corpus, replay, score_all, ReplayConfig, ReputationState, ScoreRecord, ScoringOptions, UserReputation};
pub use state::{
    ArchivedRating, Channel, ChannelStatus, FinalizationRule, ItemKind, ItemState, LedgerState, UserState, DAY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("expected seq {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("seq {seq}: {message}")]
    InvalidPayload { seq: u64, message: String },
    #[error("seq {seq}: user {requester} is not the author of item {item}")]
    UnauthorizedReset { seq: u64, item: ItemId, requester: UserId },
    #[error("seq {seq}: item {item} has no question {question}")]
    UnknownQuestion { seq: u64, item: ItemId, question: Question },
    #[error("seq {seq}: {source}")]
    Token { seq: u64, source: TokenError },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<LedgerError> },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

impl LedgerError {
    pub(crate) fn invalid(seq: u64, message: impl Into<String>) -> Self {
        LedgerError::InvalidPayload {
            seq,
            message: message.into(),
        }
    }

    /// The event seq the error refers to, if any.
    pub fn seq(&self) -> Option<u64> {
        match self {
            LedgerError::SequenceGap { found, .. } => Some(*found),
            LedgerError::InvalidPayload { seq, .. }
            | LedgerError::UnauthorizedReset { seq, .. }
            | LedgerError::UnknownQuestion { seq, .. }
            | LedgerError::Token { seq, .. } => Some(*seq),
            LedgerError::AtLine { source, .. } => source.seq(),
            _ => None,
        }
    }
}

/// Level weights per label and the accuracy weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    /// Indexed by label; the default is `u: -1, s: 1, e: 2`.
    pub levels: Vec<f64>,
    pub beta_p: f64,
    pub beta_r: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            levels: vec![-1.0, 1.0, 2.0],
            beta_p: 1.0,
            beta_r: 1.0,
        }
    }
}

impl Weights {
    pub fn validate(&self, labels: &LabelSet) -> Result<(), LedgerError> {
        if self.levels.len() != labels.len() {
            return Err(LedgerError::InvalidWeights(format!(
                "{} level weights for {} labels",
                self.levels.len(),
                labels.len()
            )));
        }
        if self.levels.iter().any(|w| !w.is_finite()) {
            return Err(LedgerError::InvalidWeights("level weights must be finite".into()));
        }
        if !(self.beta_p > 0.0 && self.beta_p.is_finite() && self.beta_r > 0.0 && self.beta_r.is_finite()) {
            return Err(LedgerError::InvalidWeights("beta_p and beta_r must be positive".into()));
        }
        Ok(())
    }

    pub fn level(&self, label: Label) -> f64 {
        self.levels[label.index()]
    }
}

/// `sum_k w_k * count(label = k)` over one channel's ratings.
pub fn item_rating_total(labels: &[Label], weights: &Weights) -> f64 {
    labels.iter().fold(0.0, |acc, &l| acc + weights.level(l))
}

/// `beta * sum` of the final scores; pending and provisional scores add nothing.
pub fn accuracy_component<I>(scores: I, beta: f64) -> f64
where
    I: IntoIterator<Item = (f64, ScoreStatus)>,
{
    beta * scores
        .into_iter()
        .filter(|&(_, status)| status == ScoreStatus::Final)
        .fold(0.0, |acc, (v, _)| acc + v)
}

/// An event log together with the state it produces.
#[derive(Debug, Clone)]
pub struct Ledger {
    events: Vec<LedgerEvent>,
    state: LedgerState,
}

impl Ledger {
    pub fn new(header: LogHeader) -> Self {
        Self {
            events: Vec::new(),
            state: LedgerState::new(header),
        }
    }

    pub fn header(&self) -> &LogHeader {
        self.state.header()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Seq the next event must carry.
    pub fn next_seq(&self) -> u64 {
        self.state.last_seq() + 1
    }

    /// Validates and appends one event. A rejected event leaves the ledger unchanged.
    pub fn append(&mut self, event: LedgerEvent) -> Result<(), LedgerError> {
        self.state.apply(&event)?;
        self.events.push(event);
        Ok(())
    }

    /// Appends `body` with the next seq.
    pub fn push(&mut self, timestamp: u64, body: EventBody) -> Result<(), LedgerError> {
        self.append(LedgerEvent::new(self.next_seq(), timestamp, body))
    }

    /// Rebuilds a ledger from the first `len` events.
    pub fn prefix(&self, len: usize) -> Result<Ledger, LedgerError> {
        let mut out = Ledger::new(self.header().clone());
        for ev in &self.events[..len.min(self.events.len())] {
            out.append(ev.clone())?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
