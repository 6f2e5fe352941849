//! Run model: events, histories, and the engines that generate them.
//!
//! A run is a failure pattern, an input vector, and a history: one global
//! sequence of located, timestamped events. Buffer events are message sends
//! and receipts; sanctuary events are oracle queries and answers. Generated
//! histories use strictly increasing times (one event per tick); the checker
//! accepts equal timestamps, which arise in lifted runs.
//!
//! Process steps come in four shapes: `[S]`, `[R,S]`, `[Q,A,S]`, `[R,Q,A,S]`.
//! A step's query decision and query value depend only on the process state
//! at the start of the step; a received message affects the state change, not
//! the query. A correct process whose query is unanswered is locked: it takes
//! no further steps until the answer arrives.

pub mod automaton;
pub mod check;
pub mod engine;
pub mod explore;
pub mod mutate;
pub mod sync;
pub mod verify;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{OracleError, OracleEvent, OracleEventKind, SanctuaryId};
use crate::task::{FailurePattern, InputVector, ProcessId, ProcessSet, TaskError, TimeStep, Value};

/// Message round phase for round-based protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundPhase {
    Report,
    Propose,
}

/// Message payloads understood by the bundled protocols. The buffer itself is
/// payload-agnostic; sharing one vocabulary keeps traces readable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgBody {
    /// A process's initial value.
    Input { from: ProcessId, value: Value },
    /// An oracle answer relayed on behalf of consultation slot `slot`.
    Verdict { slot: u32, value: Value },
    /// A final decision announcement.
    Decision { value: Value },
    /// Halting-wrapper notification: decide this and stop.
    Halt { value: Value },
    /// Round-protocol record; `value` of `None` encodes the "no proposal"
    /// token.
    Round {
        from: ProcessId,
        phase: RoundPhase,
        value: Option<Value>,
        round: u32,
    },
}

impl fmt::Display for MsgBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MsgBody::Input { from, value } => write!(f, "input({from},{value})"),
            MsgBody::Verdict { slot, value } => write!(f, "verdict({slot},{value})"),
            MsgBody::Decision { value } => write!(f, "decision({value})"),
            MsgBody::Halt { value } => write!(f, "halt({value})"),
            MsgBody::Round {
                from,
                phase,
                value,
                round,
            } => {
                let tag = match phase {
                    RoundPhase::Report => "R",
                    RoundPhase::Propose => "P",
                };
                match value {
                    Some(v) => write!(f, "round({from},{tag},{v},{round})"),
                    None => write!(f, "round({from},{tag},?,{round})"),
                }
            }
        }
    }
}

/// A message in flight: destination plus payload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Message {
    pub dest: ProcessId,
    pub body: MsgBody,
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}!{}", self.dest, self.body)
    }
}

/// Where an event happened: the shared message buffer or a sanctuary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventLoc {
    Buffer,
    Sanctuary(SanctuaryId),
}

impl fmt::Display for EventLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventLoc::Buffer => write!(f, "beta"),
            EventLoc::Sanctuary(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Oracle query carrying the queried value.
    Query(Value),
    /// Oracle answer carrying the answered value.
    Answer(Value),
    /// Receipt of a message from the buffer; the message's destination is the
    /// event's process.
    Receive(Message),
    /// End-of-step state change, optionally placing one message in the
    /// buffer. `Send(None)` is a pure local step.
    Send(Option<Message>),
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::Query(_) => "Q",
            EventKind::Answer(_) => "A",
            EventKind::Receive(_) => "R",
            EventKind::Send(_) => "S",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Query(v) | EventKind::Answer(v) => write!(f, "{} {v}", self.tag()),
            EventKind::Receive(m) => write!(f, "R {m}"),
            EventKind::Send(Some(m)) => write!(f, "S {m}"),
            EventKind::Send(None) => write!(f, "S ?"),
        }
    }
}

/// One located, timestamped event of one process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub loc: EventLoc,
    pub process: ProcessId,
    pub time: TimeStep,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.loc, self.process, self.time, self.kind)
    }
}

impl Event {
    pub fn is_buffer(&self) -> bool {
        self.loc == EventLoc::Buffer
    }

    pub fn sanctuary(&self) -> Option<&SanctuaryId> {
        match &self.loc {
            EventLoc::Buffer => None,
            EventLoc::Sanctuary(id) => Some(id),
        }
    }
}

/// Project a run's history onto one sanctuary as raw oracle events, in
/// history order.
pub fn sanctuary_projection(events: &[Event], id: &SanctuaryId) -> Vec<OracleEvent> {
    events
        .iter()
        .filter(|e| e.sanctuary() == Some(id))
        .filter_map(|e| {
            let (kind, value) = match &e.kind {
                EventKind::Query(v) => (OracleEventKind::Query, *v),
                EventKind::Answer(v) => (OracleEventKind::Answer, *v),
                // Buffer-kind events at a sanctuary location are malformed;
                // the rule checker reports them, projections skip them.
                _ => return None,
            };
            Some(OracleEvent {
                process: e.process,
                time: e.time,
                kind,
                value,
            })
        })
        .collect()
}

/// How a generated run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunOutcome {
    /// No action is enabled and no liveness obligation remains.
    Quiescent,
    /// The event budget ran out first; the run is a truncated prefix and
    /// liveness verdicts are flagged rather than failed.
    BudgetExhausted,
    /// No action is enabled but correct processes are locked forever: their
    /// pending queries can never be answered.
    Deadlock {
        locked: Vec<(ProcessId, SanctuaryId)>,
        /// Unmet oracle obligations as (sanctuary, consultation, process).
        obligations: Vec<(SanctuaryId, u32, ProcessId)>,
    },
}

impl RunOutcome {
    pub fn is_quiescent(&self) -> bool {
        matches!(self, RunOutcome::Quiescent)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunOutcome::Quiescent => "quiescent",
            RunOutcome::BudgetExhausted => "budget-exhausted",
            RunOutcome::Deadlock { .. } => "deadlock",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Async,
    Sync,
}

/// A completed (or truncated) run: the declared failure pattern, the input
/// vector, the history, and generator-recorded first decisions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub mode: RunMode,
    pub processes: ProcessSet,
    pub pattern: FailurePattern,
    pub inputs: InputVector,
    pub events: Vec<Event>,
    pub outcome: RunOutcome,
    pub decisions: BTreeMap<ProcessId, (TimeStep, Value)>,
}

impl Run {
    /// Events of one process, in history order.
    pub fn process_projection(&self, p: ProcessId) -> Vec<&Event> {
        self.events.iter().filter(|e| e.process == p).collect()
    }

    /// The run's history truncated to events at times `<= t`.
    pub fn prefix_through(&self, t: TimeStep) -> &[Event] {
        let end = self.events.partition_point(|e| e.time <= t);
        &self.events[..end]
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("no input value for process {0}")]
    MissingInput(ProcessId),
    #[error("no automaton for process {0}")]
    MissingAutomaton(ProcessId),
    #[error("automaton of {process} queries unknown sanctuary {sanctuary}")]
    UnknownSanctuary {
        process: ProcessId,
        sanctuary: SanctuaryId,
    },
    #[error("invalid crash spec for {process}: {detail}")]
    InvalidCrashSpec { process: ProcessId, detail: String },
    #[error("scripted action {index} is not enabled: {detail}")]
    ScriptStuck { index: usize, detail: String },
    #[error("replay prefix diverges at event {index}: {detail}")]
    PrefixMismatch { index: usize, detail: String },
}
