//! Sanctuaries: shared agreement oracles with query/answer histories.
//!
//! A sanctuary is a named oracle for one agreement task, consultable by a
//! fixed process set. Its history is a sequence of query and answer events;
//! the k-th query of each process belongs to consultation k. A correct oracle
//! obeys three laws:
//!
//! * agreement: all answers within one consultation carry the same value;
//! * validity: an answered value is allowed by the task's problem for every
//!   total input vector extending the consultation's query assignment;
//! * resilience: once at least `|consultants| - f` processes have queried in a
//!   consultation, every correct consultant with a pending query in it must
//!   eventually be answered.
//!
//! [`OracleInstance`] is the live engine-facing implementation; it commits a
//! value the first time it answers in a consultation, choosing one that is
//! allowed for every extension of the queries received so far. Since candidate
//! sets only grow as queries accumulate (more queries mean fewer extensions to
//! intersect over), early answers stay valid. [`check_oracle_laws`] is an
//! independent after-the-fact checker working from raw event lists; the two
//! never share bookkeeping.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{
    AgreementTask, FailurePattern, InputVector, ProblemEval, ProblemKind, ProcessId, ProcessSet,
    TimeStep, Value,
};

/// Sanctuary identifier: a non-empty token without whitespace. The name
/// `beta` is reserved for the message buffer in trace files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SanctuaryId(String);

impl SanctuaryId {
    pub fn new(id: impl Into<String>) -> Result<Self, OracleError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) || id == "beta" {
            return Err(OracleError::BadSanctuaryId(id));
        }
        Ok(SanctuaryId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SanctuaryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("bad sanctuary id {0:?}: must be non-empty, whitespace-free, and not \"beta\"")]
    BadSanctuaryId(String),
    #[error("{process} is not a consultant of sanctuary {sanctuary}")]
    UnknownConsultant {
        sanctuary: SanctuaryId,
        process: ProcessId,
    },
    #[error("{process} queried {sanctuary} while its previous query is still pending")]
    QueryWhilePending {
        sanctuary: SanctuaryId,
        process: ProcessId,
    },
    #[error("answer for {process} at {sanctuary} has no pending query")]
    AnswerWithoutQuery {
        sanctuary: SanctuaryId,
        process: ProcessId,
    },
    #[error("query value {0} is outside the task domain")]
    ValueOutsideDomain(Value),
    #[error("event time {time} does not increase {process}'s history at {sanctuary}")]
    NonMonotoneTime {
        sanctuary: SanctuaryId,
        process: ProcessId,
        time: TimeStep,
    },
    #[error("no answer is currently allowed for {process} at {sanctuary}")]
    NotAnswerable {
        sanctuary: SanctuaryId,
        process: ProcessId,
    },
    #[error("value {value} is not an allowed answer for consultation {consultation}")]
    AnswerNotAllowed { consultation: u32, value: Value },
    #[error("scripted answer values exhausted at {0}")]
    ScriptExhausted(SanctuaryId),
    #[error("sanctuary {sanctuary} is invalid under this failure pattern: {detail}")]
    InvalidSanctuaryConfig {
        sanctuary: SanctuaryId,
        detail: String,
    },
}

/// A named oracle endpoint: who may consult it and which task it solves.
/// The task's problem is over exactly the consultant set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sanctuary {
    id: SanctuaryId,
    task: AgreementTask,
}

impl Sanctuary {
    pub fn new(id: SanctuaryId, task: AgreementTask) -> Self {
        Sanctuary { id, task }
    }

    pub fn id(&self) -> &SanctuaryId {
        &self.id
    }

    pub fn task(&self) -> &AgreementTask {
        &self.task
    }

    /// The processes allowed to consult this sanctuary.
    pub fn consultants(&self) -> &ProcessSet {
        self.task.problem().processes()
    }

    /// Number of queries in a consultation that triggers the answer
    /// obligation: `|consultants| - f`, clamped at zero.
    pub fn resilience_threshold(&self) -> usize {
        self.consultants()
            .len()
            .saturating_sub(self.task.resiliency() as usize)
    }
}

/// Restrict an algorithm-level failure pattern to a sanctuary's consultants.
///
/// Consultants outside the algorithm's process set are treated as crashed
/// from time 0 (nobody will ever drive them); consultants inside it inherit
/// their crash times. Fails with [`OracleError::InvalidSanctuaryConfig`] when
/// no consultant survives, since the oracle's task is undefined then.
pub fn restrict_failure_pattern(
    pattern: &FailurePattern,
    sanctuary: &Sanctuary,
    algorithm_processes: &ProcessSet,
) -> Result<FailurePattern, OracleError> {
    let consultants = sanctuary.consultants();
    let mut crashes: BTreeMap<ProcessId, TimeStep> = BTreeMap::new();
    for p in consultants.iter() {
        if !algorithm_processes.contains(p) {
            crashes.insert(p, 0);
        } else if let Some(c) = pattern.crash_time(p) {
            crashes.insert(p, c);
        }
    }
    FailurePattern::new(consultants.clone(), crashes).map_err(|_| {
        OracleError::InvalidSanctuaryConfig {
            sanctuary: sanctuary.id().clone(),
            detail: "every consultant is faulty; oracles need a surviving consultant".to_string(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OracleEventKind {
    Query,
    Answer,
}

/// One query or answer in a sanctuary's history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEvent {
    pub process: ProcessId,
    pub time: TimeStep,
    pub kind: OracleEventKind,
    pub value: Value,
}

/// Consultation k: each consultant's k-th query and k-th answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsultationView {
    pub index: u32,
    pub queries: BTreeMap<ProcessId, (TimeStep, Value)>,
    pub answers: BTreeMap<ProcessId, (TimeStep, Value)>,
}

impl ConsultationView {
    pub fn query_values(&self) -> BTreeMap<ProcessId, Value> {
        self.queries.iter().map(|(p, (_, v))| (*p, *v)).collect()
    }
}

/// Group a raw sanctuary history into consultations by per-process counters.
/// Ill-formed histories still group (extra answers attach to the consultation
/// of the preceding query count); the law checker reports them separately.
pub fn consultations(events: &[OracleEvent]) -> Vec<ConsultationView> {
    let mut queries_seen: BTreeMap<ProcessId, u32> = BTreeMap::new();
    let mut answers_seen: BTreeMap<ProcessId, u32> = BTreeMap::new();
    let mut views: Vec<ConsultationView> = Vec::new();
    let at = |k: u32, views: &mut Vec<ConsultationView>| -> usize {
        while views.len() < k as usize {
            views.push(ConsultationView {
                index: views.len() as u32 + 1,
                queries: BTreeMap::new(),
                answers: BTreeMap::new(),
            });
        }
        k as usize - 1
    };
    for e in events {
        match e.kind {
            OracleEventKind::Query => {
                let k = queries_seen.entry(e.process).or_insert(0);
                *k += 1;
                let idx = at(*k, &mut views);
                views[idx].queries.entry(e.process).or_insert((e.time, e.value));
            }
            OracleEventKind::Answer => {
                let k = answers_seen.entry(e.process).or_insert(0);
                *k += 1;
                let idx = at(*k, &mut views);
                views[idx].answers.entry(e.process).or_insert((e.time, e.value));
            }
        }
    }
    views
}

/// The values an oracle may still answer in a consultation whose queries so
/// far are `partial`: the intersection, over every total input vector `v`
/// extending `partial` within the task domain, of the problem's allowed
/// decision sets under `restricted` (the failure pattern already restricted
/// to the consultants).
///
/// Computed by brute-force enumeration of the extensions. The set grows as
/// queries accumulate, and with no queries at all it is empty for both
/// built-in problems, so an oracle can never answer an unqueried consultation.
pub fn answer_candidates(
    sanctuary: &Sanctuary,
    restricted: &FailurePattern,
    partial: &BTreeMap<ProcessId, Value>,
) -> BTreeSet<Value> {
    let problem = sanctuary.task().problem();
    let consultants = sanctuary.consultants();
    let missing: Vec<ProcessId> = consultants
        .iter()
        .filter(|p| !partial.contains_key(p))
        .collect();
    let domain: Vec<Value> = problem.domain().iter().collect();
    let mut candidates: Option<BTreeSet<Value>> = None;
    let mut idx = vec![0usize; missing.len()];
    loop {
        let mut values = partial.clone();
        for (slot, p) in missing.iter().enumerate() {
            values.insert(*p, domain[idx[slot]]);
        }
        let vector = InputVector::new(consultants, values).expect("extension is total");
        let allowed = problem.allowed(restricted, &vector);
        candidates = Some(match candidates {
            None => allowed,
            Some(acc) => acc.intersection(&allowed).copied().collect(),
        });
        if candidates.as_ref().is_some_and(BTreeSet::is_empty) {
            return BTreeSet::new();
        }
        let mut i = 0;
        loop {
            if i == idx.len() {
                return candidates.unwrap_or_default();
            }
            idx[i] += 1;
            if idx[i] < domain.len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// How an oracle picks among allowed answer values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuePolicy {
    /// Smallest allowed value. For atomic commitment this is the abort-happy
    /// adversary.
    MinAllowed,
    /// Largest allowed value.
    MaxAllowed,
    /// Uniform choice with a stream derived from (seed, sanctuary, consultation).
    SeededRandom(u64),
    /// Fixed values consumed one per consultation commit, each validated
    /// against the candidate set.
    Scripted(Vec<Value>),
}

/// When an oracle answers a pending query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerTiming {
    /// As soon as an answer value exists.
    Eager,
    /// Only once the resilience obligation forces it.
    Lazy,
    /// Grants in a fixed process order: the front of the queue is the only
    /// answerable consultant.
    Scripted(Vec<ProcessId>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerStrategy {
    pub value: ValuePolicy,
    pub timing: AnswerTiming,
}

impl Default for AnswerStrategy {
    fn default() -> Self {
        AnswerStrategy {
            value: ValuePolicy::MinAllowed,
            timing: AnswerTiming::Eager,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ConsultationState {
    queries: BTreeMap<ProcessId, Value>,
    answered: BTreeSet<ProcessId>,
    committed: Option<Value>,
}

/// Live oracle state for one sanctuary within one run.
///
/// Mutations go through [`record_query`](OracleInstance::record_query) and
/// [`record_answer`](OracleInstance::record_answer), which maintain
/// well-formedness (strict query/answer alternation per consultant) and only
/// ever answer with values valid for all extensions of the queries seen so
/// far.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    sanctuary: Sanctuary,
    /// Failure pattern restricted to the consultants; fixes the extension
    /// semantics of candidate sets.
    restricted: FailurePattern,
    strategy: AnswerStrategy,
    events: Vec<OracleEvent>,
    consultations: Vec<ConsultationState>,
    query_count: BTreeMap<ProcessId, u32>,
    answer_count: BTreeMap<ProcessId, u32>,
    last_time: BTreeMap<ProcessId, TimeStep>,
    script_cursor: usize,
    grant_queue: VecDeque<ProcessId>,
}

impl OracleInstance {
    pub fn new(
        sanctuary: Sanctuary,
        restricted: FailurePattern,
        strategy: AnswerStrategy,
    ) -> Self {
        let grant_queue = match &strategy.timing {
            AnswerTiming::Scripted(order) => order.iter().copied().collect(),
            _ => VecDeque::new(),
        };
        OracleInstance {
            sanctuary,
            restricted,
            strategy,
            events: Vec::new(),
            consultations: Vec::new(),
            query_count: BTreeMap::new(),
            answer_count: BTreeMap::new(),
            last_time: BTreeMap::new(),
            script_cursor: 0,
            grant_queue,
        }
    }

    pub fn sanctuary(&self) -> &Sanctuary {
        &self.sanctuary
    }

    pub fn restricted_pattern(&self) -> &FailurePattern {
        &self.restricted
    }

    pub fn events(&self) -> &[OracleEvent] {
        &self.events
    }

    fn consultation_mut(&mut self, k: u32) -> &mut ConsultationState {
        while self.consultations.len() < k as usize {
            self.consultations.push(ConsultationState::default());
        }
        &mut self.consultations[k as usize - 1]
    }

    fn check_time(&self, p: ProcessId, t: TimeStep) -> Result<(), OracleError> {
        match self.last_time.get(&p) {
            Some(last) if *last >= t => Err(OracleError::NonMonotoneTime {
                sanctuary: self.sanctuary.id().clone(),
                process: p,
                time: t,
            }),
            _ => Ok(()),
        }
    }

    /// Record process `p`'s next query, opening its next consultation slot.
    pub fn record_query(&mut self, p: ProcessId, t: TimeStep, v: Value) -> Result<(), OracleError> {
        if !self.sanctuary.consultants().contains(p) {
            return Err(OracleError::UnknownConsultant {
                sanctuary: self.sanctuary.id().clone(),
                process: p,
            });
        }
        if !self.sanctuary.task().problem().domain().contains(v) {
            return Err(OracleError::ValueOutsideDomain(v));
        }
        let q = self.query_count.get(&p).copied().unwrap_or(0);
        let a = self.answer_count.get(&p).copied().unwrap_or(0);
        if q != a {
            return Err(OracleError::QueryWhilePending {
                sanctuary: self.sanctuary.id().clone(),
                process: p,
            });
        }
        self.check_time(p, t)?;
        let k = q + 1;
        self.consultation_mut(k).queries.insert(p, v);
        self.query_count.insert(p, k);
        self.last_time.insert(p, t);
        self.events.push(OracleEvent {
            process: p,
            time: t,
            kind: OracleEventKind::Query,
            value: v,
        });
        Ok(())
    }

    /// The consultation index of `p`'s unanswered query, if any.
    pub fn pending(&self, p: ProcessId) -> Option<u32> {
        let q = self.query_count.get(&p).copied().unwrap_or(0);
        let a = self.answer_count.get(&p).copied().unwrap_or(0);
        (q > a).then_some(q)
    }

    /// Current answer candidates for consultation `k`: the committed value if
    /// one exists, otherwise all values valid for every extension of the
    /// queries received so far.
    pub fn candidates(&self, k: u32) -> BTreeSet<Value> {
        match self.consultations.get(k as usize - 1) {
            None => BTreeSet::new(),
            Some(c) => match c.committed {
                Some(v) => [v].into_iter().collect(),
                None => answer_candidates(&self.sanctuary, &self.restricted, &c.queries),
            },
        }
    }

    /// The value consultation `k` is committed to, if an answer was given.
    pub fn committed(&self, k: u32) -> Option<Value> {
        self.consultations
            .get(k as usize - 1)
            .and_then(|c| c.committed)
    }

    /// The queries recorded so far in consultation `k`.
    pub fn consultation_queries(&self, k: u32) -> BTreeMap<ProcessId, Value> {
        self.consultations
            .get(k as usize - 1)
            .map(|c| c.queries.clone())
            .unwrap_or_default()
    }

    /// Unmet answer obligations: pairs `(k, p)` where consultation `k` has
    /// reached the resilience threshold and the correct consultant `p` still
    /// awaits its k-th answer.
    pub fn obligations(&self) -> Vec<(u32, ProcessId)> {
        let threshold = self.sanctuary.resilience_threshold();
        let correct = self.restricted.correct();
        let mut out = Vec::new();
        for (i, c) in self.consultations.iter().enumerate() {
            if c.queries.len() < threshold {
                continue;
            }
            for p in c.queries.keys() {
                if correct.contains(*p) && !c.answered.contains(p) {
                    out.push((i as u32 + 1, *p));
                }
            }
        }
        out
    }

    /// Whether the oracle is currently willing and able to answer `p`.
    pub fn answerable(&self, p: ProcessId) -> bool {
        let Some(k) = self.pending(p) else {
            return false;
        };
        if self.candidates(k).is_empty() {
            return false;
        }
        match &self.strategy.timing {
            AnswerTiming::Eager => true,
            AnswerTiming::Lazy => {
                let threshold = self.sanctuary.resilience_threshold();
                let c = &self.consultations[k as usize - 1];
                c.queries.len() >= threshold && self.restricted.correct().contains(p)
            }
            AnswerTiming::Scripted(_) => self.grant_queue.front() == Some(&p),
        }
    }

    fn choose_value(&self, k: u32, candidates: &BTreeSet<Value>) -> Result<Value, OracleError> {
        debug_assert!(!candidates.is_empty());
        match &self.strategy.value {
            ValuePolicy::MinAllowed => Ok(*candidates.iter().next().unwrap()),
            ValuePolicy::MaxAllowed => Ok(*candidates.iter().next_back().unwrap()),
            ValuePolicy::SeededRandom(seed) => {
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                for b in self.sanctuary.id().as_str().bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ h ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                );
                let all: Vec<Value> = candidates.iter().copied().collect();
                Ok(all[rng.gen_range(0..all.len())])
            }
            ValuePolicy::Scripted(values) => {
                let v = values
                    .get(self.script_cursor)
                    .copied()
                    .ok_or_else(|| OracleError::ScriptExhausted(self.sanctuary.id().clone()))?;
                if !candidates.contains(&v) {
                    return Err(OracleError::AnswerNotAllowed {
                        consultation: k,
                        value: v,
                    });
                }
                Ok(v)
            }
        }
    }

    /// Answer `p`'s pending query at time `t`, committing the consultation's
    /// value on first answer. Fails if the timing policy does not currently
    /// grant `p` an answer or no valid value exists.
    pub fn record_answer(&mut self, p: ProcessId, t: TimeStep) -> Result<Value, OracleError> {
        if !self.answerable(p) {
            return Err(OracleError::NotAnswerable {
                sanctuary: self.sanctuary.id().clone(),
                process: p,
            });
        }
        let k = self.pending(p).expect("answerable implies pending");
        let candidates = self.candidates(k);
        let already_committed = self.consultations[k as usize - 1].committed.is_some();
        let v = self.choose_value(k, &candidates)?;
        if !already_committed && matches!(self.strategy.value, ValuePolicy::Scripted(_)) {
            self.script_cursor += 1;
        }
        self.finish_answer(p, t, k, v)?;
        Ok(v)
    }

    /// Answer `p` with a caller-chosen value, bypassing the value policy and
    /// timing gate but not validity: `v` must be a current candidate. Used by
    /// schedulers that dictate answer values, and by trace replay.
    pub fn record_answer_value(
        &mut self,
        p: ProcessId,
        t: TimeStep,
        v: Value,
    ) -> Result<(), OracleError> {
        let Some(k) = self.pending(p) else {
            return Err(OracleError::AnswerWithoutQuery {
                sanctuary: self.sanctuary.id().clone(),
                process: p,
            });
        };
        if !self.candidates(k).contains(&v) {
            return Err(OracleError::AnswerNotAllowed {
                consultation: k,
                value: v,
            });
        }
        self.finish_answer(p, t, k, v)
    }

    fn finish_answer(
        &mut self,
        p: ProcessId,
        t: TimeStep,
        k: u32,
        v: Value,
    ) -> Result<(), OracleError> {
        self.check_time(p, t)?;
        if matches!(self.strategy.timing, AnswerTiming::Scripted(_))
            && self.grant_queue.front() == Some(&p)
        {
            self.grant_queue.pop_front();
        }
        let c = self.consultation_mut(k);
        c.committed.get_or_insert(v);
        c.answered.insert(p);
        self.answer_count.insert(p, k);
        self.last_time.insert(p, t);
        self.events.push(OracleEvent {
            process: p,
            time: t,
            kind: OracleEventKind::Answer,
            value: v,
        });
        Ok(())
    }
}

/// Which oracle law a violation offends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleLaw {
    /// Per consultant: queries and answers strictly alternate starting with a
    /// query, at strictly increasing times, with in-domain values, and only
    /// consultants appear.
    WellFormed,
    /// No event at or after the process's crash time.
    Compatibility,
    /// One value per consultation.
    Agreement,
    /// Every answer is allowed for all extensions of the consultation's
    /// queries.
    Validity,
    /// Consensus oracles answer the common value on uniform complete queries.
    ConsensusEcho,
    /// Atomic-commitment oracles answer 1 only on complete all-1 queries.
    CommitUnanimity,
    /// Threshold-triggered answers owed to correct consultants are delivered.
    Resilience,
}

impl fmt::Display for OracleLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OracleLaw::WellFormed => "well-formed",
            OracleLaw::Compatibility => "compatibility",
            OracleLaw::Agreement => "agreement",
            OracleLaw::Validity => "validity",
            OracleLaw::ConsensusEcho => "consensus-echo",
            OracleLaw::CommitUnanimity => "commit-unanimity",
            OracleLaw::Resilience => "resilience",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLawViolation {
    pub law: OracleLaw,
    pub consultation: Option<u32>,
    pub process: Option<ProcessId>,
    pub detail: String,
}

impl fmt::Display for OracleLawViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.law, self.detail)?;
        if let Some(k) = self.consultation {
            write!(f, " (consultation {k})")?;
        }
        Ok(())
    }
}

/// Check a raw sanctuary history against every oracle law.
///
/// `restricted` is the failure pattern over the consultants; `complete`
/// asserts the history will not be extended, enabling the resilience check
/// (an unfinished run owes no answers yet). This checker re-derives
/// everything from the event list and shares no state with
/// [`OracleInstance`].
pub fn check_oracle_laws(
    events: &[OracleEvent],
    sanctuary: &Sanctuary,
    restricted: &FailurePattern,
    complete: bool,
) -> Vec<OracleLawViolation> {
    let mut out = Vec::new();
    let consultants = sanctuary.consultants();
    let domain = sanctuary.task().problem().domain();

    // Well-formedness and compatibility are per raw event.
    let mut pending: BTreeMap<ProcessId, bool> = BTreeMap::new();
    let mut last_time: BTreeMap<ProcessId, TimeStep> = BTreeMap::new();
    for e in events {
        if !consultants.contains(e.process) {
            out.push(OracleLawViolation {
                law: OracleLaw::WellFormed,
                consultation: None,
                process: Some(e.process),
                detail: format!("{} is not a consultant of {}", e.process, sanctuary.id()),
            });
            continue;
        }
        if let Some(last) = last_time.get(&e.process) {
            if *last >= e.time {
                out.push(OracleLawViolation {
                    law: OracleLaw::WellFormed,
                    consultation: None,
                    process: Some(e.process),
                    detail: format!(
                        "{}'s events at {} are not strictly increasing in time ({} then {})",
                        e.process,
                        sanctuary.id(),
                        last,
                        e.time
                    ),
                });
            }
        }
        last_time.insert(e.process, e.time);
        let has_pending = pending.entry(e.process).or_insert(false);
        match e.kind {
            OracleEventKind::Query => {
                if *has_pending {
                    out.push(OracleLawViolation {
                        law: OracleLaw::WellFormed,
                        consultation: None,
                        process: Some(e.process),
                        detail: format!("{} queried again while a query is pending", e.process),
                    });
                }
                if !domain.contains(e.value) {
                    out.push(OracleLawViolation {
                        law: OracleLaw::WellFormed,
                        consultation: None,
                        process: Some(e.process),
                        detail: format!("query value {} is outside the domain", e.value),
                    });
                }
                *has_pending = true;
            }
            OracleEventKind::Answer => {
                if !*has_pending {
                    out.push(OracleLawViolation {
                        law: OracleLaw::WellFormed,
                        consultation: None,
                        process: Some(e.process),
                        detail: format!("answer to {} without a pending query", e.process),
                    });
                }
                *has_pending = false;
            }
        }
        if !restricted.allows_event(e.process, e.time) {
            out.push(OracleLawViolation {
                law: OracleLaw::Compatibility,
                consultation: None,
                process: Some(e.process),
                detail: format!(
                    "{} has an oracle event at time {} at or after its crash",
                    e.process, e.time
                ),
            });
        }
    }

    // Consultation-level laws.
    let kind = sanctuary.task().problem().kind();
    for view in consultations(events) {
        let k = view.index;
        let answer_values: BTreeSet<Value> =
            view.answers.values().map(|(_, v)| *v).collect();
        if answer_values.len() > 1 {
            out.push(OracleLawViolation {
                law: OracleLaw::Agreement,
                consultation: Some(k),
                process: None,
                detail: format!(
                    "answers disagree: {:?}",
                    answer_values.iter().map(|v| v.0).collect::<Vec<_>>()
                ),
            });
        }
        if !view.answers.is_empty() {
            let candidates = answer_candidates(sanctuary, restricted, &view.query_values());
            for (p, (_, v)) in &view.answers {
                if !candidates.contains(v) {
                    out.push(OracleLawViolation {
                        law: OracleLaw::Validity,
                        consultation: Some(k),
                        process: Some(*p),
                        detail: format!(
                            "answer {v} to {p} is not allowed for every extension of the queries"
                        ),
                    });
                }
            }
        }
        let complete_queries = view.queries.len() == consultants.len();
        match kind {
            ProblemKind::Consensus => {
                let query_values: BTreeSet<Value> =
                    view.queries.values().map(|(_, v)| *v).collect();
                if complete_queries && query_values.len() == 1 {
                    let v = *query_values.iter().next().unwrap();
                    for (p, (_, a)) in &view.answers {
                        if *a != v {
                            out.push(OracleLawViolation {
                                law: OracleLaw::ConsensusEcho,
                                consultation: Some(k),
                                process: Some(*p),
                                detail: format!(
                                    "uniform queries {v} but {p} was answered {a}"
                                ),
                            });
                        }
                    }
                }
            }
            ProblemKind::AtomicCommitment => {
                for (p, (_, a)) in &view.answers {
                    if *a == Value(1) {
                        let all_one = complete_queries
                            && view.queries.values().all(|(_, v)| *v == Value(1));
                        if !all_one {
                            out.push(OracleLawViolation {
                                law: OracleLaw::CommitUnanimity,
                                consultation: Some(k),
                                process: Some(*p),
                                detail: format!(
                                    "{p} was answered 1 without unanimous 1 queries from all consultants"
                                ),
                            });
                        }
                    }
                }
            }
        }
        if complete {
            let threshold = sanctuary.resilience_threshold();
            if view.queries.len() >= threshold {
                let correct = restricted.correct();
                for p in view.queries.keys() {
                    if correct.contains(*p) && !view.answers.contains_key(p) {
                        out.push(OracleLawViolation {
                            law: OracleLaw::Resilience,
                            consultation: Some(k),
                            process: Some(*p),
                            detail: format!(
                                "correct consultant {p} was never answered although {} of {} consultants queried (threshold {threshold})",
                                view.queries.len(),
                                consultants.len(),
                            ),
                        });
                    }
                }
            }
        }
    }
    out
}

/// True when every consultant's subsequence alternates query/answer starting
/// with a query, at strictly increasing times, with in-domain values.
pub fn is_well_formed(events: &[OracleEvent], sanctuary: &Sanctuary) -> bool {
    // Compatibility needs a pattern; use failure-free and keep only
    // well-formedness violations.
    let pattern = FailurePattern::failure_free(sanctuary.consultants().clone())
        .expect("consultant sets are non-empty");
    check_oracle_laws(events, sanctuary, &pattern, false)
        .iter()
        .all(|v| v.law != OracleLaw::WellFormed)
}

/// True when no consultant has an oracle event at or after its crash time.
pub fn is_compatible(
    events: &[OracleEvent],
    sanctuary: &Sanctuary,
    restricted: &FailurePattern,
) -> bool {
    check_oracle_laws(events, sanctuary, restricted, false)
        .iter()
        .all(|v| v.law != OracleLaw::Compatibility)
}
