//! Oracle elimination, run lifting, input flips, and counterexample replays.
//!
//! The centerpiece is a constructive transform pair:
//!
//! * [`remove_ac_oracle`] takes automata that consult one commitment
//!   sanctuary, drops a designated process `p`, and rewrites every
//!   consultation into the hardwired answer 0 (the answer-1 branch is
//!   deleted, the answer-0 branch keeps its successor and send). The result
//!   consults nothing.
//! * [`lift_run`] maps any run of the transformed automata back to a run of
//!   the originals over the full process set: `p` joins as crashed at time
//!   0, and every step taken from a consulting state gets its query and a
//!   0-answer re-inserted at the anchor event's times. With `p` faulty, a
//!   0 answer is legal for a commitment oracle no matter what was queried,
//!   which is why the lifted runs pass the full rule checker.
//!
//! [`transform_soundness_suite`] drives that round trip over seeded runs and
//! reports transition bookkeeping plus lifted-run verdicts. The module also
//! carries [`flip_initial_value`] (changing the input of an initially
//! crashed process cannot disturb run legality) and two replay drivers that
//! reconstruct protocol failures as concrete traces:
//!
//! * [`replay_crash_after_exchange`]: a synchronous reduction that exchanges
//!   inputs and then decides one commitment-oracle answer is broken by
//!   crashing one process between the exchange and its query; the oracle may
//!   then answer 0 on all-1 inputs, a consensus validity violation.
//! * [`replay_guarded_race`]: the guarded single-oracle commitment protocol
//!   decides 0 when the outsider is initially crashed; replaying that
//!   history's decision prefix under a failure-free pattern yields a legal
//!   failure-free all-1 run that still decides 0, a commitment validity
//!   violation with a byte-identical shared prefix.
//!
//! # Invariants
//!
//! * Stripped automata share the source's state space and initial states
//!   and have no consulting states.
//! * A lifted run's buffer events equal the source run's events, in order;
//!   only sanctuary events are inserted.
//! * Transition bookkeeping: removed + rewritten + kept = total source
//!   transitions, counted over an explicit state and input enumeration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{AnswerStrategy, Sanctuary, SanctuaryId};
use crate::protocols::{build_naive_guarded, build_sync_k_reduction};
use crate::runtime::automaton::{Automaton, QuerySpec, Transition};
use crate::runtime::check::check_run;
use crate::runtime::engine::{run_async, RunSetup, Scheduler};
use crate::runtime::sync::{run_sync, SyncCrashPoint, SyncSetup};
use crate::runtime::verify::{
    verify_agreement_conditions, verify_recorded_conditions, AgreementCondition,
};
use crate::runtime::{Event, EventKind, EventLoc, Message, MsgBody, Run, RunError, RunOutcome};
use crate::task::{
    AgreementProblem, AgreementTask, FailurePattern, InputVector, ProblemKind, ProcessId,
    ProcessSet, TaskError, Value, ValueDomain, ONE, ZERO,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("automaton of {process} consults {found}, expected {expected}")]
    WrongSanctuary {
        process: ProcessId,
        expected: SanctuaryId,
        found: SanctuaryId,
    },
    #[error("sanctuary {0} does not solve a commitment problem")]
    NotCommitment(SanctuaryId),
    #[error("process {0} is not part of the automata map")]
    UnknownProcess(ProcessId),
    #[error("run already references process {0}")]
    ProcessPresent(ProcessId),
    #[error("run is not in generated shape: {0}")]
    MalformedRun(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Run(#[from] RunError),
}

// ---------------------------------------------------------------------------
// Enumeration and the strip transform.
// ---------------------------------------------------------------------------

/// An automaton whose state space and receive alphabet can be enumerated,
/// which makes transition bookkeeping exact.
pub trait EnumerableAutomaton: Automaton {
    /// Every reachable-or-not state, without duplicates.
    fn states(&self) -> Vec<Self::State>;
    /// The receive alphabet for transition counting. Must contain `None`
    /// (the no-receipt step).
    fn message_inputs(&self) -> Vec<Option<MsgBody>>;
}

/// Transition bookkeeping for one strip transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    /// Source transitions: one per (state, receive) pair at silent states,
    /// two (answer 0 and answer 1) at consulting states.
    pub total: usize,
    /// Deleted answer-1 transitions.
    pub removed: usize,
    /// Answer-0 transitions rewritten to silent ones.
    pub rewritten: usize,
    /// Silent transitions kept verbatim.
    pub kept: usize,
}

impl TransitionCounts {
    pub fn balanced(&self) -> bool {
        self.removed + self.rewritten + self.kept == self.total
    }
}

/// Count the transitions of `a` by enumeration, classified by what the strip
/// transform does to them.
pub fn count_transitions<A: EnumerableAutomaton>(a: &A) -> TransitionCounts {
    let inputs = a.message_inputs().len();
    let mut counts = TransitionCounts {
        total: 0,
        removed: 0,
        rewritten: 0,
        kept: 0,
    };
    for s in a.states() {
        if a.query(&s).is_some() {
            counts.removed += inputs;
            counts.rewritten += inputs;
            counts.total += 2 * inputs;
        } else {
            counts.kept += inputs;
            counts.total += inputs;
        }
    }
    counts
}

/// The strip transform of one automaton: consultations are resolved by the
/// hardwired answer 0, so the result never queries. States, initial states,
/// decisions, and halting are the source's.
#[derive(Debug, Clone)]
pub struct Stripped<A> {
    inner: A,
}

impl<A> Stripped<A> {
    pub fn inner(&self) -> &A {
        &self.inner
    }
}

impl<A: Automaton> Automaton for Stripped<A> {
    type State = A::State;

    fn initial(&self, v: Value) -> Self::State {
        self.inner.initial(v)
    }

    fn query(&self, _s: &Self::State) -> Option<QuerySpec> {
        None
    }

    fn transition(
        &self,
        s: &Self::State,
        m: Option<&MsgBody>,
        _d: Option<Value>,
    ) -> Transition<Self::State> {
        if self.inner.query(s).is_some() {
            self.inner.transition(s, m, Some(ZERO))
        } else {
            self.inner.transition(s, m, None)
        }
    }

    fn decision(&self, s: &Self::State) -> Option<Value> {
        self.inner.decision(s)
    }

    fn is_halted(&self, s: &Self::State) -> bool {
        self.inner.is_halted(s)
    }
}

impl<A: EnumerableAutomaton> EnumerableAutomaton for Stripped<A> {
    fn states(&self) -> Vec<Self::State> {
        self.inner.states()
    }

    fn message_inputs(&self) -> Vec<Option<MsgBody>> {
        self.inner.message_inputs()
    }
}

/// Drop process `p` and strip the commitment consultations out of the
/// remaining automata. Fails if `p` is unknown, if the sanctuary does not
/// solve a commitment problem, or if any kept automaton consults a different
/// sanctuary in any state.
pub fn remove_ac_oracle<A: EnumerableAutomaton>(
    automata: &BTreeMap<ProcessId, A>,
    p: ProcessId,
    sanctuary: &Sanctuary,
) -> Result<BTreeMap<ProcessId, Stripped<A>>, AnalysisError> {
    if !automata.contains_key(&p) {
        return Err(AnalysisError::UnknownProcess(p));
    }
    if sanctuary.task().problem().kind() != ProblemKind::AtomicCommitment {
        return Err(AnalysisError::NotCommitment(sanctuary.id().clone()));
    }
    let mut out = BTreeMap::new();
    for (&q, a) in automata {
        if q == p {
            continue;
        }
        for s in a.states() {
            if let Some(spec) = a.query(&s) {
                if spec.sanctuary != *sanctuary.id() {
                    return Err(AnalysisError::WrongSanctuary {
                        process: q,
                        expected: sanctuary.id().clone(),
                        found: spec.sanctuary,
                    });
                }
            }
        }
        out.insert(q, Stripped { inner: a.clone() });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Run lifting.
// ---------------------------------------------------------------------------

/// Lift a run of the stripped automata back to a run of the source automata
/// over the full process set: `p` joins crashed at time 0 with an input that
/// copies some present 0 if there is one (else 1), and every step taken from
/// a consulting state regains its query and its 0-answer, anchored to the
/// step's own event times. The caller validates the candidate with the rule
/// checker.
pub fn lift_run<A: Automaton>(
    run: &Run,
    p: ProcessId,
    sanctuary: &Sanctuary,
    automata: &BTreeMap<ProcessId, A>,
) -> Result<Run, AnalysisError> {
    if run.processes.contains(p) {
        return Err(AnalysisError::ProcessPresent(p));
    }
    let mut states: BTreeMap<ProcessId, A::State> = BTreeMap::new();
    for q in run.processes.iter() {
        let a = automata.get(&q).ok_or(AnalysisError::UnknownProcess(q))?;
        let input = run
            .inputs
            .get(q)
            .ok_or_else(|| AnalysisError::MalformedRun(format!("no input for {q}")))?;
        states.insert(q, a.initial(input));
    }

    let mut out: Vec<Event> = Vec::with_capacity(run.events.len() * 2);
    let mut i = 0;
    while i < run.events.len() {
        let e = &run.events[i];
        let (receive, send) = match &e.kind {
            EventKind::Receive(_) => {
                let s_event = run.events.get(i + 1).ok_or_else(|| {
                    AnalysisError::MalformedRun("receipt without a closing send".into())
                })?;
                if s_event.process != e.process
                    || !matches!(s_event.kind, EventKind::Send(_))
                {
                    return Err(AnalysisError::MalformedRun(
                        "receipt not followed by its own send".into(),
                    ));
                }
                i += 2;
                (Some(e), s_event)
            }
            EventKind::Send(_) => {
                i += 1;
                (None, e)
            }
            EventKind::Query(_) | EventKind::Answer(_) => {
                return Err(AnalysisError::MalformedRun(
                    "source run already consults an oracle".into(),
                ));
            }
        };
        let q = send.process;
        let a = automata.get(&q).ok_or(AnalysisError::UnknownProcess(q))?;
        let state = states
            .get(&q)
            .cloned()
            .ok_or_else(|| AnalysisError::MalformedRun(format!("event of foreign process {q}")))?;
        let body = receive.map(|r| match &r.kind {
            EventKind::Receive(m) => &m.body,
            _ => unreachable!("receive slot holds a receive event"),
        });
        let answered = match a.query(&state) {
            Some(spec) => {
                if spec.sanctuary != *sanctuary.id() {
                    return Err(AnalysisError::WrongSanctuary {
                        process: q,
                        expected: sanctuary.id().clone(),
                        found: spec.sanctuary,
                    });
                }
                if let Some(r) = receive {
                    out.push(r.clone());
                }
                // The query must precede the answer strictly (oracle
                // histories are strictly increasing per process) while the
                // whole bundle stays inside the step's time slot; source
                // ticks strictly increase, so the slot before a pure send is
                // free.
                let anchor = receive.map_or(send.time.saturating_sub(1), |r| r.time);
                out.push(Event {
                    loc: EventLoc::Sanctuary(spec.sanctuary.clone()),
                    process: q,
                    time: anchor,
                    kind: EventKind::Query(spec.value),
                });
                out.push(Event {
                    loc: EventLoc::Sanctuary(spec.sanctuary.clone()),
                    process: q,
                    time: send.time,
                    kind: EventKind::Answer(ZERO),
                });
                out.push(send.clone());
                Some(ZERO)
            }
            None => {
                if let Some(r) = receive {
                    out.push(r.clone());
                }
                out.push(send.clone());
                None
            }
        };
        states.insert(q, a.transition(&state, body, answered).next);
    }

    let processes = ProcessSet::new(run.processes.iter().chain([p]));
    let mut crashes: BTreeMap<ProcessId, _> = run
        .pattern
        .faulty()
        .iter()
        .filter_map(|q| run.pattern.crash_time(q).map(|t| (q, t)))
        .collect();
    crashes.insert(p, 0);
    let pattern = FailurePattern::new(processes.clone(), crashes)?;
    let mut inputs = run.inputs.clone();
    let present_zero = run.processes.iter().any(|q| run.inputs.get(q) == Some(ZERO));
    inputs.set(p, if present_zero { ZERO } else { ONE });

    Ok(Run {
        mode: run.mode.clone(),
        processes,
        pattern,
        inputs,
        events: out,
        outcome: run.outcome.clone(),
        decisions: run.decisions.clone(),
    })
}

// ---------------------------------------------------------------------------
// Input flips for initially crashed processes.
// ---------------------------------------------------------------------------

/// Replace the input of a process that crashed at time 0 (and so took no
/// events). The returned candidate differs from `run` only in that input;
/// the caller validates it with the rule checker, which never consults the
/// inputs of event-less processes.
pub fn flip_initial_value(
    run: &Run,
    p: ProcessId,
    new_value: Value,
) -> Result<Run, AnalysisError> {
    if run.pattern.crash_time(p) != Some(0) {
        return Err(AnalysisError::MalformedRun(format!(
            "{p} is not crashed at time 0"
        )));
    }
    if run.events.iter().any(|e| e.process == p) {
        return Err(AnalysisError::ProcessPresent(p));
    }
    let mut out = run.clone();
    out.inputs.set(p, new_value);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Transform soundness suite.
// ---------------------------------------------------------------------------

/// Outcome of one strip-and-lift round trip batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    /// Name of the source automata family.
    pub source: String,
    /// Aggregated bookkeeping over the transformed automata.
    pub counts: TransitionCounts,
    /// Lifted runs produced.
    pub lifted_runs: usize,
    /// Lifted runs passing every rule with no flags.
    pub lifted_passes: usize,
    /// Details for any lifted run that failed validation.
    pub lifted_failures: Vec<String>,
    /// Oracle answers in lifted runs that were not 0 (must stay 0).
    pub nonzero_answers: usize,
}

impl TransformReport {
    pub fn sound(&self) -> bool {
        self.lifted_passes == self.lifted_runs
            && self.lifted_failures.is_empty()
            && self.nonzero_answers == 0
            && self.counts.balanced()
    }
}

/// Strip `automata` of their consultations, run the stripped system over
/// `inputs` x `seeds`, lift every run back, and validate each lift with the
/// full rule checker.
pub fn transform_soundness_suite<A>(
    name: &str,
    automata: &BTreeMap<ProcessId, A>,
    p: ProcessId,
    sanctuary: &Sanctuary,
    inputs: &[InputVector],
    seeds: &[u64],
) -> Result<TransformReport, AnalysisError>
where
    A: EnumerableAutomaton + Sync,
    A::State: Sync + Send,
{
    let stripped = remove_ac_oracle(automata, p, sanctuary)?;
    let mut counts = TransitionCounts {
        total: 0,
        removed: 0,
        rewritten: 0,
        kept: 0,
    };
    for (&q, a) in automata {
        if q == p {
            continue;
        }
        let c = count_transitions(a);
        counts.total += c.total;
        counts.removed += c.removed;
        counts.rewritten += c.rewritten;
        counts.kept += c.kept;
    }
    let members = ProcessSet::new(stripped.keys().copied());
    let pattern = FailurePattern::failure_free(members)?;

    let jobs: Vec<(usize, u64)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Result<Vec<(bool, usize, Option<String>)>, AnalysisError> = jobs
        .par_iter()
        .map(|&(input_idx, seed)| {
            let input = &inputs[input_idx];
            let run = run_async(RunSetup {
                automata: &stripped,
                sanctuaries: &[],
                pattern: &pattern,
                inputs: input,
                strategy: AnswerStrategy::default(),
                scheduler: Scheduler::Seeded { seed },
                budget: 0,
                prefix: &[],
            })?;
            let tag = format!("input {input_idx} seed {seed}");
            if !matches!(run.outcome, RunOutcome::Quiescent) {
                return Ok((false, 0, Some(format!("{tag}: stripped run not quiescent"))));
            }
            let lifted = lift_run(&run, p, sanctuary, automata)?;
            let carried: Vec<&Event> = lifted.events.iter().filter(|e| e.is_buffer()).collect();
            if carried.len() != run.events.len()
                || carried.into_iter().zip(&run.events).any(|(a, b)| a != b)
            {
                return Ok((false, 0, Some(format!("{tag}: buffer events disturbed"))));
            }
            let nonzero = lifted
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Answer(v) if v != ZERO))
                .count();
            let report = check_run(
                &lifted,
                automata,
                std::slice::from_ref(sanctuary),
            );
            let clean = report.no_failures() && report.flagged_rules().is_empty();
            let detail = if clean {
                None
            } else {
                let rules: Vec<String> = report
                    .failed_rules()
                    .iter()
                    .chain(report.flagged_rules().iter())
                    .map(|r| r.to_string())
                    .collect();
                Some(format!("{tag}: lifted run flagged {}", rules.join(", ")))
            };
            Ok((clean, nonzero, detail))
        })
        .collect();

    let results = results?;
    let mut report = TransformReport {
        source: name.to_string(),
        counts,
        lifted_runs: results.len(),
        lifted_passes: 0,
        lifted_failures: Vec::new(),
        nonzero_answers: 0,
    };
    for (clean, nonzero, detail) in results {
        if clean {
            report.lifted_passes += 1;
        }
        report.nonzero_answers += nonzero;
        if let Some(d) = detail {
            report.lifted_failures.push(d);
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// The enumerable sample: share inputs, consult, decide.
// ---------------------------------------------------------------------------

/// Role of a process in the transform sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleRole {
    /// Exchanges inputs with the other member, consults, decides.
    Member { other: ProcessId },
    /// Takes no steps; exists to be the dropped process.
    Spectator,
}

/// A deliberately small, fully enumerable algorithm for the transform demos:
/// two members swap inputs, ask the commitment sanctuary to commit exactly
/// when both inputs are 1, decide the answer, and gossip it; a third process
/// only spectates. Message traffic is confined to the members so runs of the
/// stripped system never address the dropped process.
#[derive(Debug, Clone)]
pub struct TransformSampleAutomaton {
    me: ProcessId,
    role: SampleRole,
    sanctuary: SanctuaryId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleState {
    /// Input not yet posted; the peer's may already be in.
    Share { x: Value, peer: Option<Value> },
    /// Input posted; waiting on the peer's.
    Wait { x: Value, peer: Option<Value> },
    /// Both inputs known: consult with their minimum.
    Ask { x: Value, y: Value },
    /// Decided the consultation's answer.
    Done { d: Value },
    /// The spectator's only state.
    Idle,
}

impl Automaton for TransformSampleAutomaton {
    type State = SampleState;

    fn initial(&self, v: Value) -> SampleState {
        match self.role {
            SampleRole::Member { .. } => SampleState::Share { x: v, peer: None },
            SampleRole::Spectator => SampleState::Idle,
        }
    }

    fn query(&self, s: &SampleState) -> Option<QuerySpec> {
        match s {
            SampleState::Ask { x, y } => Some(QuerySpec {
                sanctuary: self.sanctuary.clone(),
                value: Value(x.0.min(y.0)),
            }),
            _ => None,
        }
    }

    fn transition(
        &self,
        s: &SampleState,
        m: Option<&MsgBody>,
        d: Option<Value>,
    ) -> Transition<SampleState> {
        let other = match self.role {
            SampleRole::Member { other } => other,
            SampleRole::Spectator => return Transition::stay(SampleState::Idle),
        };
        let heard = match m {
            Some(MsgBody::Input { from, value }) if *from == other => Some(*value),
            _ => None,
        };
        match s {
            SampleState::Share { x, peer } => Transition::send(
                SampleState::Wait {
                    x: *x,
                    peer: heard.or(*peer),
                },
                Message {
                    dest: other,
                    body: MsgBody::Input {
                        from: self.me,
                        value: *x,
                    },
                },
            ),
            SampleState::Wait { x, peer } => match heard.or(*peer) {
                Some(y) => Transition::stay(SampleState::Ask { x: *x, y }),
                None => Transition::stay(s.clone()),
            },
            SampleState::Ask { .. } => match d {
                Some(answer) => Transition::send(
                    SampleState::Done { d: answer },
                    Message {
                        dest: other,
                        body: MsgBody::Verdict {
                            slot: 1,
                            value: answer,
                        },
                    },
                ),
                None => Transition::stay(s.clone()),
            },
            SampleState::Done { .. } | SampleState::Idle => Transition::stay(s.clone()),
        }
    }

    fn decision(&self, s: &SampleState) -> Option<Value> {
        match s {
            SampleState::Done { d } => Some(*d),
            _ => None,
        }
    }

    fn is_halted(&self, _s: &SampleState) -> bool {
        false
    }
}

impl EnumerableAutomaton for TransformSampleAutomaton {
    fn states(&self) -> Vec<SampleState> {
        if matches!(self.role, SampleRole::Spectator) {
            return vec![SampleState::Idle];
        }
        let vals = [ZERO, ONE];
        let opts = [None, Some(ZERO), Some(ONE)];
        let mut out = Vec::new();
        for &x in &vals {
            for &peer in &opts {
                out.push(SampleState::Share { x, peer });
            }
        }
        for &x in &vals {
            for &peer in &opts {
                out.push(SampleState::Wait { x, peer });
            }
        }
        for &x in &vals {
            for &y in &vals {
                out.push(SampleState::Ask { x, y });
            }
        }
        for &d in &vals {
            out.push(SampleState::Done { d });
        }
        out
    }

    fn message_inputs(&self) -> Vec<Option<MsgBody>> {
        let other = match self.role {
            SampleRole::Member { other } => other,
            SampleRole::Spectator => return vec![None],
        };
        vec![
            None,
            Some(MsgBody::Input {
                from: other,
                value: ZERO,
            }),
            Some(MsgBody::Input {
                from: other,
                value: ONE,
            }),
            Some(MsgBody::Verdict {
                slot: 1,
                value: ZERO,
            }),
            Some(MsgBody::Verdict {
                slot: 1,
                value: ONE,
            }),
        ]
    }
}

/// Build the transform sample: members 1 and 2, spectator 3, one commitment
/// sanctuary over all three with resiliency 2. Returns the automata, the
/// spectator (the process the transform drops), the sanctuary, and the full
/// process set.
pub fn build_transform_sample() -> (
    BTreeMap<ProcessId, TransformSampleAutomaton>,
    ProcessId,
    Sanctuary,
    ProcessSet,
) {
    let everyone = ProcessSet::new([ProcessId(1), ProcessId(2), ProcessId(3)]);
    let id = SanctuaryId::new("sigma").expect("fixed id is valid");
    let task = AgreementTask::new(
        AgreementProblem::atomic_commitment(everyone.clone()).expect("valid problem"),
        2,
    )
    .expect("valid resiliency");
    let sanctuary = Sanctuary::new(id.clone(), task);
    let mut automata = BTreeMap::new();
    automata.insert(
        ProcessId(1),
        TransformSampleAutomaton {
            me: ProcessId(1),
            role: SampleRole::Member {
                other: ProcessId(2),
            },
            sanctuary: id.clone(),
        },
    );
    automata.insert(
        ProcessId(2),
        TransformSampleAutomaton {
            me: ProcessId(2),
            role: SampleRole::Member {
                other: ProcessId(1),
            },
            sanctuary: id.clone(),
        },
    );
    automata.insert(
        ProcessId(3),
        TransformSampleAutomaton {
            me: ProcessId(3),
            role: SampleRole::Spectator,
            sanctuary: id,
        },
    );
    (automata, ProcessId(3), sanctuary, everyone)
}

// ---------------------------------------------------------------------------
// Counterexample replays.
// ---------------------------------------------------------------------------

/// A replayed counterexample scenario: a baseline run, the damaged rerun,
/// and what the rerun violates.
#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    /// Short scenario name, stable for reports.
    pub scenario: String,
    /// Whether the scenario exists at these parameters.
    pub applicable: bool,
    /// Whether the expected violation was reproduced.
    pub confirmed: bool,
    /// Human-readable trail of what was run and found.
    pub details: Vec<String>,
    /// Agreement conditions the counterexample run violates.
    pub violated: Vec<AgreementCondition>,
    /// The healthy reference run, when one was produced.
    pub baseline: Option<Run>,
    /// The violating run, when one was produced.
    pub counterexample: Option<Run>,
    /// Events shared verbatim between baseline and counterexample.
    pub shared_prefix_len: Option<usize>,
    /// Whether the shared prefix serializes to identical bytes in both runs.
    pub prefix_bytes_identical: Option<bool>,
}

impl CounterexampleReport {
    fn inapplicable(scenario: &str, why: String) -> Self {
        CounterexampleReport {
            scenario: scenario.to_string(),
            applicable: false,
            confirmed: false,
            details: vec![why],
            violated: Vec::new(),
            baseline: None,
            counterexample: None,
            shared_prefix_len: None,
            prefix_bytes_identical: None,
        }
    }

    /// One-line status in the vocabulary reports use.
    pub fn status(&self) -> String {
        if !self.applicable {
            format!("expected-counterexample: inapplicable ({})", self.scenario)
        } else if self.confirmed {
            format!("expected-counterexample: confirmed ({})", self.scenario)
        } else {
            format!("expected-counterexample: missing ({})", self.scenario)
        }
    }
}

fn event_lines(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&e.to_string());
        s.push('\n');
    }
    s
}

/// Synchronous exchange rounds in front of one commitment consultation
/// cannot solve consensus: on all-1 inputs, crashing the last process to
/// finish the exchange right before its query leaves the oracle free to
/// answer 0 (a crashed process licenses abort), and every survivor decides
/// 0 against consensus validity. The baseline failure-free run decides 1.
pub fn replay_crash_after_exchange(n: u32, f: u32) -> CounterexampleReport {
    let scenario = "crash-after-exchange";
    if f == 0 {
        return CounterexampleReport::inapplicable(
            scenario,
            "with resiliency 0 no process may crash, and the failure-free oracle must echo the unanimous commit".into(),
        );
    }
    let instance = match build_sync_k_reduction(n, f, 1) {
        Ok(i) => i,
        Err(e) => {
            return CounterexampleReport::inapplicable(scenario, format!("no such instance: {e}"))
        }
    };
    let commit_oracle = (|| -> Result<Sanctuary, AnalysisError> {
        let task = AgreementTask::new(
            AgreementProblem::atomic_commitment(instance.processes.clone())?,
            f,
        )?;
        Ok(Sanctuary::new(
            SanctuaryId::new("sigma").expect("fixed id is valid"),
            task,
        ))
    })();
    let commit_oracle = match commit_oracle {
        Ok(s) => s,
        Err(e) => {
            return CounterexampleReport::inapplicable(scenario, format!("no such oracle: {e}"))
        }
    };
    let attempted = match AgreementProblem::consensus(instance.processes.clone(), ValueDomain::binary())
    {
        Ok(p) => p,
        Err(e) => {
            return CounterexampleReport::inapplicable(scenario, format!("no such task: {e}"))
        }
    };

    let mut report = CounterexampleReport {
        scenario: scenario.to_string(),
        applicable: true,
        confirmed: false,
        details: Vec::new(),
        violated: Vec::new(),
        baseline: None,
        counterexample: None,
        shared_prefix_len: None,
        prefix_bytes_identical: None,
    };
    let inputs = InputVector::uniform(&instance.processes, ONE);
    let strategy = AnswerStrategy::default();

    // Baseline: failure-free, everyone queries commit, the oracle echoes it.
    let baseline = match run_sync(SyncSetup {
        programs: &instance.programs,
        sanctuary: &commit_oracle,
        inputs: &inputs,
        crashes: &BTreeMap::new(),
        strategy: strategy.clone(),
    }) {
        Ok(r) => r,
        Err(e) => {
            report.details.push(format!("baseline run failed: {e}"));
            return report;
        }
    };
    let baseline_ok = verify_recorded_conditions(&baseline, &attempted).no_failures()
        && baseline.decisions.values().all(|&(_, v)| v == ONE);
    report.details.push(format!(
        "baseline failure-free all-1 exchange decides 1 everywhere: {baseline_ok}"
    ));

    // The victim: last process to finish the exchange, read off the trace.
    let first_query = baseline
        .events
        .iter()
        .find(|e| matches!(e.kind, EventKind::Query(_)))
        .map(|e| e.time);
    let victim = first_query.and_then(|fq| {
        baseline
            .events
            .iter()
            .filter(|e| e.time < fq)
            .max_by_key(|e| e.time)
            .map(|e| e.process)
    });
    let Some(victim) = victim else {
        report.details.push("no exchange events found".into());
        report.baseline = Some(baseline);
        return report;
    };
    let posts = baseline
        .events
        .iter()
        .filter(|e| e.process == victim && matches!(e.kind, EventKind::Send(_)))
        .count();
    let finish_round = posts / instance.processes.len().max(1);
    report.details.push(format!(
        "{victim} finishes the exchange last, in round {finish_round}; rerunning with it crashed before its query"
    ));

    // Rerun: same inputs, the victim crashes after the exchange, before its
    // query. Every survivor heard all-1 and still queries commit, but the
    // crash licenses the oracle to answer abort.
    let crashes = BTreeMap::from([(victim, SyncCrashPoint::BeforeQuery)]);
    let rerun = match run_sync(SyncSetup {
        programs: &instance.programs,
        sanctuary: &commit_oracle,
        inputs: &inputs,
        crashes: &crashes,
        strategy,
    }) {
        Ok(r) => r,
        Err(e) => {
            report.details.push(format!("crashed rerun failed: {e}"));
            report.baseline = Some(baseline);
            return report;
        }
    };
    let answers_zero = rerun
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Answer(v) => Some(v),
            _ => None,
        })
        .all(|v| v == ZERO);
    let decisions_zero =
        !rerun.decisions.is_empty() && rerun.decisions.values().all(|&(_, v)| v == ZERO);
    let verdicts = verify_recorded_conditions(&rerun, &attempted);
    report.violated = verdicts.failed_conditions();
    report.details.push(format!(
        "crashed rerun: oracle answers 0 under the minimum-allowed strategy ({answers_zero}), \
         all survivors decide 0 on all-1 inputs ({decisions_zero})"
    ));
    report.confirmed = baseline_ok
        && answers_zero
        && decisions_zero
        && report.violated.contains(&AgreementCondition::Validity);
    report.baseline = Some(baseline);
    report.counterexample = Some(rerun);
    report
}

/// The guarded single-oracle commitment protocol legitimately decides 0 when
/// the outsider is crashed from the start; replaying exactly the decided
/// prefix of that history under the failure-free pattern extends it to a
/// legal failure-free all-1 run that still decides 0, violating commitment
/// validity. The two runs share the prefix byte for byte.
pub fn replay_guarded_race(n: u32, f: u32) -> CounterexampleReport {
    let scenario = "guarded-race";
    let instance = match build_naive_guarded(n, f) {
        Ok(i) => i,
        Err(e) => {
            return CounterexampleReport::inapplicable(scenario, format!("no such instance: {e}"))
        }
    };
    let outsider = ProcessId(n + 1);
    let mut report = CounterexampleReport {
        scenario: scenario.to_string(),
        applicable: true,
        confirmed: false,
        details: Vec::new(),
        violated: Vec::new(),
        baseline: None,
        counterexample: None,
        shared_prefix_len: None,
        prefix_bytes_identical: None,
    };
    let inputs = InputVector::uniform(&instance.processes, ONE);
    let queue: Vec<ProcessId> = instance.processes.iter().collect();

    // Phase 1: the outsider is crashed from the start; members never see its
    // input, query 0, and the oracle must abort. A fully legal run.
    let crashed = match FailurePattern::new(
        instance.processes.clone(),
        BTreeMap::from([(outsider, 0)]),
    ) {
        Ok(p) => p,
        Err(e) => {
            report.details.push(format!("crash pattern rejected: {e}"));
            return report;
        }
    };
    let first = match run_async(RunSetup {
        automata: &instance.automata,
        sanctuaries: &instance.sanctuaries,
        pattern: &crashed,
        inputs: &inputs,
        strategy: AnswerStrategy::default(),
        scheduler: Scheduler::FairExtension {
            queue: queue.clone(),
        },
        budget: 0,
        prefix: &[],
    }) {
        Ok(r) => r,
        Err(e) => {
            report.details.push(format!("crashed run failed: {e}"));
            return report;
        }
    };
    let first_decides_zero =
        !first.decisions.is_empty() && first.decisions.values().all(|&(_, v)| v == ZERO);
    let first_legal = check_run(&first, &instance.automata, &instance.sanctuaries).no_failures();
    report.details.push(format!(
        "outsider crashed at 0: members decide 0 ({first_decides_zero}), run passes every rule ({first_legal})"
    ));

    // Phase 2: cut the history at the last decision and extend that exact
    // prefix under the failure-free pattern. The members' fate is sealed
    // before the outsider is scheduled at all.
    let t0 = first.decisions.values().map(|&(t, _)| t).max();
    let Some(t0) = t0 else {
        report.details.push("no decisions recorded".into());
        report.baseline = Some(first);
        return report;
    };
    let prefix: Vec<Event> = first
        .events
        .iter()
        .take_while(|e| e.time <= t0)
        .cloned()
        .collect();
    let free = match FailurePattern::failure_free(instance.processes.clone()) {
        Ok(p) => p,
        Err(e) => {
            report.details.push(format!("pattern rejected: {e}"));
            report.baseline = Some(first);
            return report;
        }
    };
    let second = match run_async(RunSetup {
        automata: &instance.automata,
        sanctuaries: &instance.sanctuaries,
        pattern: &free,
        inputs: &inputs,
        strategy: AnswerStrategy::default(),
        scheduler: Scheduler::FairExtension { queue },
        budget: 0,
        prefix: &prefix,
    }) {
        Ok(r) => r,
        Err(e) => {
            report.details.push(format!("failure-free extension failed: {e}"));
            report.baseline = Some(first);
            return report;
        }
    };
    let shared = second.events.len() >= prefix.len()
        && second.events[..prefix.len()] == prefix[..];
    let bytes_identical =
        shared && event_lines(&second.events[..prefix.len()]) == event_lines(&prefix);
    let second_decides_zero = second.decisions.len() == instance.processes.len()
        && second.decisions.values().all(|&(_, v)| v == ZERO);
    let second_legal = check_run(&second, &instance.automata, &instance.sanctuaries).no_failures();
    let verdicts =
        verify_agreement_conditions(&second, &instance.automata, instance.task.problem());
    report.violated = verdicts.failed_conditions();
    report.details.push(format!(
        "failure-free extension of the decided prefix: shares {} events byte for byte ({bytes_identical}), \
         passes every rule ({second_legal}), and decides 0 on all-1 inputs ({second_decides_zero})",
        prefix.len()
    ));
    report.shared_prefix_len = Some(prefix.len());
    report.prefix_bytes_identical = Some(bytes_identical);
    report.confirmed = first_decides_zero
        && first_legal
        && bytes_identical
        && second_decides_zero
        && second_legal
        && report.violated.contains(&AgreementCondition::Validity);
    report.baseline = Some(first);
    report.counterexample = Some(second);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::check::Verdict;

    fn suite_inputs(members: &ProcessSet) -> Vec<InputVector> {
        crate::task::enumerate_input_vectors(members, &ValueDomain::binary())
    }

    #[test]
    fn stripped_automata_never_consult_and_keep_states() {
        let (automata, p, sanctuary, _) = build_transform_sample();
        let stripped = remove_ac_oracle(&automata, p, &sanctuary).expect("strip");
        assert!(!stripped.contains_key(&p));
        for (q, a) in &stripped {
            for s in a.states() {
                assert!(a.query(&s).is_none());
            }
            assert_eq!(a.states(), automata[q].states());
            for v in [ZERO, ONE] {
                assert_eq!(a.initial(v), automata[q].initial(v));
            }
        }
    }

    #[test]
    fn transition_bookkeeping_is_frozen() {
        let (automata, p, _, _) = build_transform_sample();
        let member = count_transitions(&automata[&ProcessId(1)]);
        assert_eq!(member.total, 110);
        assert_eq!(member.removed, 20);
        assert_eq!(member.rewritten, 20);
        assert_eq!(member.kept, 70);
        assert!(member.balanced());
        let spectator = count_transitions(&automata[&p]);
        assert_eq!(spectator.total, 1);
        assert_eq!(spectator.removed, 0);
        assert_eq!(spectator.kept, 1);
    }

    #[test]
    fn strip_rejects_foreign_sanctuaries_and_unknown_processes() {
        let (automata, _, sanctuary, _) = build_transform_sample();
        assert!(matches!(
            remove_ac_oracle(&automata, ProcessId(9), &sanctuary),
            Err(AnalysisError::UnknownProcess(q)) if q == ProcessId(9)
        ));
        let other = Sanctuary::new(
            SanctuaryId::new("tau").expect("valid id"),
            sanctuary.task().clone(),
        );
        assert!(matches!(
            remove_ac_oracle(&automata, ProcessId(3), &other),
            Err(AnalysisError::WrongSanctuary { .. })
        ));
        let everyone = ProcessSet::new([ProcessId(1), ProcessId(2), ProcessId(3)]);
        let cons = Sanctuary::new(
            SanctuaryId::new("sigma").expect("valid id"),
            AgreementTask::new(
                AgreementProblem::consensus(everyone, ValueDomain::binary()).expect("problem"),
                1,
            )
            .expect("task"),
        );
        assert!(matches!(
            remove_ac_oracle(&automata, ProcessId(3), &cons),
            Err(AnalysisError::NotCommitment(_))
        ));
    }

    #[test]
    fn lifted_run_passes_every_rule_with_zero_answers() {
        let (automata, p, sanctuary, _) = build_transform_sample();
        let stripped = remove_ac_oracle(&automata, p, &sanctuary).expect("strip");
        let members = ProcessSet::new(stripped.keys().copied());
        let inputs = InputVector::uniform(&members, ONE);
        let pattern = FailurePattern::failure_free(members).expect("pattern");
        let run = run_async(RunSetup {
            automata: &stripped,
            sanctuaries: &[],
            pattern: &pattern,
            inputs: &inputs,
            strategy: AnswerStrategy::default(),
            scheduler: Scheduler::Seeded { seed: 11 },
            budget: 0,
            prefix: &[],
        })
        .expect("run");
        assert!(run.events.iter().all(|e| e.is_buffer()));

        let lifted = lift_run(&run, p, &sanctuary, &automata).expect("lift");
        assert!(lifted.processes.contains(p));
        assert_eq!(lifted.pattern.crash_time(p), Some(0));
        assert_eq!(lifted.inputs.get(p), Some(ONE));

        // Exactly one consultation per member, querying the input minimum.
        let queries: Vec<Value> = lifted
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Query(v) => Some(v),
                _ => None,
            })
            .collect();
        assert_eq!(queries, vec![ONE, ONE]);
        let answers: Vec<Value> = lifted
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Answer(v) => Some(v),
                _ => None,
            })
            .collect();
        assert_eq!(answers, vec![ZERO, ZERO]);

        // Buffer events carried verbatim, in order.
        let carried: Vec<&Event> = lifted.events.iter().filter(|e| e.is_buffer()).collect();
        assert_eq!(carried.len(), run.events.len());
        assert!(carried.into_iter().zip(&run.events).all(|(a, b)| a == b));

        let report = check_run(&lifted, &automata, std::slice::from_ref(&sanctuary));
        assert!(report.no_failures(), "findings: {:?}", report.findings);
        assert!(report.flagged_rules().is_empty());
        assert!(report.law_violations.is_empty());
    }

    #[test]
    fn lift_rejects_runs_that_already_know_the_spectator() {
        let (automata, p, sanctuary, everyone) = build_transform_sample();
        let inputs = InputVector::uniform(&everyone, ONE);
        let pattern = FailurePattern::failure_free(everyone).expect("pattern");
        let run = run_async(RunSetup {
            automata: &automata,
            sanctuaries: std::slice::from_ref(&sanctuary),
            pattern: &pattern,
            inputs: &inputs,
            strategy: AnswerStrategy::default(),
            scheduler: Scheduler::Seeded { seed: 0 },
            budget: 0,
            prefix: &[],
        })
        .expect("run");
        assert!(matches!(
            lift_run(&run, p, &sanctuary, &automata),
            Err(AnalysisError::ProcessPresent(q)) if q == p
        ));
    }

    #[test]
    fn soundness_suite_lifts_every_run_clean() {
        let (automata, p, sanctuary, _) = build_transform_sample();
        let members = ProcessSet::new([ProcessId(1), ProcessId(2)]);
        let inputs = suite_inputs(&members);
        let seeds: Vec<u64> = (0..5).collect();
        let report =
            transform_soundness_suite("sample", &automata, p, &sanctuary, &inputs, &seeds)
                .expect("suite");
        assert_eq!(report.lifted_runs, 20);
        assert_eq!(report.lifted_passes, 20);
        assert!(report.lifted_failures.is_empty());
        assert_eq!(report.nonzero_answers, 0);
        assert_eq!(report.counts.total, 220);
        assert_eq!(report.counts.removed, 40);
        assert_eq!(report.counts.rewritten, 40);
        assert_eq!(report.counts.kept, 140);
        assert!(report.sound());
    }

    #[test]
    fn flip_requires_an_initially_crashed_spectator() {
        let instance = build_naive_guarded(2, 1).expect("build");
        let outsider = ProcessId(3);
        let inputs = InputVector::uniform(&instance.processes, ONE);
        let crashed = FailurePattern::new(
            instance.processes.clone(),
            BTreeMap::from([(outsider, 0)]),
        )
        .expect("pattern");
        let run = run_async(RunSetup {
            automata: &instance.automata,
            sanctuaries: &instance.sanctuaries,
            pattern: &crashed,
            inputs: &inputs,
            strategy: AnswerStrategy::default(),
            scheduler: Scheduler::Seeded { seed: 3 },
            budget: 0,
            prefix: &[],
        })
        .expect("run");

        // Flipping a live process is rejected; flipping the crashed outsider
        // leaves every rule verdict untouched.
        assert!(flip_initial_value(&run, ProcessId(1), ZERO).is_err());
        let flipped = flip_initial_value(&run, outsider, ZERO).expect("flip");
        assert_eq!(flipped.inputs.get(outsider), Some(ZERO));
        let before = check_run(&run, &instance.automata, &instance.sanctuaries);
        let after = check_run(&flipped, &instance.automata, &instance.sanctuaries);
        let verdicts = |r: &crate::runtime::check::CheckReport| -> Vec<Verdict> {
            r.findings.iter().map(|f| f.verdict).collect()
        };
        assert_eq!(verdicts(&before), verdicts(&after));
        assert!(after.no_failures());

        let same = flip_initial_value(&run, outsider, ONE).expect("flip");
        assert_eq!(same.inputs, run.inputs);
        assert_eq!(same.events, run.events);
    }

    #[test]
    fn crash_after_exchange_reproduces_the_validity_break() {
        let report = replay_crash_after_exchange(3, 1);
        assert!(report.applicable);
        assert!(report.confirmed, "details: {:?}", report.details);
        assert!(report.violated.contains(&AgreementCondition::Validity));
        assert!(report.status().contains("confirmed"));
        let baseline = report.baseline.expect("baseline run");
        assert!(baseline.decisions.values().all(|&(_, v)| v == ONE));
        let bad = report.counterexample.expect("counterexample run");
        assert!(bad.decisions.values().all(|&(_, v)| v == ZERO));
    }

    #[test]
    fn crash_after_exchange_needs_a_crash_to_spend() {
        let report = replay_crash_after_exchange(3, 0);
        assert!(!report.applicable);
        assert!(!report.confirmed);
        assert!(report.status().contains("inapplicable"));
    }

    #[test]
    fn guarded_race_extends_the_prefix_to_a_failure_free_abort() {
        let report = replay_guarded_race(2, 1);
        assert!(report.applicable);
        assert!(report.confirmed, "details: {:?}", report.details);
        assert_eq!(report.violated, vec![AgreementCondition::Validity]);
        assert_eq!(report.prefix_bytes_identical, Some(true));
        let len = report.shared_prefix_len.expect("prefix length");
        assert!(len > 0);
        let baseline = report.baseline.expect("baseline");
        let bad = report.counterexample.expect("counterexample");
        assert_eq!(baseline.events[..len], bad.events[..len]);
        assert!(bad.pattern.faulty().is_empty());
        assert_eq!(bad.decisions.len(), 3);
    }
}
