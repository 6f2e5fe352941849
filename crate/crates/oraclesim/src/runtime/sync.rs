//! Synchronous round runner.
//!
//! Runs a fixed number of lockstep exchange rounds, then a single
//! consultation of one sanctuary, and records each surviving process's
//! decision as the answer it received. The run uses the same event
//! vocabulary as the asynchronous engine but a different discipline: a
//! round is a send phase (every live process posts one message to every
//! process, itself included) followed by a receive phase (every live
//! process absorbs what reached it). Synchronous histories therefore do
//! not parse under the asynchronous step grammar and are checked with the
//! agreement conditions and oracle laws, not the structural run rules.
//!
//! # Crash model
//!
//! Crashes are specified per process as a [`SyncCrashPoint`] and the
//! failure pattern is derived from the emitted history:
//!
//! * `DuringRound { round, deliver_to }`: in its crash round the process
//!   posts messages only to `deliver_to` (in destination id order) and its
//!   crash time is the tick of the first send it omits, so everything it
//!   did emit lies strictly before the crash.
//! * `BeforeQuery`: full participation in every round, crash in place of
//!   the query.
//! * `AfterQuery`: the query is posted, the crash lands before the answer,
//!   leaving the consultation with a query that is never answered.
//!
//! # Invariants
//!
//! * Event times are strictly increasing across the run, one event per
//!   tick, exactly as in the asynchronous engine.
//! * No process has an event at or past its derived crash time.
//! * Every correct process queries exactly once and decides exactly the
//!   answer it receives, stamped with the answer's tick.

use std::collections::BTreeMap;

use crate::oracle::{restrict_failure_pattern, AnswerStrategy, OracleInstance, Sanctuary};
use crate::runtime::{Event, EventKind, EventLoc, Message, MsgBody, Run, RunError, RunMode, RunOutcome};
use crate::task::{FailurePattern, InputVector, ProcessId, TimeStep, Value};

/// Where in the synchronous schedule a process fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncCrashPoint {
    /// Crash in the send phase of `round` (1-based) after posting only to
    /// `deliver_to`.
    DuringRound {
        round: u32,
        deliver_to: crate::task::ProcessSet,
    },
    /// Crash between the last round and the query.
    BeforeQuery,
    /// Crash between the query and the answer.
    AfterQuery,
}

/// A deterministic synchronous program: what to post each round, how to
/// fold a round's deliveries into the state, and what to ask the sanctuary
/// once the rounds are over.
pub trait RoundProgram: Clone {
    type State: Clone;

    fn init(&self, p: ProcessId, input: Value) -> Self::State;
    /// Number of exchange rounds before the consultation.
    fn rounds(&self) -> u32;
    /// The value posted to every process in round `r` (1-based).
    fn message(&self, s: &Self::State, r: u32) -> Value;
    /// Fold the messages that arrived in round `r` into the state.
    fn absorb_round(
        &self,
        s: &Self::State,
        r: u32,
        received: &BTreeMap<ProcessId, Value>,
    ) -> Self::State;
    /// The value submitted to the sanctuary after the last round.
    fn query_value(&self, s: &Self::State) -> Value;
}

/// Everything [`run_sync`] needs to produce a run.
pub struct SyncSetup<'a, P: RoundProgram> {
    pub programs: &'a BTreeMap<ProcessId, P>,
    pub sanctuary: &'a Sanctuary,
    pub inputs: &'a InputVector,
    pub crashes: &'a BTreeMap<ProcessId, SyncCrashPoint>,
    pub strategy: AnswerStrategy,
}

/// Run `programs` through their rounds and one consultation, deriving the
/// failure pattern from `crashes`.
pub fn run_sync<P: RoundProgram>(setup: SyncSetup<'_, P>) -> Result<Run, RunError> {
    let procs: Vec<ProcessId> = setup.programs.keys().copied().collect();
    let universe = crate::task::ProcessSet::new(procs.iter().copied());
    let rounds = setup
        .programs
        .values()
        .next()
        .map(|p| p.rounds())
        .unwrap_or(0);

    for (p, point) in setup.crashes {
        if !universe.contains(*p) {
            return Err(RunError::InvalidCrashSpec {
                process: *p,
                detail: "not a process of the run".into(),
            });
        }
        if let SyncCrashPoint::DuringRound { round, deliver_to } = point {
            if *round == 0 || *round > rounds {
                return Err(RunError::InvalidCrashSpec {
                    process: *p,
                    detail: format!("round {round} out of range 1..={rounds}"),
                });
            }
            if !deliver_to.is_subset(&universe) {
                return Err(RunError::InvalidCrashSpec {
                    process: *p,
                    detail: "deliver_to mentions unknown processes".into(),
                });
            }
        }
    }

    let mut states: BTreeMap<ProcessId, P::State> = BTreeMap::new();
    for &p in &procs {
        let input = setup.inputs.get(p).ok_or(RunError::MissingInput(p))?;
        states.insert(p, setup.programs[&p].init(p, input));
    }

    let mut events: Vec<Event> = Vec::new();
    let mut clock: TimeStep = 0;
    let mut crash_times: BTreeMap<ProcessId, TimeStep> = BTreeMap::new();
    let mut down: BTreeMap<ProcessId, bool> = procs.iter().map(|&p| (p, false)).collect();
    fn tick(
        events: &mut Vec<Event>,
        clock: &mut TimeStep,
        loc: EventLoc,
        p: ProcessId,
        kind: EventKind,
    ) -> TimeStep {
        let t = *clock;
        *clock += 1;
        events.push(Event {
            loc,
            process: p,
            time: t,
            kind,
        });
        t
    }

    for r in 1..=rounds {
        // Send phase: posts[dest][from] = value, in (sender, dest) id order.
        let mut posts: BTreeMap<ProcessId, BTreeMap<ProcessId, Value>> = BTreeMap::new();
        for &p in &procs {
            if down[&p] {
                continue;
            }
            let value = setup.programs[&p].message(&states[&p], r);
            let deliver_to = match setup.crashes.get(&p) {
                Some(SyncCrashPoint::DuringRound { round, deliver_to }) if *round == r => {
                    Some(deliver_to.clone())
                }
                _ => None,
            };
            for &q in &procs {
                if deliver_to.as_ref().is_some_and(|s| !s.contains(q)) {
                    // First omitted send fixes the crash time; the clock
                    // does not advance for events that never happen.
                    crash_times.entry(p).or_insert(clock);
                    continue;
                }
                tick(
                    &mut events,
                    &mut clock,
                    EventLoc::Buffer,
                    p,
                    EventKind::Send(Some(Message {
                        dest: q,
                        body: MsgBody::Input { from: p, value },
                    })),
                );
                posts.entry(q).or_default().insert(p, value);
            }
            if deliver_to.is_some() {
                // Full delivery still crashes the process at the end of its
                // send phase.
                crash_times.entry(p).or_insert(clock);
                down.insert(p, true);
            }
        }
        // Receive phase: live processes absorb what reached them.
        for &q in &procs {
            if down[&q] {
                continue;
            }
            let received = posts.remove(&q).unwrap_or_default();
            for (&from, &value) in &received {
                tick(
                    &mut events,
                    &mut clock,
                    EventLoc::Buffer,
                    q,
                    EventKind::Receive(Message {
                        dest: q,
                        body: MsgBody::Input { from, value },
                    }),
                );
            }
            let next = setup.programs[&q].absorb_round(&states[&q], r, &received);
            states.insert(q, next);
        }
    }

    // Query phase.
    let mut query_times: Vec<(ProcessId, TimeStep, Value)> = Vec::new();
    let mut awaiting: Vec<ProcessId> = Vec::new();
    for &p in &procs {
        if down[&p] {
            continue;
        }
        match setup.crashes.get(&p) {
            Some(SyncCrashPoint::BeforeQuery) => {
                crash_times.entry(p).or_insert(clock);
                down.insert(p, true);
            }
            Some(SyncCrashPoint::AfterQuery) => {
                let v = setup.programs[&p].query_value(&states[&p]);
                let t = tick(
                    &mut events,
                    &mut clock,
                    EventLoc::Sanctuary(setup.sanctuary.id().clone()),
                    p,
                    EventKind::Query(v),
                );
                query_times.push((p, t, v));
                crash_times.entry(p).or_insert(clock);
                down.insert(p, true);
            }
            _ => {
                let v = setup.programs[&p].query_value(&states[&p]);
                let t = tick(
                    &mut events,
                    &mut clock,
                    EventLoc::Sanctuary(setup.sanctuary.id().clone()),
                    p,
                    EventKind::Query(v),
                );
                query_times.push((p, t, v));
                awaiting.push(p);
            }
        }
    }

    // Answer phase: the pattern is now fully determined, so the oracle can
    // be constructed and fed the recorded consultation.
    let pattern = FailurePattern::new(universe.clone(), crash_times)?;
    let restricted = restrict_failure_pattern(&pattern, setup.sanctuary, &universe)?;
    let mut oracle = OracleInstance::new(setup.sanctuary.clone(), restricted, setup.strategy);
    for (p, t, v) in &query_times {
        oracle.record_query(*p, *t, *v)?;
    }
    let mut decisions: BTreeMap<ProcessId, (TimeStep, Value)> = BTreeMap::new();
    for &p in &awaiting {
        let t = clock;
        let d = oracle.record_answer(p, t)?;
        tick(
            &mut events,
            &mut clock,
            EventLoc::Sanctuary(setup.sanctuary.id().clone()),
            p,
            EventKind::Answer(d),
        );
        decisions.insert(p, (t, d));
    }

    Ok(Run {
        mode: RunMode::Sync,
        processes: universe,
        pattern,
        inputs: setup.inputs.clone(),
        events,
        outcome: RunOutcome::Quiescent,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SanctuaryId;
    use crate::task::{AgreementProblem, AgreementTask, ProcessSet, ValueDomain};

    /// One exchange round: post the input, then submit 1 to the sanctuary
    /// exactly when every process's input arrived and all of them are 1.
    #[derive(Clone)]
    struct Exchange {
        n: u32,
    }

    #[derive(Clone)]
    struct ExchangeState {
        input: Value,
        heard: BTreeMap<ProcessId, Value>,
    }

    impl RoundProgram for Exchange {
        type State = ExchangeState;

        fn init(&self, _p: ProcessId, input: Value) -> ExchangeState {
            ExchangeState {
                input,
                heard: BTreeMap::new(),
            }
        }

        fn rounds(&self) -> u32 {
            1
        }

        fn message(&self, s: &ExchangeState, _r: u32) -> Value {
            s.input
        }

        fn absorb_round(
            &self,
            s: &ExchangeState,
            _r: u32,
            received: &BTreeMap<ProcessId, Value>,
        ) -> ExchangeState {
            let mut heard = s.heard.clone();
            heard.extend(received.iter().map(|(&p, &v)| (p, v)));
            ExchangeState {
                input: s.input,
                heard,
            }
        }

        fn query_value(&self, s: &ExchangeState) -> Value {
            let all_one =
                s.heard.len() == self.n as usize && s.heard.values().all(|&v| v == Value(1));
            if all_one {
                Value(1)
            } else {
                Value(0)
            }
        }
    }

    fn setup(n: u32) -> (BTreeMap<ProcessId, Exchange>, Sanctuary) {
        let procs = ProcessSet::contiguous(n);
        let problem =
            AgreementProblem::consensus(procs, ValueDomain::binary()).expect("valid problem");
        let task = AgreementTask::new(problem, 1).expect("valid task");
        let sanctuary = Sanctuary::new(SanctuaryId::new("sigma").expect("valid id"), task);
        let programs = (1..=n).map(|i| (ProcessId(i), Exchange { n })).collect();
        (programs, sanctuary)
    }

    fn run(
        n: u32,
        inputs: &InputVector,
        crashes: BTreeMap<ProcessId, SyncCrashPoint>,
    ) -> Run {
        let (programs, sanctuary) = setup(n);
        run_sync(SyncSetup {
            programs: &programs,
            sanctuary: &sanctuary,
            inputs,
            crashes: &crashes,
            strategy: AnswerStrategy::default(),
        })
        .expect("sync run succeeds")
    }

    #[test]
    fn failure_free_all_ones_decides_one() {
        let procs = ProcessSet::contiguous(3);
        let inputs = InputVector::uniform(&procs, Value(1));
        let r = run(3, &inputs, BTreeMap::new());
        assert_eq!(r.decisions.len(), 3);
        assert!(r.decisions.values().all(|&(_, v)| v == Value(1)));
        assert!(r.events.windows(2).all(|w| w[0].time < w[1].time));
        // 9 sends, 9 receives, 3 queries, 3 answers.
        assert_eq!(r.events.len(), 24);
        assert!(r.pattern.faulty().is_empty());
    }

    #[test]
    fn a_zero_input_forces_zero_everywhere() {
        let procs = ProcessSet::contiguous(3);
        let mut inputs = InputVector::uniform(&procs, Value(1));
        inputs.set(ProcessId(2), Value(0));
        let r = run(3, &inputs, BTreeMap::new());
        assert!(r.decisions.values().all(|&(_, v)| v == Value(0)));
    }

    #[test]
    fn silent_crasher_pushes_survivors_to_zero() {
        let procs = ProcessSet::contiguous(3);
        let inputs = InputVector::uniform(&procs, Value(1));
        let crashes = [(
            ProcessId(3),
            SyncCrashPoint::DuringRound {
                round: 1,
                deliver_to: ProcessSet::new([]),
            },
        )]
        .into_iter()
        .collect();
        let r = run(3, &inputs, crashes);
        // Survivors miss one input, submit 0, and the consultation answers 0.
        assert_eq!(r.decisions.len(), 2);
        assert!(r.decisions.values().all(|&(_, v)| v == Value(0)));
        let crash = r.pattern.crash_time(ProcessId(3)).expect("crashed");
        assert!(r
            .events
            .iter()
            .filter(|e| e.process == ProcessId(3))
            .all(|e| e.time < crash));
    }

    #[test]
    fn full_delivery_crash_before_query_keeps_survivors_at_one() {
        let procs = ProcessSet::contiguous(3);
        let inputs = InputVector::uniform(&procs, Value(1));
        let crashes = [(
            ProcessId(3),
            SyncCrashPoint::DuringRound {
                round: 1,
                deliver_to: ProcessSet::contiguous(3),
            },
        )]
        .into_iter()
        .collect();
        let r = run(3, &inputs, crashes);
        // Everyone heard all three ones, so the survivors submit 1.
        assert!(r.decisions.values().all(|&(_, v)| v == Value(1)));
        assert_eq!(r.decisions.len(), 2);
        // The crasher's sends all precede its crash time.
        let crash = r.pattern.crash_time(ProcessId(3)).expect("crashed");
        let mine: Vec<_> = r
            .events
            .iter()
            .filter(|e| e.process == ProcessId(3))
            .collect();
        assert_eq!(mine.len(), 3, "three sends, no receive, no query");
        assert!(mine.iter().all(|e| e.time < crash));
    }

    #[test]
    fn after_query_crash_leaves_an_unanswered_query() {
        let procs = ProcessSet::contiguous(3);
        let inputs = InputVector::uniform(&procs, Value(1));
        let crashes = [(ProcessId(1), SyncCrashPoint::AfterQuery)]
            .into_iter()
            .collect();
        let r = run(3, &inputs, crashes);
        assert_eq!(r.decisions.len(), 2);
        assert!(!r.decisions.contains_key(&ProcessId(1)));
        let queries = r
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Query(_)))
            .count();
        let answers = r
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Answer(_)))
            .count();
        assert_eq!((queries, answers), (3, 2));
    }

    #[test]
    fn sync_runs_are_deterministic() {
        let procs = ProcessSet::contiguous(4);
        let mut inputs = InputVector::uniform(&procs, Value(1));
        inputs.set(ProcessId(4), Value(0));
        let crashes: BTreeMap<ProcessId, SyncCrashPoint> = [(
            ProcessId(2),
            SyncCrashPoint::DuringRound {
                round: 1,
                deliver_to: ProcessSet::new([ProcessId(1), ProcessId(2)]),
            },
        )]
        .into_iter()
        .collect();
        let (programs, sanctuary) = {
            let procs = ProcessSet::contiguous(4);
            let problem = AgreementProblem::consensus(procs, ValueDomain::binary())
                .expect("valid problem");
            let task = AgreementTask::new(problem, 1).expect("valid task");
            let sanctuary = Sanctuary::new(SanctuaryId::new("sigma").expect("valid id"), task);
            let programs: BTreeMap<ProcessId, Exchange> =
                (1..=4).map(|i| (ProcessId(i), Exchange { n: 4 })).collect();
            (programs, sanctuary)
        };
        let go = || {
            run_sync(SyncSetup {
                programs: &programs,
                sanctuary: &sanctuary,
                inputs: &inputs,
                crashes: &crashes,
                strategy: AnswerStrategy::default(),
            })
            .expect("sync run succeeds")
        };
        let a = go();
        let b = go();
        assert_eq!(a.events, b.events);
        assert_eq!(a.decisions, b.decisions);
    }

    #[test]
    fn out_of_range_round_is_rejected() {
        let (programs, sanctuary) = setup(2);
        let procs = ProcessSet::contiguous(2);
        let inputs = InputVector::uniform(&procs, Value(1));
        let crashes = [(
            ProcessId(1),
            SyncCrashPoint::DuringRound {
                round: 2,
                deliver_to: ProcessSet::new([]),
            },
        )]
        .into_iter()
        .collect();
        let err = run_sync(SyncSetup {
            programs: &programs,
            sanctuary: &sanctuary,
            inputs: &inputs,
            crashes: &crashes,
            strategy: AnswerStrategy::default(),
        })
        .expect_err("round 2 of a 1-round program");
        assert!(matches!(err, RunError::InvalidCrashSpec { .. }));
    }
}
