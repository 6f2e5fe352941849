//! Asynchronous run engine.
//!
//! The engine drives a set of process automata against their sanctuaries
//! under a failure pattern, producing a [`Run`]. Scheduling is factored into
//! three interchangeable policies:
//!
//! * [`Scheduler::Seeded`] picks uniformly among enabled actions with a
//!   deterministic ChaCha8 stream, so a `(setup, seed)` pair always yields
//!   the same run.
//! * [`Scheduler::FairExtension`] rotates a queue of processes and services
//!   each one with a fixed priority (answer a locked consultation, otherwise
//!   take an internal step, queries included, otherwise deliver the oldest
//!   pending message). It dictates answer values that are provably legal for
//!   the sanctuary's problem, which makes it suitable for extending a
//!   replayed prefix into a quiescent run.
//! * [`Scheduler::Scripted`] replays an explicit action list and fails with
//!   [`RunError::ScriptStuck`] if an action is not enabled, which keeps
//!   regression scripts honest when the engine changes.
//!
//! # Invariants
//!
//! * Every generated event gets a fresh tick: times strictly increase across
//!   the whole run, so any prefix cut lands between actions, never inside
//!   one.
//! * An action emits its events atomically: `[S]`, `[Q]`, `[R, S]`,
//!   `[R, Q]`, or `[A, S]`. Steps of distinct processes interleave only at
//!   action granularity.
//! * A process with a pending query is *locked*: it takes no other action
//!   until its answer arrives, at which point the `[A, S]` pair completes
//!   the step.
//! * Crash gating: an action needing `k` ticks is enabled for `p` only if
//!   all `k` ticks fall before `p`'s crash time, so no event of `p` ever
//!   carries a time at or past it.
//! * Messages addressed to crashed or halted processes can still be
//!   delivered (a halted process drains them with `[R, S(none)]` steps);
//!   they never block quiescence once the destination is past its crash
//!   time.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::{AnswerStrategy, OracleInstance, Sanctuary, SanctuaryId};
use crate::runtime::automaton::Automaton;
use crate::runtime::{
    Event, EventKind, EventLoc, Message, MsgBody, Run, RunError, RunMode, RunOutcome,
};
use crate::task::{FailurePattern, InputVector, ProblemKind, ProcessId, TimeStep, Value};

/// Default cap on the number of events a single run may generate.
pub const DEFAULT_BUDGET: u64 = 20_000;

/// One scheduling decision, in the vocabulary the scripted scheduler and the
/// trace format share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Let `process` take a step from its current state without receiving:
    /// either issue its pending query (`[Q]`) or take a productive internal
    /// step (`[S]`).
    StartStep { process: ProcessId },
    /// Deliver the message at `index` in `process`'s mailbox (0 = oldest).
    Deliver { process: ProcessId, index: usize },
    /// Complete `process`'s locked consultation. `value: None` lets the
    /// sanctuary's answer strategy choose; `Some(v)` dictates `v`, which
    /// must be a legal candidate.
    Answer {
        process: ProcessId,
        value: Option<Value>,
    },
}

/// Scheduling policy for [`run_async`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheduler {
    /// Uniform random choice among enabled actions, seeded for replay.
    Seeded { seed: u64 },
    /// Round-robin queue with a deterministic service rule per process.
    /// An empty queue defaults to all processes in id order.
    FairExtension { queue: Vec<ProcessId> },
    /// Fixed action list; validation errors abort the run.
    Scripted { actions: Vec<Action> },
}

/// Everything [`run_async`] needs to produce a run.
pub struct RunSetup<'a, A: Automaton> {
    pub automata: &'a BTreeMap<ProcessId, A>,
    pub sanctuaries: &'a [Sanctuary],
    pub pattern: &'a FailurePattern,
    pub inputs: &'a InputVector,
    pub strategy: AnswerStrategy,
    pub scheduler: Scheduler,
    /// Cap on events generated past the prefix; 0 means [`DEFAULT_BUDGET`].
    pub budget: u64,
    /// Events to replay before the scheduler takes over. Must be an
    /// action-aligned prefix of a run over the same automata and inputs.
    pub prefix: &'a [Event],
}

/// A process holding an unanswered query, together with the message its
/// current step consumed (for `[R, Q]` steps) so the eventual `[A, S]` pair
/// can finish the transition.
#[derive(Debug, Clone)]
struct LockInfo {
    sanctuary: SanctuaryId,
    consumed: Option<MsgBody>,
}

struct ProcState<A: Automaton> {
    state: A::State,
    mailbox: VecDeque<MsgBody>,
    lock: Option<LockInfo>,
}

/// Partial step assembly used while replaying a prefix.
#[derive(Default)]
struct PendingStep {
    received: Option<MsgBody>,
    queried: bool,
    answer: Option<Value>,
}

impl PendingStep {
    fn is_empty(&self) -> bool {
        self.received.is_none() && !self.queried && self.answer.is_none()
    }
}

struct Engine<'a, A: Automaton> {
    automata: &'a BTreeMap<ProcessId, A>,
    pattern: &'a FailurePattern,
    procs: Vec<ProcessId>,
    states: BTreeMap<ProcessId, ProcState<A>>,
    oracles: BTreeMap<SanctuaryId, OracleInstance>,
    events: Vec<Event>,
    decisions: BTreeMap<ProcessId, (TimeStep, Value)>,
    clock: TimeStep,
    budget: u64,
    prefix_len: usize,
}

/// Produce an asynchronous run of `setup.automata` under `setup.scheduler`.
pub fn run_async<A: Automaton>(setup: RunSetup<'_, A>) -> Result<Run, RunError> {
    let mut engine = Engine::new(&setup)?;
    engine.replay_prefix(setup.prefix)?;
    let outcome = match &setup.scheduler {
        Scheduler::Seeded { seed } => engine.drive_seeded(*seed)?,
        Scheduler::FairExtension { queue } => engine.drive_fair(queue)?,
        Scheduler::Scripted { actions } => engine.drive_scripted(actions)?,
    };
    Ok(engine.into_run(&setup, outcome))
}

impl<'a, A: Automaton> Engine<'a, A> {
    fn new(setup: &RunSetup<'a, A>) -> Result<Self, RunError> {
        let procs: Vec<ProcessId> = setup.automata.keys().copied().collect();
        let mut states = BTreeMap::new();
        for &p in &procs {
            let input = setup.inputs.get(p).ok_or(RunError::MissingInput(p))?;
            let automaton = setup.automata.get(&p).ok_or(RunError::MissingAutomaton(p))?;
            states.insert(
                p,
                ProcState {
                    state: automaton.initial(input),
                    mailbox: VecDeque::new(),
                    lock: None,
                },
            );
        }
        let algset = setup.inputs.processes();
        let mut oracles = BTreeMap::new();
        for sanctuary in setup.sanctuaries {
            let restricted =
                crate::oracle::restrict_failure_pattern(setup.pattern, sanctuary, &algset)?;
            oracles.insert(
                sanctuary.id().clone(),
                OracleInstance::new(sanctuary.clone(), restricted, setup.strategy.clone()),
            );
        }
        let budget = if setup.budget == 0 {
            DEFAULT_BUDGET
        } else {
            setup.budget
        };
        Ok(Engine {
            automata: setup.automata,
            pattern: setup.pattern,
            procs,
            states,
            oracles,
            events: Vec::new(),
            decisions: BTreeMap::new(),
            clock: 0,
            budget,
            prefix_len: 0,
        })
    }

    fn automaton(&self, p: ProcessId) -> &A {
        self.automata.get(&p).expect("validated in new")
    }

    fn proc(&self, p: ProcessId) -> &ProcState<A> {
        self.states.get(&p).expect("validated in new")
    }

    fn proc_mut(&mut self, p: ProcessId) -> &mut ProcState<A> {
        self.states.get_mut(&p).expect("validated in new")
    }

    /// True if all of ticks `clock .. clock + ticks` fall before `p`'s
    /// crash time.
    fn alive_for(&self, p: ProcessId, ticks: u64) -> bool {
        match self.pattern.crash_time(p) {
            None => true,
            Some(c) => self.clock + ticks <= c,
        }
    }

    fn next_tick(&mut self) -> TimeStep {
        let t = self.clock;
        self.clock += 1;
        t
    }

    fn push_event(&mut self, loc: EventLoc, p: ProcessId, time: TimeStep, kind: EventKind) {
        self.events.push(Event {
            loc,
            process: p,
            time,
            kind,
        });
    }

    /// Apply a completed transition: update state, enqueue the send, and
    /// record a first decision stamped with the step's `[S]` tick.
    fn finish_step(
        &mut self,
        p: ProcessId,
        next: A::State,
        send: Option<Message>,
        s_tick: TimeStep,
    ) {
        if let Some(m) = &send {
            if let Some(dest) = self.states.get_mut(&m.dest) {
                dest.mailbox.push_back(m.body.clone());
            }
        }
        let decided = self.automaton(p).decision(&next);
        let st = self.proc_mut(p);
        st.state = next;
        if let Some(d) = decided {
            self.decisions.entry(p).or_insert((s_tick, d));
        }
    }

    // Enabledness predicates. A locked process can only answer; everyone else
    // can deliver (including halted processes, which drain their mailboxes)
    // or start a step when the automaton has one to take.

    fn can_answer(&self, p: ProcessId) -> bool {
        let st = self.proc(p);
        let Some(lock) = &st.lock else { return false };
        if !self.alive_for(p, 2) {
            return false;
        }
        self.oracles[&lock.sanctuary].answerable(p)
    }

    fn can_deliver(&self, p: ProcessId) -> bool {
        let st = self.proc(p);
        st.lock.is_none() && !st.mailbox.is_empty() && self.alive_for(p, 2)
    }

    fn can_start(&self, p: ProcessId) -> bool {
        let st = self.proc(p);
        if st.lock.is_some() {
            return false;
        }
        let automaton = self.automaton(p);
        if automaton.is_halted(&st.state) {
            return false;
        }
        if automaton.query(&st.state).is_some() {
            return self.alive_for(p, 1);
        }
        // A receive-free internal step is only taken when it is productive:
        // it changes state, sends a message, or decides.
        if !self.alive_for(p, 1) {
            return false;
        }
        let tr = automaton.transition(&st.state, None, None);
        tr.send.is_some() || tr.next != st.state
    }

    fn do_start(&mut self, p: ProcessId) -> Result<(), RunError> {
        let state = self.proc(p).state.clone();
        if let Some(spec) = self.automaton(p).query(&state) {
            let t = self.next_tick();
            self.oracles
                .get_mut(&spec.sanctuary)
                .ok_or_else(|| RunError::UnknownSanctuary {
                    process: p,
                    sanctuary: spec.sanctuary.clone(),
                })?
                .record_query(p, t, spec.value)?;
            self.push_event(
                EventLoc::Sanctuary(spec.sanctuary.clone()),
                p,
                t,
                EventKind::Query(spec.value),
            );
            self.proc_mut(p).lock = Some(LockInfo {
                sanctuary: spec.sanctuary,
                consumed: None,
            });
        } else {
            let tr = self.automaton(p).transition(&state, None, None);
            let t = self.next_tick();
            self.push_event(EventLoc::Buffer, p, t, EventKind::Send(tr.send.clone()));
            self.finish_step(p, tr.next, tr.send, t);
        }
        Ok(())
    }

    fn do_deliver(&mut self, p: ProcessId, index: usize) -> Result<(), RunError> {
        let body = self
            .proc_mut(p)
            .mailbox
            .remove(index)
            .expect("caller checked index");
        let t = self.next_tick();
        self.push_event(
            EventLoc::Buffer,
            p,
            t,
            EventKind::Receive(Message {
                dest: p,
                body: body.clone(),
            }),
        );
        let state = self.proc(p).state.clone();
        if let Some(spec) = self.automaton(p).query(&state) {
            let qt = self.next_tick();
            self.oracles
                .get_mut(&spec.sanctuary)
                .ok_or_else(|| RunError::UnknownSanctuary {
                    process: p,
                    sanctuary: spec.sanctuary.clone(),
                })?
                .record_query(p, qt, spec.value)?;
            self.push_event(
                EventLoc::Sanctuary(spec.sanctuary.clone()),
                p,
                qt,
                EventKind::Query(spec.value),
            );
            self.proc_mut(p).lock = Some(LockInfo {
                sanctuary: spec.sanctuary,
                consumed: Some(body),
            });
        } else {
            let tr = self.automaton(p).transition(&state, Some(&body), None);
            let st = self.next_tick();
            self.push_event(EventLoc::Buffer, p, st, EventKind::Send(tr.send.clone()));
            self.finish_step(p, tr.next, tr.send, st);
        }
        Ok(())
    }

    fn do_answer(&mut self, p: ProcessId, dictated: Option<Value>) -> Result<(), RunError> {
        let lock = self
            .proc_mut(p)
            .lock
            .take()
            .expect("caller checked lock");
        let t = self.next_tick();
        let oracle = self
            .oracles
            .get_mut(&lock.sanctuary)
            .expect("sanctuary known");
        let d = match dictated {
            None => oracle.record_answer(p, t)?,
            Some(v) => {
                oracle.record_answer_value(p, t, v)?;
                v
            }
        };
        self.push_event(
            EventLoc::Sanctuary(lock.sanctuary.clone()),
            p,
            t,
            EventKind::Answer(d),
        );
        let state = self.proc(p).state.clone();
        let tr = self
            .automaton(p)
            .transition(&state, lock.consumed.as_ref(), Some(d));
        let st = self.next_tick();
        self.push_event(EventLoc::Buffer, p, st, EventKind::Send(tr.send.clone()));
        self.finish_step(p, tr.next, tr.send, st);
        Ok(())
    }

    fn apply(&mut self, action: &Action) -> Result<(), RunError> {
        match action {
            Action::StartStep { process } => self.do_start(*process),
            Action::Deliver { process, index } => self.do_deliver(*process, *index),
            Action::Answer { process, value } => self.do_answer(*process, *value),
        }
    }

    fn budget_left(&self) -> bool {
        (self.events.len() - self.prefix_len) < self.budget as usize
    }

    /// Classify a fixpoint: if any correct process is still locked the run
    /// is deadlocked (the sanctuary owes answers it will never give under
    /// the current answer strategy); otherwise it is quiescent.
    fn classify_fixpoint(&self) -> RunOutcome {
        let mut locked = Vec::new();
        for &p in &self.procs {
            if self.pattern.is_faulty(p) {
                continue;
            }
            if let Some(lock) = &self.proc(p).lock {
                locked.push((p, lock.sanctuary.clone()));
            }
        }
        if locked.is_empty() {
            return RunOutcome::Quiescent;
        }
        let mut obligations = Vec::new();
        for (sid, oracle) in &self.oracles {
            for (k, p) in oracle.obligations() {
                obligations.push((sid.clone(), k, p));
            }
        }
        RunOutcome::Deadlock {
            locked,
            obligations,
        }
    }

    fn drive_seeded(&mut self, seed: u64) -> Result<RunOutcome, RunError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            if !self.budget_left() {
                return Ok(RunOutcome::BudgetExhausted);
            }
            let mut capable: Vec<(ProcessId, bool, bool, bool)> = Vec::new();
            for &p in &self.procs {
                let answer = self.can_answer(p);
                let deliver = self.can_deliver(p);
                let start = self.can_start(p);
                if answer || deliver || start {
                    capable.push((p, answer, deliver, start));
                }
            }
            if capable.is_empty() {
                return Ok(self.classify_fixpoint());
            }
            let (p, answer, deliver, start) = capable[rng.gen_range(0..capable.len())];
            let mut options: Vec<Action> = Vec::with_capacity(3);
            if answer {
                options.push(Action::Answer {
                    process: p,
                    value: None,
                });
            }
            if deliver {
                let len = self.proc(p).mailbox.len();
                options.push(Action::Deliver {
                    process: p,
                    index: rng.gen_range(0..len),
                });
            }
            if start {
                options.push(Action::StartStep { process: p });
            }
            let action = options[rng.gen_range(0..options.len())].clone();
            self.apply(&action)?;
        }
    }

    /// The fair scheduler's service rule for one process, or `None` if the
    /// process has nothing useful to do right now.
    fn fair_action(&self, p: ProcessId) -> Option<Action> {
        let st = self.proc(p);
        if let Some(lock) = &st.lock {
            if !self.alive_for(p, 2) {
                return None;
            }
            let oracle = &self.oracles[&lock.sanctuary];
            let k = oracle.pending(p)?;
            let value = match oracle.committed(k) {
                Some(c) => Some(c),
                None => {
                    let queries = oracle.consultation_queries(k);
                    match oracle.sanctuary().task().problem().kind() {
                        // Once every consultant has queried, the smallest
                        // query value is a legal answer for atomic
                        // commitment: all-1 queries make 1 legal (and 0 too
                        // when a consultant is faulty), and any 0 among the
                        // queries makes 0 legal.
                        ProblemKind::AtomicCommitment
                            if queries.len() == oracle.sanctuary().consultants().len() =>
                        {
                            queries.values().copied().min()
                        }
                        // A consultant's own query value is always a legal
                        // consensus answer.
                        ProblemKind::Consensus => queries.get(&p).copied(),
                        _ => None,
                    }
                }
            };
            return value.map(|v| Action::Answer {
                process: p,
                value: Some(v),
            });
        }
        let automaton = self.automaton(p);
        if automaton.is_halted(&st.state) {
            if !st.mailbox.is_empty() && self.alive_for(p, 2) {
                return Some(Action::Deliver {
                    process: p,
                    index: 0,
                });
            }
            return None;
        }
        // Internal work first: a process about to query or with productive
        // receive-free steps left (draining its own broadcasts, say) takes
        // those before consuming more messages. Deliveries come last, so a
        // message raced by the process's own progress stays parked until
        // the process genuinely waits on its mailbox.
        if self.can_start(p) {
            return Some(Action::StartStep { process: p });
        }
        if !st.mailbox.is_empty() && self.alive_for(p, 2) {
            return Some(Action::Deliver {
                process: p,
                index: 0,
            });
        }
        None
    }

    fn drive_fair(&mut self, queue: &[ProcessId]) -> Result<RunOutcome, RunError> {
        let mut queue: VecDeque<ProcessId> = if queue.is_empty() {
            self.procs.iter().copied().collect()
        } else {
            queue.iter().copied().collect()
        };
        let mut idle = 0usize;
        loop {
            if !self.budget_left() {
                return Ok(RunOutcome::BudgetExhausted);
            }
            if queue.is_empty() || idle >= queue.len() {
                return Ok(self.classify_fixpoint());
            }
            let p = queue.pop_front().expect("checked nonempty");
            queue.push_back(p);
            match self.fair_action(p) {
                Some(action) => {
                    self.apply(&action)?;
                    idle = 0;
                }
                None => idle += 1,
            }
        }
    }

    fn drive_scripted(&mut self, actions: &[Action]) -> Result<RunOutcome, RunError> {
        for (index, action) in actions.iter().enumerate() {
            if !self.budget_left() {
                return Ok(RunOutcome::BudgetExhausted);
            }
            let stuck = |detail: String| RunError::ScriptStuck { index, detail };
            match action {
                Action::StartStep { process } => {
                    if !self.can_start(*process) {
                        return Err(stuck(format!("{process} cannot start a step")));
                    }
                }
                Action::Deliver { process, index: i } => {
                    if !self.can_deliver(*process) {
                        return Err(stuck(format!("{process} cannot receive")));
                    }
                    let len = self.proc(*process).mailbox.len();
                    if *i >= len {
                        return Err(stuck(format!(
                            "{process} mailbox has {len} messages, index {i} out of range"
                        )));
                    }
                }
                Action::Answer { process, .. } => {
                    if self.proc(*process).lock.is_none() {
                        return Err(stuck(format!("{process} holds no pending query")));
                    }
                    if !self.alive_for(*process, 2) {
                        return Err(stuck(format!("{process} crashes before it could answer")));
                    }
                }
            }
            self.apply(action)?;
        }
        // The script ran out. If anything is still enabled the run was
        // truncated by the script, which we report like an exhausted budget;
        // otherwise classify the fixpoint as usual.
        let any_enabled = self
            .procs
            .iter()
            .any(|&p| self.can_answer(p) || self.can_deliver(p) || self.can_start(p));
        if any_enabled {
            Ok(RunOutcome::BudgetExhausted)
        } else {
            Ok(self.classify_fixpoint())
        }
    }

    /// Replay an action-aligned event prefix, rebuilding process states,
    /// mailboxes, locks, and oracle bookkeeping, and validating each send
    /// against the automata.
    fn replay_prefix(&mut self, prefix: &[Event]) -> Result<(), RunError> {
        if prefix.is_empty() {
            return Ok(());
        }
        let mismatch = |index: usize, detail: String| RunError::PrefixMismatch { index, detail };
        let mut pending: BTreeMap<ProcessId, PendingStep> = BTreeMap::new();
        for (index, event) in prefix.iter().enumerate() {
            let p = event.process;
            if !self.states.contains_key(&p) {
                return Err(mismatch(index, format!("unknown process {p}")));
            }
            let entry = pending.entry(p).or_default();
            match &event.kind {
                EventKind::Receive(msg) => {
                    if !entry.is_empty() {
                        return Err(mismatch(index, format!("{p} receives mid-step")));
                    }
                    if msg.dest != p {
                        return Err(mismatch(
                            index,
                            format!("{p} receives a message addressed to {}", msg.dest),
                        ));
                    }
                    let st = self.proc_mut(p);
                    let Some(pos) = st.mailbox.iter().position(|b| *b == msg.body) else {
                        return Err(mismatch(
                            index,
                            format!("{p} receives {} which is not in transit", msg.body),
                        ));
                    };
                    let body = st.mailbox.remove(pos).expect("position found");
                    entry.received = Some(body);
                }
                EventKind::Query(v) => {
                    if entry.queried || entry.answer.is_some() {
                        return Err(mismatch(index, format!("{p} queries twice in one step")));
                    }
                    let state = self.proc(p).state.clone();
                    let Some(spec) = self.automaton(p).query(&state) else {
                        return Err(mismatch(
                            index,
                            format!("{p} queries but its state does not"),
                        ));
                    };
                    let EventLoc::Sanctuary(sid) = &event.loc else {
                        return Err(mismatch(index, "query outside a sanctuary".into()));
                    };
                    if spec.sanctuary != *sid || spec.value != *v {
                        return Err(mismatch(
                            index,
                            format!(
                                "{p} queries {sid} with {v}, state calls for {} with {}",
                                spec.sanctuary, spec.value
                            ),
                        ));
                    }
                    self.oracles
                        .get_mut(sid)
                        .ok_or_else(|| mismatch(index, format!("unknown sanctuary {sid}")))?
                        .record_query(p, event.time, *v)?;
                    self.proc_mut(p).lock = Some(LockInfo {
                        sanctuary: sid.clone(),
                        consumed: entry.received.clone(),
                    });
                    entry.queried = true;
                }
                EventKind::Answer(v) => {
                    if !entry.queried && self.proc(p).lock.is_none() {
                        return Err(mismatch(index, format!("{p} answers without a query")));
                    }
                    let EventLoc::Sanctuary(sid) = &event.loc else {
                        return Err(mismatch(index, "answer outside a sanctuary".into()));
                    };
                    self.oracles
                        .get_mut(sid)
                        .ok_or_else(|| mismatch(index, format!("unknown sanctuary {sid}")))?
                        .record_answer_value(p, event.time, *v)?;
                    entry.answer = Some(*v);
                }
                EventKind::Send(sent) => {
                    if entry.queried && entry.answer.is_none() {
                        return Err(mismatch(
                            index,
                            format!("{p} closes a step with an unanswered query"),
                        ));
                    }
                    let consumed = match self.proc(p).lock.clone() {
                        Some(lock) if entry.answer.is_some() => lock.consumed,
                        _ => entry.received.clone(),
                    };
                    let state = self.proc(p).state.clone();
                    let tr =
                        self.automaton(p)
                            .transition(&state, consumed.as_ref(), entry.answer);
                    if tr.send != *sent {
                        let got = match sent {
                            Some(m) => m.to_string(),
                            None => "nothing".into(),
                        };
                        return Err(mismatch(
                            index,
                            format!("{p} sends {got}, its automaton disagrees"),
                        ));
                    }
                    self.proc_mut(p).lock = None;
                    self.finish_step(p, tr.next, tr.send, event.time);
                    pending.remove(&p);
                }
            }
        }
        // The only partial step a prefix may leave behind is a pending
        // query: the lock carries it into the continuation. A held receive
        // or an unclosed answer means the cut fell inside an action.
        for (p, entry) in &pending {
            if entry.answer.is_some() || (entry.received.is_some() && !entry.queried) {
                return Err(mismatch(
                    prefix.len() - 1,
                    format!("prefix cuts {p} mid-action"),
                ));
            }
        }
        self.events.extend_from_slice(prefix);
        self.prefix_len = self.events.len();
        self.clock = prefix.iter().map(|e| e.time).max().unwrap_or(0) + 1;
        Ok(())
    }

    fn into_run(self, setup: &RunSetup<'_, A>, outcome: RunOutcome) -> Run {
        Run {
            mode: RunMode::Async,
            processes: setup.inputs.processes(),
            pattern: setup.pattern.clone(),
            inputs: setup.inputs.clone(),
            events: self.events,
            outcome,
            decisions: self.decisions,
        }
    }
}
