//! Structural run checker for asynchronous histories.
//!
//! A run is judged against six independent rules. Each rule has its own
//! jurisdiction and its own verdict, so a deliberately broken run trips
//! exactly the rule whose concern was violated:
//!
//! * **R1, sanctuary behavior**: every sanctuary's projected history
//!   satisfies the oracle laws (well-formedness, compatibility with the
//!   failure pattern, per-consultation agreement, validity, the echo and
//!   unanimity guarantees, and, for quiescent runs, resilience).
//! * **R2, history shape**: global event times never decrease, no process
//!   has an event at or past its crash time, and each process's own history
//!   parses into steps `[S]`, `[R,S]`, `[Q,A,S]`, `[R,Q,A,S]`, with only a
//!   trailing `R`, `Q`, or `R,Q` left incomplete.
//! * **R3, receive provenance**: every receipt consumes a message that was
//!   previously sent to that very process and not consumed before.
//! * **R4, step legality**: replaying each process's automaton over its
//!   parsed steps reproduces the observed queries and sends.
//! * **R5, no premature stop**: a correct process may stop only when its
//!   state neither queries nor has a productive receive-free step left.
//!   A process waiting on an unanswered query is locked, not stopped.
//! * **R6, eventual delivery**: no message addressed to a correct process
//!   (halted ones included) is left undelivered.
//!
//! R5, R6, and R1's resilience clause are liveness judgments: on truncated
//! runs (outcome other than quiescent) they return [`Verdict::Flagged`]
//! instead of a pass or fail.
//!
//! # Invariants
//!
//! * Damage confinement: each rule inspects only its own concern. R3 does
//!   not re-judge step shapes, R4 follows the observed answers rather than
//!   second-guessing the sanctuary, R5 ignores undelivered messages, and R6
//!   counts only positive send-minus-receive balances.
//! * Equal timestamps are accepted everywhere; only a strict decrease
//!   violates R2.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::oracle::{check_oracle_laws, restrict_failure_pattern, OracleLawViolation, Sanctuary};
use crate::runtime::automaton::Automaton;
use crate::runtime::{sanctuary_projection, Event, EventKind, EventLoc, Run};
use crate::task::ProcessId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
}

impl RuleId {
    pub const ALL: [RuleId; 6] = [
        RuleId::R1,
        RuleId::R2,
        RuleId::R3,
        RuleId::R4,
        RuleId::R5,
        RuleId::R6,
    ];
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleId::R1 => "R1",
            RuleId::R2 => "R2",
            RuleId::R3 => "R3",
            RuleId::R4 => "R4",
            RuleId::R5 => "R5",
            RuleId::R6 => "R6",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// The rule could not be concluded because the run is truncated.
    Flagged,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleFinding {
    pub rule: RuleId,
    pub verdict: Verdict,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    /// One finding per checked rule, in rule order.
    pub findings: Vec<RuleFinding>,
    /// R1's underlying oracle-law violations, for law-level accounting.
    pub law_violations: Vec<OracleLawViolation>,
}

impl CheckReport {
    pub fn verdict(&self, rule: RuleId) -> Option<Verdict> {
        self.findings
            .iter()
            .find(|f| f.rule == rule)
            .map(|f| f.verdict)
    }

    /// All checked rules passed outright.
    pub fn passed(&self) -> bool {
        self.findings.iter().all(|f| f.verdict == Verdict::Pass)
    }

    /// No rule failed (flagged liveness verdicts are tolerated).
    pub fn no_failures(&self) -> bool {
        self.findings.iter().all(|f| f.verdict != Verdict::Fail)
    }

    pub fn failed_rules(&self) -> Vec<RuleId> {
        self.findings
            .iter()
            .filter(|f| f.verdict == Verdict::Fail)
            .map(|f| f.rule)
            .collect()
    }

    pub fn flagged_rules(&self) -> Vec<RuleId> {
        self.findings
            .iter()
            .filter(|f| f.verdict == Verdict::Flagged)
            .map(|f| f.rule)
            .collect()
    }
}

/// Check all six rules.
pub fn check_run<A: Automaton>(
    run: &Run,
    automata: &BTreeMap<ProcessId, A>,
    sanctuaries: &[Sanctuary],
) -> CheckReport {
    check_rules(run, automata, sanctuaries, &RuleId::ALL)
}

/// Check a chosen subset of rules (always reported in rule order).
pub fn check_rules<A: Automaton>(
    run: &Run,
    automata: &BTreeMap<ProcessId, A>,
    sanctuaries: &[Sanctuary],
    rules: &[RuleId],
) -> CheckReport {
    let wanted: BTreeSet<RuleId> = rules.iter().copied().collect();
    let mut findings = Vec::new();
    let mut law_violations = Vec::new();
    for rule in RuleId::ALL {
        if !wanted.contains(&rule) {
            continue;
        }
        let finding = match rule {
            RuleId::R1 => check_r1(run, sanctuaries, &mut law_violations),
            RuleId::R2 => check_r2(run),
            RuleId::R3 => check_r3(run),
            RuleId::R4 => check_r4(run, automata),
            RuleId::R5 => check_r5(run, automata),
            RuleId::R6 => check_r6(run),
        };
        findings.push(finding);
    }
    CheckReport {
        findings,
        law_violations,
    }
}

fn finding(rule: RuleId, details: Vec<String>, truncated_liveness: bool) -> RuleFinding {
    let verdict = if !details.is_empty() {
        Verdict::Fail
    } else if truncated_liveness {
        Verdict::Flagged
    } else {
        Verdict::Pass
    };
    RuleFinding {
        rule,
        verdict,
        details,
    }
}

// R1: project each sanctuary's history and re-derive the oracle laws from
// scratch. The resilience law is liveness, so it only counts on quiescent
// runs; everything else is judged on any run.
fn check_r1(
    run: &Run,
    sanctuaries: &[Sanctuary],
    law_violations: &mut Vec<OracleLawViolation>,
) -> RuleFinding {
    let complete = run.outcome.is_quiescent();
    let mut details = Vec::new();
    let mut seen: BTreeSet<&crate::oracle::SanctuaryId> = BTreeSet::new();
    for event in &run.events {
        if let Some(id) = event.sanctuary() {
            seen.insert(id);
        }
    }
    for id in seen {
        let Some(sanctuary) = sanctuaries.iter().find(|s| s.id() == id) else {
            details.push(format!("events at unknown sanctuary {id}"));
            continue;
        };
        let projected = sanctuary_projection(&run.events, id);
        let restricted = match restrict_failure_pattern(&run.pattern, sanctuary, &run.processes) {
            Ok(r) => r,
            Err(err) => {
                details.push(format!("{id}: {err}"));
                continue;
            }
        };
        let violations = check_oracle_laws(&projected, sanctuary, &restricted, complete);
        for v in &violations {
            details.push(format!("{id}: {v}"));
        }
        law_violations.extend(violations);
    }
    // Sanctuary-located events must be queries or answers; buffer kinds at a
    // sanctuary are malformed history.
    for event in &run.events {
        if event.sanctuary().is_some()
            && matches!(event.kind, EventKind::Receive(_) | EventKind::Send(_))
        {
            details.push(format!(
                "buffer event of {} at time {} is located at sanctuary {}",
                event.process,
                event.time,
                event.loc
            ));
        }
    }
    finding(RuleId::R1, details, !complete)
}

/// One parsed step of a single process's history: indices into that
/// process's projection.
#[derive(Debug, Clone)]
pub(crate) struct Step<'a> {
    pub receive: Option<&'a Event>,
    pub query: Option<&'a Event>,
    pub answer: Option<&'a Event>,
    /// `None` for a trailing incomplete step.
    pub send: Option<&'a Event>,
}

impl Step<'_> {
    fn is_complete(&self) -> bool {
        self.send.is_some()
    }
}

/// Parse one process's events into steps. On a grammar violation, returns
/// the steps parsed so far plus an error description; the trailing partial
/// step (if legal) is included as an incomplete [`Step`].
pub(crate) fn parse_steps<'a>(events: &[&'a Event]) -> (Vec<Step<'a>>, Option<String>) {
    let mut steps = Vec::new();
    let mut cur = Step {
        receive: None,
        query: None,
        answer: None,
        send: None,
    };
    let fresh = Step {
        receive: None,
        query: None,
        answer: None,
        send: None,
    };
    for event in events {
        match &event.kind {
            EventKind::Receive(_) => {
                if cur.receive.is_some() || cur.query.is_some() || cur.answer.is_some() {
                    return (
                        steps,
                        Some(format!("receive at time {} is not step-initial", event.time)),
                    );
                }
                cur.receive = Some(event);
            }
            EventKind::Query(_) => {
                if cur.query.is_some() || cur.answer.is_some() {
                    return (
                        steps,
                        Some(format!("query at time {} repeats within a step", event.time)),
                    );
                }
                cur.query = Some(event);
            }
            EventKind::Answer(_) => {
                if cur.query.is_none() {
                    return (
                        steps,
                        Some(format!("answer at time {} has no query", event.time)),
                    );
                }
                if cur.answer.is_some() {
                    return (
                        steps,
                        Some(format!("answer at time {} repeats within a step", event.time)),
                    );
                }
                cur.answer = Some(event);
            }
            EventKind::Send(_) => {
                if cur.query.is_some() && cur.answer.is_none() {
                    return (
                        steps,
                        Some(format!(
                            "state change at time {} closes a step with an unanswered query",
                            event.time
                        )),
                    );
                }
                cur.send = Some(event);
                steps.push(cur);
                cur = fresh.clone();
            }
        }
    }
    if cur.answer.is_some() {
        // An answered query must complete its step; only R, Q, or R,Q may
        // trail.
        return (
            steps,
            Some("history ends on an answer without its state change".into()),
        );
    }
    if cur.receive.is_some() || cur.query.is_some() {
        steps.push(cur);
    }
    (steps, None)
}

// R2: time monotonicity, crash compatibility, and per-process step grammar.
fn check_r2(run: &Run) -> RuleFinding {
    let mut details = Vec::new();
    for pair in run.events.windows(2) {
        if pair[1].time < pair[0].time {
            details.push(format!(
                "history time decreases from {} to {}",
                pair[0].time, pair[1].time
            ));
        }
    }
    for event in &run.events {
        if !run.pattern.allows_event(event.process, event.time) {
            details.push(format!(
                "{} has an event at time {} at or past its crash",
                event.process, event.time
            ));
        }
    }
    for p in run.processes.iter() {
        let projection = run.process_projection(p);
        let (_, parse_error) = parse_steps(&projection);
        if let Some(err) = parse_error {
            details.push(format!("{p}: {err}"));
        }
    }
    finding(RuleId::R2, details, false)
}

// R3: every receive consumes a message previously sent to that process.
fn check_r3(run: &Run) -> RuleFinding {
    let mut details = Vec::new();
    let mut in_transit: BTreeMap<(ProcessId, &crate::runtime::MsgBody), u64> = BTreeMap::new();
    for event in &run.events {
        match &event.kind {
            EventKind::Send(Some(message)) => {
                *in_transit.entry((message.dest, &message.body)).or_insert(0) += 1;
            }
            EventKind::Receive(message) => {
                if message.dest != event.process {
                    details.push(format!(
                        "{} receives at time {} a message addressed to {}",
                        event.process, event.time, message.dest
                    ));
                    continue;
                }
                match in_transit.get_mut(&(message.dest, &message.body)) {
                    Some(count) if *count > 0 => *count -= 1,
                    _ => details.push(format!(
                        "{} receives {} at time {} but no such message is in transit",
                        event.process, message.body, event.time
                    )),
                }
            }
            _ => {}
        }
    }
    finding(RuleId::R3, details, false)
}

// R4: replay each automaton over its parsed steps; observed queries and
// sends must match what the automaton prescribes. After a divergence the
// replay keeps following the automaton, so one corrupted step yields one
// finding rather than a cascade of echoes.
fn check_r4<A: Automaton>(run: &Run, automata: &BTreeMap<ProcessId, A>) -> RuleFinding {
    let mut details = Vec::new();
    for p in run.processes.iter() {
        let Some(automaton) = automata.get(&p) else {
            details.push(format!("no automaton for {p}"));
            continue;
        };
        let Some(input) = run.inputs.get(p) else {
            details.push(format!("no input for {p}"));
            continue;
        };
        let projection = run.process_projection(p);
        // On a grammar violation, judge only the steps that parsed; R2 owns
        // the malformed tail.
        let (steps, _parse_error) = parse_steps(&projection);
        let mut state = automaton.initial(input);
        for step in &steps {
            let expected_query = automaton.query(&state);
            match (step.query, &expected_query) {
                (Some(q), Some(spec)) => {
                    let EventKind::Query(v) = &q.kind else { unreachable!("parser") };
                    let observed_loc = match &q.loc {
                        EventLoc::Sanctuary(id) => Some(id),
                        EventLoc::Buffer => None,
                    };
                    if observed_loc != Some(&spec.sanctuary) || *v != spec.value {
                        details.push(format!(
                            "{p} queries {} with {} at time {}, its state calls for {} with {}",
                            q.loc, v, q.time, spec.sanctuary, spec.value
                        ));
                    }
                }
                (Some(q), None) => {
                    details.push(format!(
                        "{p} queries at time {} but its state does not call for one",
                        q.time
                    ));
                }
                (None, Some(spec)) if step.is_complete() => {
                    details.push(format!(
                        "{p} takes a query-free step at time {} though its state calls for a {} query",
                        step.send.map(|e| e.time).unwrap_or_default(),
                        spec.sanctuary
                    ));
                }
                (None, _) => {}
            }
            let Some(send_event) = step.send else {
                // Trailing incomplete step: the query (if any) was judged
                // above; there is no transition yet.
                break;
            };
            let received = step.receive.map(|e| match &e.kind {
                EventKind::Receive(m) => &m.body,
                _ => unreachable!("parser"),
            });
            let answer = step.answer.map(|e| match &e.kind {
                EventKind::Answer(v) => *v,
                _ => unreachable!("parser"),
            });
            let transition = automaton.transition(&state, received, answer);
            let EventKind::Send(observed_send) = &send_event.kind else {
                unreachable!("parser")
            };
            if transition.send != *observed_send {
                let observed = observed_send
                    .as_ref()
                    .map(|m| m.to_string())
                    .unwrap_or_else(|| "nothing".into());
                let prescribed = transition
                    .send
                    .as_ref()
                    .map(|m| m.to_string())
                    .unwrap_or_else(|| "nothing".into());
                details.push(format!(
                    "{p} sends {observed} at time {}, its automaton prescribes {prescribed}",
                    send_event.time
                ));
            }
            state = transition.next;
        }
    }
    finding(RuleId::R4, details, false)
}

// R5: a correct process may stop only in a state with nothing left to do on
// its own: no query pending from the state, no productive receive-free
// step. A trailing unanswered query is a lock, not a stop; a trailing
// receive without its state change is a stop mid-step. Messages parked in
// the buffer are R6's concern, never R5's.
fn check_r5<A: Automaton>(run: &Run, automata: &BTreeMap<ProcessId, A>) -> RuleFinding {
    if !run.outcome.is_quiescent() {
        return finding(RuleId::R5, Vec::new(), true);
    }
    let mut details = Vec::new();
    for p in run.pattern.correct().iter() {
        let Some(automaton) = automata.get(&p) else {
            continue; // R4 reports the missing automaton.
        };
        let Some(input) = run.inputs.get(p) else {
            continue;
        };
        let projection = run.process_projection(p);
        let (steps, parse_error) = parse_steps(&projection);
        if parse_error.is_some() {
            continue; // R2 owns malformed histories.
        }
        if let Some(last) = steps.last() {
            if !last.is_complete() {
                if last.query.is_some() {
                    continue; // Locked on an unanswered query.
                }
                details.push(format!("{p} stops mid-step after a receive"));
                continue;
            }
        }
        // Replay to the final state, following observed answers.
        let mut state = automaton.initial(input);
        for step in &steps {
            let received = step.receive.map(|e| match &e.kind {
                EventKind::Receive(m) => &m.body,
                _ => unreachable!("parser"),
            });
            let answer = step.answer.map(|e| match &e.kind {
                EventKind::Answer(v) => *v,
                _ => unreachable!("parser"),
            });
            state = automaton.transition(&state, received, answer).next;
        }
        if automaton.query(&state).is_some() {
            details.push(format!("{p} stops while its state still calls for a query"));
            continue;
        }
        let transition = automaton.transition(&state, None, None);
        if transition.send.is_some() || transition.next != state {
            details.push(format!("{p} stops with a productive step remaining"));
        }
    }
    finding(RuleId::R5, details, false)
}

// R6: positive send-minus-receive balance to a correct destination means a
// message was never delivered. Faulty destinations are exempt; phantom
// receives (negative balance) are R3's finding, not R6's.
fn check_r6(run: &Run) -> RuleFinding {
    if !run.outcome.is_quiescent() {
        return finding(RuleId::R6, Vec::new(), true);
    }
    let mut details = Vec::new();
    let mut balance: BTreeMap<(ProcessId, &crate::runtime::MsgBody), i64> = BTreeMap::new();
    for event in &run.events {
        match &event.kind {
            EventKind::Send(Some(message)) => {
                *balance.entry((message.dest, &message.body)).or_insert(0) += 1;
            }
            EventKind::Receive(message) if message.dest == event.process => {
                *balance.entry((message.dest, &message.body)).or_insert(0) -= 1;
            }
            _ => {}
        }
    }
    for ((dest, body), count) in balance {
        if count > 0 && !run.pattern.is_faulty(dest) {
            details.push(format!(
                "{count} message(s) {body} to correct {dest} never delivered"
            ));
        }
    }
    finding(RuleId::R6, details, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{AnswerStrategy, Sanctuary, SanctuaryId};
    use crate::runtime::automaton::{QuerySpec, Transition};
    use crate::runtime::engine::{run_async, RunSetup, Scheduler};
    use crate::runtime::{Message, MsgBody, RunOutcome};
    use crate::task::{
        AgreementProblem, AgreementTask, FailurePattern, InputVector, ProcessSet, Value,
        ValueDomain,
    };

    /// Query the sanctuary once, then broadcast the answer to the other
    /// process and halt; a receiver halts on the broadcast. Exercises all
    /// four step shapes.
    #[derive(Clone)]
    struct AskTell {
        sanctuary: SanctuaryId,
        peer: ProcessId,
    }

    #[derive(Clone, PartialEq, Eq, Debug)]
    enum AskTellState {
        Ask(Value),
        Tell(Value),
        Done(Value),
    }

    impl Automaton for AskTell {
        type State = AskTellState;

        fn initial(&self, v: Value) -> AskTellState {
            AskTellState::Ask(v)
        }

        fn query(&self, s: &AskTellState) -> Option<QuerySpec> {
            match s {
                AskTellState::Ask(v) => Some(QuerySpec {
                    sanctuary: self.sanctuary.clone(),
                    value: *v,
                }),
                _ => None,
            }
        }

        fn transition(
            &self,
            s: &AskTellState,
            m: Option<&MsgBody>,
            d: Option<Value>,
        ) -> Transition<AskTellState> {
            match (s, m, d) {
                (AskTellState::Ask(_), _, Some(d)) => Transition::stay(AskTellState::Tell(d)),
                (AskTellState::Tell(d), None, None) => Transition::send(
                    AskTellState::Done(*d),
                    Message {
                        dest: self.peer,
                        body: MsgBody::Decision { value: *d },
                    },
                ),
                (AskTellState::Tell(d), Some(MsgBody::Decision { .. }), None) => {
                    // Absorb the peer's broadcast while still telling.
                    Transition::stay(AskTellState::Tell(*d))
                }
                (AskTellState::Done(d), _, None) => Transition::stay(AskTellState::Done(*d)),
                _ => Transition::stay(s.clone()),
            }
        }

        fn decision(&self, s: &AskTellState) -> Option<Value> {
            match s {
                AskTellState::Done(d) => Some(*d),
                _ => None,
            }
        }

        fn is_halted(&self, s: &AskTellState) -> bool {
            matches!(s, AskTellState::Done(_))
        }
    }

    struct Fixture {
        automata: BTreeMap<ProcessId, AskTell>,
        sanctuaries: Vec<Sanctuary>,
        pattern: FailurePattern,
        inputs: InputVector,
    }

    fn fixture() -> Fixture {
        let procs = ProcessSet::contiguous(2);
        let problem = AgreementProblem::consensus(procs.clone(), ValueDomain::binary())
            .expect("valid problem");
        let task = AgreementTask::new(problem, 1).expect("valid task");
        let sid = SanctuaryId::new("sigma").expect("valid id");
        let sanctuary = Sanctuary::new(sid.clone(), task);
        let automata = [
            (
                ProcessId(1),
                AskTell {
                    sanctuary: sid.clone(),
                    peer: ProcessId(2),
                },
            ),
            (
                ProcessId(2),
                AskTell {
                    sanctuary: sid,
                    peer: ProcessId(1),
                },
            ),
        ]
        .into_iter()
        .collect();
        Fixture {
            automata,
            sanctuaries: vec![sanctuary],
            pattern: FailurePattern::failure_free(procs.clone()).expect("valid"),
            inputs: InputVector::uniform(&procs, Value(1)),
        }
    }

    fn good_run(fx: &Fixture, seed: u64) -> Run {
        run_async(RunSetup {
            automata: &fx.automata,
            sanctuaries: &fx.sanctuaries,
            pattern: &fx.pattern,
            inputs: &fx.inputs,
            strategy: AnswerStrategy::default(),
            scheduler: Scheduler::Seeded { seed },
            budget: 0,
            prefix: &[],
        })
        .expect("run succeeds")
    }

    #[test]
    fn engine_output_passes_all_rules() {
        let fx = fixture();
        for seed in 0..25 {
            let run = good_run(&fx, seed);
            assert!(run.outcome.is_quiescent(), "seed {seed}");
            let report = check_run(&run, &fx.automata, &fx.sanctuaries);
            assert!(
                report.passed(),
                "seed {seed}: {:?}",
                report
                    .findings
                    .iter()
                    .filter(|f| f.verdict != Verdict::Pass)
                    .collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn decreasing_times_fail_r2_only() {
        let fx = fixture();
        let mut run = good_run(&fx, 3);
        // Find a [R, S] pair and push the S below the R.
        let i = run
            .events
            .windows(2)
            .position(|w| {
                w[0].process == w[1].process
                    && matches!(w[0].kind, EventKind::Receive(_))
                    && matches!(w[1].kind, EventKind::Send(_))
                    && w[1].time >= 2
            })
            .expect("some receive-then-send pair");
        run.events[i + 1].time = run.events[i].time - 1;
        let report = check_run(&run, &fx.automata, &fx.sanctuaries);
        assert_eq!(report.failed_rules(), vec![RuleId::R2]);
    }

    #[test]
    fn phantom_receive_fails_r3_only() {
        let fx = fixture();
        let mut run = good_run(&fx, 5);
        let last = run.events.last().expect("nonempty").time;
        run.events.push(Event {
            loc: EventLoc::Buffer,
            process: ProcessId(1),
            time: last + 1,
            kind: EventKind::Receive(Message {
                dest: ProcessId(1),
                body: MsgBody::Round {
                    from: ProcessId(2),
                    phase: crate::runtime::RoundPhase::Report,
                    value: None,
                    round: u32::MAX,
                },
            }),
        });
        run.events.push(Event {
            loc: EventLoc::Buffer,
            process: ProcessId(1),
            time: last + 2,
            kind: EventKind::Send(None),
        });
        let report = check_run(&run, &fx.automata, &fx.sanctuaries);
        // The ghost receive trips R3. The drain step itself is legal shape
        // (R2) and a halted self-loop (R4), and it only removes balance
        // (R6).
        assert_eq!(report.failed_rules(), vec![RuleId::R3]);
    }

    #[test]
    fn corrupted_send_fails_r4_only() {
        let fx = fixture();
        // Crash p2 early so p1's broadcast lands on a faulty destination:
        // corrupting it cannot trip R6 (faulty dest) or R3 (never received).
        let procs = ProcessSet::contiguous(2);
        let pattern = FailurePattern::new(procs.clone(), [(ProcessId(2), 4)].into_iter().collect())
            .expect("valid");
        let mut run = run_async(RunSetup {
            automata: &fx.automata,
            sanctuaries: &fx.sanctuaries,
            pattern: &pattern,
            inputs: &fx.inputs,
            strategy: AnswerStrategy::default(),
            scheduler: Scheduler::Seeded { seed: 9 },
            budget: 0,
            prefix: &[],
        })
        .expect("run succeeds");
        assert!(run.outcome.is_quiescent());
        assert!(
            !run.events
                .iter()
                .any(|e| e.process == ProcessId(2) && matches!(e.kind, EventKind::Receive(_))),
            "p2 crashed before any delivery could land"
        );
        let i = run
            .events
            .iter()
            .position(|e| {
                e.process == ProcessId(1)
                    && matches!(&e.kind, EventKind::Send(Some(m)) if m.dest == ProcessId(2))
            })
            .expect("broadcast present");
        run.events[i].kind = EventKind::Send(Some(Message {
            dest: ProcessId(2),
            body: MsgBody::Decision { value: Value(0) },
        }));
        let report = check_run(&run, &fx.automata, &fx.sanctuaries);
        assert_eq!(report.failed_rules(), vec![RuleId::R4]);
    }

    #[test]
    fn truncated_runs_flag_liveness_rules() {
        let fx = fixture();
        let mut run = good_run(&fx, 2);
        // Pretend the budget ran out at a point where messages are parked.
        let cut = run
            .events
            .iter()
            .position(|e| matches!(e.kind, EventKind::Receive(_)))
            .unwrap_or(run.events.len());
        run.events.truncate(cut);
        run.outcome = RunOutcome::BudgetExhausted;
        run.decisions.clear();
        let report = check_run(&run, &fx.automata, &fx.sanctuaries);
        assert!(report.no_failures());
        let flagged = report.flagged_rules();
        assert!(flagged.contains(&RuleId::R1));
        assert!(flagged.contains(&RuleId::R5));
        assert!(flagged.contains(&RuleId::R6));
    }

    #[test]
    fn undelivered_message_to_correct_process_fails_r6_only() {
        let fx = fixture();
        let mut run = good_run(&fx, 7);
        // Delete a complete [R, S] drain step of a halted process.
        let i = run
            .events
            .windows(2)
            .position(|w| {
                w[0].process == w[1].process
                    && matches!(w[0].kind, EventKind::Receive(_))
                    && matches!(w[1].kind, EventKind::Send(None))
            })
            .expect("drain step exists");
        run.events.drain(i..=i + 1);
        let report = check_run(&run, &fx.automata, &fx.sanctuaries);
        assert_eq!(report.failed_rules(), vec![RuleId::R6]);
    }

    #[test]
    fn unknown_sanctuary_fails_r1() {
        let fx = fixture();
        let run = good_run(&fx, 11);
        let report = check_run(&run, &fx.automata, &[]);
        assert!(report.failed_rules().contains(&RuleId::R1));
    }
}
