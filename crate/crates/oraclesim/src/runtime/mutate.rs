//! Targeted corruptions of legal runs, one per run rule.
//!
//! Each mutation takes a quiescent, rule-clean run and damages it so that
//! exactly one rule fails: the damage is placed where no other rule looks.
//! That is what makes the checker's findings trustworthy: if a corruption
//! tripped two rules at once, a failing rule would say little about what is
//! actually wrong with a trace. The placement arguments, per kind:
//!
//! * [`MutationKind::DropAnswer`]: removing a correct consultant's answer
//!   (and the step that carried it) leaves a legally pending query, so the
//!   grammar, feasibility, and quiescence rules all still pass; only the
//!   sanctuary's obligation to answer survivors is broken.
//! * [`MutationKind::ReorderTimes`]: lowering the closing send of one step
//!   below its opening event breaks timestamp order without touching any
//!   process's state sequence or the message accounting.
//! * [`MutationKind::GhostReceive`]: a receipt of a message nobody sent is
//!   appended to a halted process, whose self-loop absorbs anything, so the
//!   step is feasible and quiescence undisturbed; only send matching fails.
//! * [`MutationKind::CorruptSend`]: rewriting the payload of a message to a
//!   crashed process that never received it diverges from the automaton's
//!   prescribed send, while delivery accounting stays balanced because
//!   undelivered mail to the faulty is exempt.
//! * [`MutationKind::PrematureStop`]: deleting a process's final pure step
//!   leaves it in a state with work remaining but nothing pending, which is
//!   precisely the stopped-too-early condition and nothing else.
//! * [`MutationKind::DropDelivery`]: deleting one drain of an already halted
//!   process leaves a sent message undelivered to a correct destination;
//!   the halted self-loop makes every later step replay identically.
//! * [`MutationKind::PostCrashEvent`]: pulling a faulty process's crash time
//!   back onto its last buffer event makes that event post-crash. The
//!   sanctuary projection is untouched, so this also lands on the
//!   compatibility rule, giving it a second independent probe.
//!
//! Mutations pick the first eligible site in process order and return `None`
//! when a run offers none, so sweeps over trace pools stay deterministic.

use std::collections::BTreeMap;

use crate::runtime::automaton::Automaton;
use crate::runtime::check::{parse_steps, RuleId, Step};
use crate::runtime::{Event, EventKind, EventLoc, Message, MsgBody, RoundPhase, Run};
use crate::task::{FailurePattern, ProcessId, TimeStep, Value};

/// The catalogue of rule-targeted corruptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MutationKind {
    /// Delete a correct process's final answer and the step it closed.
    DropAnswer,
    /// Lower a step's closing send below the step's opening event.
    ReorderTimes,
    /// Append a receipt of a never-sent message to a halted process.
    GhostReceive,
    /// Rewrite an undelivered payload bound for a crashed process.
    CorruptSend,
    /// Delete a process's final pure step, stopping it with work left.
    PrematureStop,
    /// Delete one delivery to an already halted correct process.
    DropDelivery,
    /// Pull a crash time back onto the victim's last buffer event.
    PostCrashEvent,
}

impl MutationKind {
    /// The six corruptions covering the rules one-to-one.
    pub const CORE: [MutationKind; 6] = [
        MutationKind::DropAnswer,
        MutationKind::ReorderTimes,
        MutationKind::GhostReceive,
        MutationKind::CorruptSend,
        MutationKind::PrematureStop,
        MutationKind::DropDelivery,
    ];

    pub const ALL: [MutationKind; 7] = [
        MutationKind::DropAnswer,
        MutationKind::ReorderTimes,
        MutationKind::GhostReceive,
        MutationKind::CorruptSend,
        MutationKind::PrematureStop,
        MutationKind::DropDelivery,
        MutationKind::PostCrashEvent,
    ];

    /// The one rule this corruption is built to trip.
    pub fn target_rule(self) -> RuleId {
        match self {
            MutationKind::DropAnswer => RuleId::R1,
            MutationKind::ReorderTimes => RuleId::R2,
            MutationKind::GhostReceive => RuleId::R3,
            MutationKind::CorruptSend => RuleId::R4,
            MutationKind::PrematureStop => RuleId::R5,
            MutationKind::DropDelivery => RuleId::R6,
            MutationKind::PostCrashEvent => RuleId::R2,
        }
    }
}

impl std::fmt::Display for MutationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MutationKind::DropAnswer => "drop_answer",
            MutationKind::ReorderTimes => "reorder_times",
            MutationKind::GhostReceive => "ghost_receive",
            MutationKind::CorruptSend => "corrupt_send",
            MutationKind::PrematureStop => "premature_stop",
            MutationKind::DropDelivery => "drop_delivery",
            MutationKind::PostCrashEvent => "post_crash_event",
        };
        f.write_str(s)
    }
}

/// Apply `kind` to the first eligible site of `run`, or `None` if the run
/// offers no such site. The automata are needed to locate states (halted
/// tails, final steps) without trusting the damaged trace itself.
pub fn apply_mutation<A: Automaton>(
    run: &Run,
    automata: &BTreeMap<ProcessId, A>,
    kind: MutationKind,
) -> Option<Run> {
    match kind {
        MutationKind::DropAnswer => drop_answer(run),
        MutationKind::ReorderTimes => reorder_times(run),
        MutationKind::GhostReceive => ghost_receive(run, automata),
        MutationKind::CorruptSend => corrupt_send(run),
        MutationKind::PrematureStop => premature_stop(run, automata),
        MutationKind::DropDelivery => drop_delivery(run, automata),
        MutationKind::PostCrashEvent => post_crash_event(run),
    }
}

/// Global index of the event at `time`. Generated runs occupy one event per
/// tick, so a timestamp identifies its event.
fn index_at(run: &Run, time: TimeStep) -> Option<usize> {
    run.events.iter().position(|e| e.time == time)
}

fn parsed_steps<'a>(events: &[&'a Event]) -> Option<Vec<Step<'a>>> {
    let (steps, err) = parse_steps(events);
    if err.is_some() {
        return None;
    }
    Some(steps)
}

/// States before each step (index `i` is the state step `i` starts from),
/// plus the final state at the end.
fn step_states<A: Automaton>(a: &A, input: Value, steps: &[Step<'_>]) -> Vec<A::State> {
    let mut states = vec![a.initial(input)];
    for step in steps {
        let current = states.last().expect("nonempty");
        let m = step.receive.map(|e| match &e.kind {
            EventKind::Receive(msg) => &msg.body,
            _ => unreachable!("receive slot holds a receive event"),
        });
        let d = step.answer.map(|e| match e.kind {
            EventKind::Answer(v) => v,
            _ => unreachable!("answer slot holds an answer event"),
        });
        let tr = a.transition(current, m, d);
        states.push(tr.next);
    }
    states
}

fn drop_answer(run: &Run) -> Option<Run> {
    for p in run.pattern.correct().iter() {
        let proj = run.process_projection(p);
        let Some(steps) = parsed_steps(&proj) else {
            continue;
        };
        let Some(last) = steps.last() else { continue };
        // Only a final consulting step will do: dropping its answer and send
        // leaves the query legally pending.
        let (Some(answer), Some(send)) = (last.answer, last.send) else {
            continue;
        };
        if last.query.is_none() {
            continue;
        }
        let ai = index_at(run, answer.time)?;
        let si = index_at(run, send.time)?;
        let mut mutated = run.clone();
        let (lo, hi) = (ai.min(si), ai.max(si));
        mutated.events.remove(hi);
        mutated.events.remove(lo);
        mutated.decisions.remove(&p);
        return Some(mutated);
    }
    None
}

fn reorder_times(run: &Run) -> Option<Run> {
    for p in run.processes.iter() {
        let proj = run.process_projection(p);
        let Some(steps) = parsed_steps(&proj) else {
            continue;
        };
        for step in &steps {
            let Some(send) = step.send else { continue };
            // The event right before the send in the same step; only buffer
            // sends are lowered so sanctuary histories keep their times.
            let prev = step.answer.or(step.receive);
            let Some(prev) = prev else { continue };
            if prev.time == 0 {
                continue;
            }
            let si = index_at(run, send.time)?;
            let mut mutated = run.clone();
            mutated.events[si].time = prev.time - 1;
            return Some(mutated);
        }
    }
    None
}

fn ghost_receive<A: Automaton>(run: &Run, automata: &BTreeMap<ProcessId, A>) -> Option<Run> {
    for p in run.pattern.correct().iter() {
        let a = automata.get(&p)?;
        let proj = run.process_projection(p);
        let Some(steps) = parsed_steps(&proj) else {
            continue;
        };
        let input = run.inputs.get(p)?;
        let states = step_states(a, input, &steps);
        let last = states.last().expect("initial state always present");
        if !a.is_halted(last) {
            continue;
        }
        let top = run.events.last().map_or(0, |e| e.time);
        let body = MsgBody::Round {
            from: p,
            phase: RoundPhase::Report,
            value: None,
            round: u32::MAX,
        };
        let mut mutated = run.clone();
        mutated.events.push(Event {
            loc: EventLoc::Buffer,
            process: p,
            time: top + 1,
            kind: EventKind::Receive(Message { dest: p, body }),
        });
        mutated.events.push(Event {
            loc: EventLoc::Buffer,
            process: p,
            time: top + 2,
            kind: EventKind::Send(None),
        });
        return Some(mutated);
    }
    None
}

fn flip_value(v: Value) -> Value {
    Value(v.0 ^ 1)
}

fn flip_body(body: &MsgBody) -> Option<MsgBody> {
    match body {
        MsgBody::Input { from, value } => Some(MsgBody::Input {
            from: *from,
            value: flip_value(*value),
        }),
        MsgBody::Verdict { slot, value } => Some(MsgBody::Verdict {
            slot: *slot,
            value: flip_value(*value),
        }),
        MsgBody::Decision { value } => Some(MsgBody::Decision {
            value: flip_value(*value),
        }),
        MsgBody::Halt { value } => Some(MsgBody::Halt {
            value: flip_value(*value),
        }),
        MsgBody::Round { .. } => None,
    }
}

fn corrupt_send(run: &Run) -> Option<Run> {
    // Delivery balance per (destination, payload).
    let mut balance: BTreeMap<(ProcessId, &MsgBody), i64> = BTreeMap::new();
    for e in &run.events {
        match &e.kind {
            EventKind::Send(Some(m)) => *balance.entry((m.dest, &m.body)).or_default() += 1,
            EventKind::Receive(m) => *balance.entry((m.dest, &m.body)).or_default() -= 1,
            _ => {}
        }
    }
    for (i, e) in run.events.iter().enumerate() {
        let EventKind::Send(Some(m)) = &e.kind else {
            continue;
        };
        if !run.pattern.is_faulty(m.dest) {
            continue;
        }
        if balance.get(&(m.dest, &m.body)).copied().unwrap_or(0) <= 0 {
            continue;
        }
        let Some(flipped) = flip_body(&m.body) else {
            continue;
        };
        let mut mutated = run.clone();
        mutated.events[i].kind = EventKind::Send(Some(Message {
            dest: m.dest,
            body: flipped,
        }));
        return Some(mutated);
    }
    None
}

fn premature_stop<A: Automaton>(run: &Run, automata: &BTreeMap<ProcessId, A>) -> Option<Run> {
    for p in run.pattern.correct().iter() {
        let a = automata.get(&p)?;
        let proj = run.process_projection(p);
        let Some(steps) = parsed_steps(&proj) else {
            continue;
        };
        let Some(last) = steps.last() else { continue };
        // A final pure internal step: no receipt, no consultation, and no
        // outgoing message, so its deletion cannot disturb the mail or
        // sanctuary accounting.
        if last.receive.is_some() || last.query.is_some() || last.answer.is_some() {
            continue;
        }
        let Some(send) = last.send else { continue };
        if !matches!(send.kind, EventKind::Send(None)) {
            continue;
        }
        let input = run.inputs.get(p)?;
        let states = step_states(a, input, &steps);
        let before = &states[steps.len() - 1];
        // The state must still have silent work to do once the step is gone,
        // and must not be waiting on anything else.
        if a.is_halted(before) || a.query(before).is_some() {
            continue;
        }
        let si = index_at(run, send.time)?;
        let mut mutated = run.clone();
        mutated.events.remove(si);
        return Some(mutated);
    }
    None
}

fn drop_delivery<A: Automaton>(run: &Run, automata: &BTreeMap<ProcessId, A>) -> Option<Run> {
    for p in run.pattern.correct().iter() {
        let a = automata.get(&p)?;
        let proj = run.process_projection(p);
        let Some(steps) = parsed_steps(&proj) else {
            continue;
        };
        let input = run.inputs.get(p)?;
        let states = step_states(a, input, &steps);
        for (i, step) in steps.iter().enumerate() {
            // Only drains of an already halted process replay identically
            // after deletion: the self-loop ignores what it absorbs.
            if !a.is_halted(&states[i]) {
                continue;
            }
            let (Some(receive), Some(send)) = (step.receive, step.send) else {
                continue;
            };
            if step.query.is_some() || step.answer.is_some() {
                continue;
            }
            if !matches!(send.kind, EventKind::Send(None)) {
                continue;
            }
            let ri = index_at(run, receive.time)?;
            let si = index_at(run, send.time)?;
            let mut mutated = run.clone();
            let (lo, hi) = (ri.min(si), ri.max(si));
            mutated.events.remove(hi);
            mutated.events.remove(lo);
            return Some(mutated);
        }
    }
    None
}

fn post_crash_event(run: &Run) -> Option<Run> {
    for p in run.pattern.faulty().iter() {
        let proj = run.process_projection(p);
        let Some(last) = proj.last() else { continue };
        // Only buffer events: moving a crash onto a sanctuary event would
        // also disturb the sanctuary's own history.
        if !matches!(last.kind, EventKind::Receive(_) | EventKind::Send(_)) {
            continue;
        }
        let mut crashes: BTreeMap<ProcessId, TimeStep> = run
            .pattern
            .faulty()
            .iter()
            .filter_map(|q| run.pattern.crash_time(q).map(|t| (q, t)))
            .collect();
        crashes.insert(p, last.time);
        let pattern = FailurePattern::new(run.processes.clone(), crashes).ok()?;
        let mut mutated = run.clone();
        mutated.pattern = pattern;
        return Some(mutated);
    }
    None
}
