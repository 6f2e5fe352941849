//! Agreement-condition verifier.
//!
//! Judges a run against the four conditions every agreement algorithm owes:
//!
//! * **Termination**: every correct process decides. On truncated runs this
//!   is flagged rather than failed, since the missing decisions may simply
//!   lie past the cut.
//! * **Irrevocability**: once a process's state carries a decision, every
//!   later state carries the same one.
//! * **Agreement**: no two processes (faulty ones included) decide
//!   differently.
//! * **Validity**: every decided value is allowed by the problem for the
//!   run's failure pattern and inputs.
//!
//! [`verify_agreement_conditions`] derives decisions by replaying each
//! process's automaton over its own parsed history, so it judges what the
//! history actually shows rather than what the generator wrote down.
//! [`verify_recorded_conditions`] is the complement for synchronous runs,
//! whose histories do not follow the asynchronous automaton interface: it
//! judges the run's recorded decisions directly.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::runtime::automaton::Automaton;
use crate::runtime::check::{parse_steps, Verdict};
use crate::runtime::{EventKind, Run};
use crate::task::{ProblemEval, ProcessId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementCondition {
    Termination,
    Irrevocability,
    Agreement,
    Validity,
}

impl AgreementCondition {
    pub const ALL: [AgreementCondition; 4] = [
        AgreementCondition::Termination,
        AgreementCondition::Irrevocability,
        AgreementCondition::Agreement,
        AgreementCondition::Validity,
    ];
}

impl fmt::Display for AgreementCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgreementCondition::Termination => "termination",
            AgreementCondition::Irrevocability => "irrevocability",
            AgreementCondition::Agreement => "agreement",
            AgreementCondition::Validity => "validity",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionFinding {
    pub condition: AgreementCondition,
    pub verdict: Verdict,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementReport {
    /// One finding per condition, in [`AgreementCondition::ALL`] order.
    pub findings: Vec<ConditionFinding>,
    /// Final decision per process, as derived (or recorded).
    pub decisions: BTreeMap<ProcessId, Value>,
}

impl AgreementReport {
    pub fn verdict(&self, condition: AgreementCondition) -> Verdict {
        self.findings
            .iter()
            .find(|f| f.condition == condition)
            .map(|f| f.verdict)
            .expect("all four conditions reported")
    }

    pub fn passed(&self) -> bool {
        self.findings.iter().all(|f| f.verdict == Verdict::Pass)
    }

    pub fn no_failures(&self) -> bool {
        self.findings.iter().all(|f| f.verdict != Verdict::Fail)
    }

    pub fn failed_conditions(&self) -> Vec<AgreementCondition> {
        self.findings
            .iter()
            .filter(|f| f.verdict == Verdict::Fail)
            .map(|f| f.condition)
            .collect()
    }
}

fn build_report(
    run: &Run,
    problem: &impl ProblemEval,
    decisions: BTreeMap<ProcessId, Value>,
    revocations: Vec<String>,
) -> AgreementReport {
    let quiescent = run.outcome.is_quiescent();

    let mut termination = Vec::new();
    for p in run.pattern.correct().iter() {
        if !decisions.contains_key(&p) {
            termination.push(format!("correct {p} never decides"));
        }
    }
    let termination_verdict = if termination.is_empty() {
        Verdict::Pass
    } else if quiescent {
        Verdict::Fail
    } else {
        termination.clear();
        Verdict::Flagged
    };

    let irrevocability_verdict = if revocations.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let mut agreement = Vec::new();
    let mut decided: Vec<(ProcessId, Value)> = decisions.iter().map(|(&p, &v)| (p, v)).collect();
    decided.sort();
    if let Some(&(first_p, first_v)) = decided.first() {
        for &(p, v) in &decided[1..] {
            if v != first_v {
                agreement.push(format!("{first_p} decides {first_v} but {p} decides {v}"));
            }
        }
    }

    let mut validity = Vec::new();
    let allowed = problem.allowed(&run.pattern, &run.inputs);
    for &(p, v) in &decided {
        if !allowed.contains(&v) {
            let allowed_list: Vec<String> = allowed.iter().map(|v| v.to_string()).collect();
            validity.push(format!(
                "{p} decides {v}, allowed here: {{{}}}",
                allowed_list.join(", ")
            ));
        }
    }

    let findings = vec![
        ConditionFinding {
            condition: AgreementCondition::Termination,
            verdict: termination_verdict,
            details: termination,
        },
        ConditionFinding {
            condition: AgreementCondition::Irrevocability,
            verdict: irrevocability_verdict,
            details: revocations,
        },
        ConditionFinding {
            condition: AgreementCondition::Agreement,
            verdict: if agreement.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            details: agreement,
        },
        ConditionFinding {
            condition: AgreementCondition::Validity,
            verdict: if validity.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            details: validity,
        },
    ];
    AgreementReport {
        findings,
        decisions,
    }
}

/// Verify the four agreement conditions by replaying each process's
/// automaton over the run's history.
pub fn verify_agreement_conditions<A: Automaton>(
    run: &Run,
    automata: &BTreeMap<ProcessId, A>,
    problem: &impl ProblemEval,
) -> AgreementReport {
    let mut decisions: BTreeMap<ProcessId, Value> = BTreeMap::new();
    let mut revocations: Vec<String> = Vec::new();
    for p in run.processes.iter() {
        let Some(automaton) = automata.get(&p) else {
            continue; // The structural checker reports missing automata.
        };
        let Some(input) = run.inputs.get(p) else {
            continue;
        };
        let projection = run.process_projection(p);
        let (steps, _parse_error) = parse_steps(&projection);
        let mut state = automaton.initial(input);
        let mut settled: Option<Value> = automaton.decision(&state);
        for step in &steps {
            if step.send.is_none() {
                break; // Trailing incomplete step: no transition happened.
            }
            let received = step.receive.map(|e| match &e.kind {
                EventKind::Receive(m) => &m.body,
                _ => unreachable!("parser"),
            });
            let answer = step.answer.map(|e| match &e.kind {
                EventKind::Answer(v) => *v,
                _ => unreachable!("parser"),
            });
            state = automaton.transition(&state, received, answer).next;
            let now = automaton.decision(&state);
            match (settled, now) {
                (Some(before), Some(after)) if before != after => {
                    revocations.push(format!("{p} revokes {before} in favor of {after}"));
                    settled = now;
                }
                (Some(before), None) => {
                    revocations.push(format!("{p} retracts its decision {before}"));
                }
                (None, Some(_)) => settled = now,
                _ => {}
            }
        }
        if let Some(v) = settled {
            decisions.insert(p, v);
        }
    }
    build_report(run, problem, decisions, revocations)
}

/// Verify the four agreement conditions against the run's recorded
/// decisions. Intended for synchronous runs, where a process decides
/// exactly once (at its answer), so irrevocability holds by construction.
pub fn verify_recorded_conditions(run: &Run, problem: &impl ProblemEval) -> AgreementReport {
    let decisions: BTreeMap<ProcessId, Value> =
        run.decisions.iter().map(|(&p, &(_, v))| (p, v)).collect();
    build_report(run, problem, decisions, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::automaton::{QuerySpec, Transition};
    use crate::runtime::{Event, EventLoc, MsgBody, RunMode, RunOutcome};
    use crate::task::{
        AgreementProblem, FailurePattern, InputVector, ProcessSet, ValueDomain,
    };

    /// Decides its own input immediately; one optional productive step that
    /// flips the decision (used to provoke irrevocability findings).
    #[derive(Clone)]
    struct Stubborn {
        flips: bool,
    }

    #[derive(Clone, PartialEq, Eq, Debug)]
    struct StubbornState {
        value: Value,
        flipped: bool,
    }

    impl Automaton for Stubborn {
        type State = StubbornState;

        fn initial(&self, v: Value) -> StubbornState {
            StubbornState {
                value: v,
                flipped: false,
            }
        }

        fn query(&self, _s: &StubbornState) -> Option<QuerySpec> {
            None
        }

        fn transition(
            &self,
            s: &StubbornState,
            _m: Option<&MsgBody>,
            _d: Option<Value>,
        ) -> Transition<StubbornState> {
            if self.flips && !s.flipped {
                Transition::stay(StubbornState {
                    value: Value(1 - s.value.0.min(1)),
                    flipped: true,
                })
            } else {
                Transition::stay(s.clone())
            }
        }

        fn decision(&self, s: &StubbornState) -> Option<Value> {
            Some(s.value)
        }

        fn is_halted(&self, s: &StubbornState) -> bool {
            !self.flips || s.flipped
        }
    }

    fn consensus(n: u32) -> AgreementProblem {
        AgreementProblem::consensus(ProcessSet::contiguous(n), ValueDomain::binary())
            .expect("valid problem")
    }

    fn bare_run(n: u32, inputs: InputVector, events: Vec<Event>) -> Run {
        let procs = ProcessSet::contiguous(n);
        Run {
            mode: RunMode::Async,
            processes: procs.clone(),
            pattern: FailurePattern::failure_free(procs).expect("valid"),
            inputs,
            events,
            outcome: RunOutcome::Quiescent,
            decisions: BTreeMap::new(),
        }
    }

    #[test]
    fn uniform_inputs_pass_all_conditions() {
        let procs = ProcessSet::contiguous(2);
        let inputs = InputVector::uniform(&procs, Value(1));
        let run = bare_run(2, inputs, vec![]);
        let automata: BTreeMap<ProcessId, Stubborn> = (1..=2)
            .map(|i| (ProcessId(i), Stubborn { flips: false }))
            .collect();
        let report = verify_agreement_conditions(&run, &automata, &consensus(2));
        assert!(report.passed(), "{:?}", report.findings);
        assert_eq!(report.decisions.len(), 2);
    }

    #[test]
    fn split_decisions_fail_agreement_only() {
        let procs = ProcessSet::contiguous(2);
        let mut inputs = InputVector::uniform(&procs, Value(1));
        inputs.set(ProcessId(2), Value(0));
        let run = bare_run(2, inputs, vec![]);
        let automata: BTreeMap<ProcessId, Stubborn> = (1..=2)
            .map(|i| (ProcessId(i), Stubborn { flips: false }))
            .collect();
        let report = verify_agreement_conditions(&run, &automata, &consensus(2));
        assert_eq!(
            report.failed_conditions(),
            vec![AgreementCondition::Agreement]
        );
    }

    #[test]
    fn a_flip_fails_irrevocability_and_validity() {
        let procs = ProcessSet::contiguous(1);
        let inputs = InputVector::uniform(&procs, Value(0));
        // One productive [S] step that flips the decided value from 0 to 1.
        let events = vec![Event {
            loc: EventLoc::Buffer,
            process: ProcessId(1),
            time: 0,
            kind: EventKind::Send(None),
        }];
        let run = bare_run(1, inputs, events);
        let automata: BTreeMap<ProcessId, Stubborn> =
            [(ProcessId(1), Stubborn { flips: true })].into_iter().collect();
        let report = verify_agreement_conditions(&run, &automata, &consensus(1));
        let failed = report.failed_conditions();
        assert!(failed.contains(&AgreementCondition::Irrevocability));
        // The flipped value 1 is not an input value, so consensus validity
        // breaks too.
        assert!(failed.contains(&AgreementCondition::Validity));
        assert_eq!(report.verdict(AgreementCondition::Agreement), Verdict::Pass);
    }

    #[test]
    fn truncated_run_flags_termination() {
        let procs = ProcessSet::contiguous(2);
        let inputs = InputVector::uniform(&procs, Value(1));
        // An automaton that never decides until it takes its flip step; with
        // no events and a truncated outcome, nobody decided yet.
        #[derive(Clone)]
        struct Mute;
        impl Automaton for Mute {
            type State = u8;
            fn initial(&self, _v: Value) -> u8 {
                0
            }
            fn query(&self, _s: &u8) -> Option<QuerySpec> {
                None
            }
            fn transition(
                &self,
                s: &u8,
                _m: Option<&MsgBody>,
                _d: Option<Value>,
            ) -> Transition<u8> {
                Transition::stay(*s)
            }
            fn decision(&self, _s: &u8) -> Option<Value> {
                None
            }
            fn is_halted(&self, _s: &u8) -> bool {
                false
            }
        }
        let mut run = bare_run(2, inputs, vec![]);
        run.outcome = RunOutcome::BudgetExhausted;
        let automata: BTreeMap<ProcessId, Mute> =
            (1..=2).map(|i| (ProcessId(i), Mute)).collect();
        let report = verify_agreement_conditions(&run, &automata, &consensus(2));
        assert_eq!(
            report.verdict(AgreementCondition::Termination),
            Verdict::Flagged
        );
        assert!(report.no_failures());
    }

    #[test]
    fn recorded_conditions_judge_the_decisions_map() {
        let procs = ProcessSet::contiguous(3);
        // Mixed inputs keep both 0 and 1 consensus-valid, so a split vote
        // trips agreement alone.
        let mut inputs = InputVector::uniform(&procs, Value(1));
        inputs.set(ProcessId(3), Value(0));
        let mut run = bare_run(3, inputs, vec![]);
        run.decisions = (1..=3)
            .map(|i| (ProcessId(i), (i as u64, Value(1))))
            .collect();
        let report = verify_recorded_conditions(&run, &consensus(3));
        assert!(report.passed());
        run.decisions.insert(ProcessId(3), (3, Value(0)));
        let report = verify_recorded_conditions(&run, &consensus(3));
        assert_eq!(
            report.failed_conditions(),
            vec![AgreementCondition::Agreement]
        );
    }

    /// A decider that needs a sanctuary answer: trailing unanswered queries
    /// leave it undecided, which only flags termination when truncated.
    #[test]
    fn undelivered_answer_on_quiescent_run_fails_termination() {
        use crate::oracle::SanctuaryId;
        #[derive(Clone)]
        struct NeedsAnswer;
        impl Automaton for NeedsAnswer {
            type State = Option<Value>;
            fn initial(&self, _v: Value) -> Self::State {
                None
            }
            fn query(&self, s: &Self::State) -> Option<QuerySpec> {
                match s {
                    None => Some(QuerySpec {
                        sanctuary: SanctuaryId::new("sigma").expect("valid"),
                        value: Value(0),
                    }),
                    Some(_) => None,
                }
            }
            fn transition(
                &self,
                s: &Self::State,
                _m: Option<&MsgBody>,
                d: Option<Value>,
            ) -> Transition<Self::State> {
                match (s, d) {
                    (None, Some(d)) => Transition::stay(Some(d)),
                    _ => Transition::stay(*s),
                }
            }
            fn decision(&self, s: &Self::State) -> Option<Value> {
                *s
            }
            fn is_halted(&self, s: &Self::State) -> bool {
                s.is_some()
            }
        }
        let procs = ProcessSet::contiguous(1);
        let inputs = InputVector::uniform(&procs, Value(0));
        let events = vec![Event {
            loc: EventLoc::Sanctuary(SanctuaryId::new("sigma").expect("valid")),
            process: ProcessId(1),
            time: 0,
            kind: EventKind::Query(Value(0)),
        }];
        let run = bare_run(1, inputs, events);
        let automata: BTreeMap<ProcessId, NeedsAnswer> =
            [(ProcessId(1), NeedsAnswer)].into_iter().collect();
        let report = verify_agreement_conditions(&run, &automata, &consensus(1));
        assert_eq!(
            report.failed_conditions(),
            vec![AgreementCondition::Termination]
        );
    }
}
