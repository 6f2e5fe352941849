//! Parallel sweeps over seeds, inputs, failure patterns, and answer
//! strategies.
//!
//! A sweep runs the cartesian product of its dimensions through the
//! asynchronous engine, optionally checks every run against the run rules,
//! and always verifies the agreement conditions. Results are folded in a
//! fixed order (strategy, then pattern, then inputs, then seed), so the
//! reported first failure is deterministic for a given configuration no
//! matter how the work was scheduled across threads.
//!
//! Failure patterns that leave some sanctuary without a surviving consultant
//! cannot be run at all; the sweep counts them as skipped instead of failed,
//! since no run exists to judge.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::oracle::{AnswerStrategy, OracleError, Sanctuary};
use crate::runtime::automaton::Automaton;
use crate::runtime::check::{check_run, Verdict};
use crate::runtime::engine::{run_async, RunSetup, Scheduler};
use crate::runtime::verify::verify_agreement_conditions;
use crate::runtime::{Run, RunError};
use crate::task::{
    enumerate_input_vectors, FailurePattern, InputVector, ProblemEval, ProcessId, TimeStep,
};

/// Which input vectors to sweep.
#[derive(Debug, Clone)]
pub enum InputSpace {
    /// Every assignment of the task's value domain to the processes.
    All,
    /// Exactly these vectors.
    List(Vec<InputVector>),
}

/// Which failure patterns to sweep.
#[derive(Debug, Clone)]
pub enum PatternSpace {
    /// Every pattern with at most `max_crashes` crashed processes (always
    /// leaving at least one survivor), each crashing at every time in
    /// `0..=horizon`.
    UpToCrashes { max_crashes: usize, horizon: TimeStep },
    /// Exactly these patterns.
    List(Vec<FailurePattern>),
}

/// One sweep's dimensions.
#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub seeds: Vec<u64>,
    pub inputs: InputSpace,
    pub patterns: PatternSpace,
    pub strategies: Vec<AnswerStrategy>,
    /// Event budget per run; 0 means the engine default.
    pub budget: u64,
    /// Also check the run rules (slower); the agreement conditions are
    /// always verified.
    pub check_rules: bool,
}

/// What to sweep: the algorithm, its sanctuaries, and the task to verify
/// against.
pub struct ExploreTarget<'a, A: Automaton, P: ProblemEval> {
    pub automata: &'a BTreeMap<ProcessId, A>,
    pub sanctuaries: &'a [Sanctuary],
    pub problem: &'a P,
}

/// The first failing run of a sweep, with everything needed to replay it.
#[derive(Debug, Clone)]
pub struct FailureCase {
    pub seed: u64,
    pub strategy: AnswerStrategy,
    pub pattern: FailurePattern,
    pub inputs: InputVector,
    /// One line per failed rule, violated law, or failed condition.
    pub details: Vec<String>,
    pub run: Run,
}

/// Aggregated sweep results.
#[derive(Debug, Clone, Default)]
pub struct ExploreReport {
    /// Runs actually executed (excludes skips).
    pub runs: usize,
    /// Combinations whose pattern leaves a sanctuary with no surviving
    /// consultant.
    pub skipped_invalid: usize,
    /// Runs that reached quiescence.
    pub quiescent: usize,
    /// Runs with at least one flagged (undecidable-on-a-truncated-run)
    /// finding and no failures.
    pub flagged: usize,
    /// Runs with at least one failed rule, law, or condition.
    pub failures: usize,
    /// Total oracle law violations across all runs.
    pub law_violations: usize,
    pub first_failure: Option<FailureCase>,
}

impl ExploreReport {
    /// No failures, no law violations, and nothing left undecided by
    /// truncation.
    pub fn all_clean(&self) -> bool {
        self.failures == 0 && self.law_violations == 0 && self.flagged == 0
    }
}

enum JobOutcome {
    Skipped,
    Done {
        quiescent: bool,
        flagged: bool,
        laws: usize,
        /// Present exactly when the run failed a rule, law, or condition.
        failure: Option<(Vec<String>, Run)>,
    },
}

/// Run the full cartesian product and fold the results in combo order.
pub fn explore<A, P>(
    target: &ExploreTarget<'_, A, P>,
    config: &ExploreConfig,
) -> Result<ExploreReport, RunError>
where
    A: Automaton + Sync,
    P: ProblemEval + Sync,
{
    let inputs: Vec<InputVector> = match &config.inputs {
        InputSpace::All => {
            enumerate_input_vectors(target.problem.processes(), target.problem.domain())
        }
        InputSpace::List(list) => list.clone(),
    };
    let patterns: Vec<FailurePattern> = match &config.patterns {
        PatternSpace::UpToCrashes {
            max_crashes,
            horizon,
        } => enumerate_patterns(target.problem.processes(), *max_crashes, *horizon),
        PatternSpace::List(list) => list.clone(),
    };

    let mut combos = Vec::new();
    for si in 0..config.strategies.len() {
        for pi in 0..patterns.len() {
            for ii in 0..inputs.len() {
                for &seed in &config.seeds {
                    combos.push((si, pi, ii, seed));
                }
            }
        }
    }

    let outcomes: Result<Vec<JobOutcome>, RunError> = combos
        .par_iter()
        .map(|&(si, pi, ii, seed)| {
            run_one(
                target,
                config,
                &config.strategies[si],
                &patterns[pi],
                &inputs[ii],
                seed,
            )
        })
        .collect();

    let mut report = ExploreReport::default();
    for (outcome, &(si, pi, ii, seed)) in outcomes?.iter().zip(&combos) {
        match outcome {
            JobOutcome::Skipped => report.skipped_invalid += 1,
            JobOutcome::Done {
                quiescent,
                flagged,
                laws,
                failure,
            } => {
                report.runs += 1;
                report.quiescent += usize::from(*quiescent);
                report.law_violations += laws;
                if let Some((details, run)) = failure {
                    report.failures += 1;
                    if report.first_failure.is_none() {
                        report.first_failure = Some(FailureCase {
                            seed,
                            strategy: config.strategies[si].clone(),
                            pattern: patterns[pi].clone(),
                            inputs: inputs[ii].clone(),
                            details: details.clone(),
                            run: run.clone(),
                        });
                    }
                } else if *flagged {
                    report.flagged += 1;
                }
            }
        }
    }
    Ok(report)
}

fn run_one<A, P>(
    target: &ExploreTarget<'_, A, P>,
    config: &ExploreConfig,
    strategy: &AnswerStrategy,
    pattern: &FailurePattern,
    inputs: &InputVector,
    seed: u64,
) -> Result<JobOutcome, RunError>
where
    A: Automaton + Sync,
    P: ProblemEval + Sync,
{
    let run = match run_async(RunSetup {
        automata: target.automata,
        sanctuaries: target.sanctuaries,
        pattern,
        inputs,
        strategy: strategy.clone(),
        scheduler: Scheduler::Seeded { seed },
        budget: config.budget,
        prefix: &[],
    }) {
        Ok(run) => run,
        Err(RunError::Oracle(OracleError::InvalidSanctuaryConfig { .. })) => {
            return Ok(JobOutcome::Skipped)
        }
        Err(e) => return Err(e),
    };

    let mut details = Vec::new();
    let mut laws = 0;
    let mut flagged = false;
    if config.check_rules {
        let rules = check_run(&run, target.automata, target.sanctuaries);
        laws = rules.law_violations.len();
        for v in &rules.law_violations {
            details.push(format!("law: {v}"));
        }
        for f in &rules.findings {
            match f.verdict {
                Verdict::Fail => details.push(format!("{}: {}", f.rule, f.details.join("; "))),
                Verdict::Flagged => flagged = true,
                Verdict::Pass => {}
            }
        }
    }
    let conditions = verify_agreement_conditions(&run, target.automata, target.problem);
    for f in &conditions.findings {
        match f.verdict {
            Verdict::Fail => details.push(format!("{}: {}", f.condition, f.details.join("; "))),
            Verdict::Flagged => flagged = true,
            Verdict::Pass => {}
        }
    }

    let quiescent = run.outcome.is_quiescent();
    let failure = if details.is_empty() {
        None
    } else {
        Some((details, run))
    };
    Ok(JobOutcome::Done {
        quiescent,
        flagged,
        laws,
        failure,
    })
}

/// Every pattern with at most `max_crashes` crashes (never all processes)
/// at every combination of crash times in `0..=horizon`.
pub fn enumerate_patterns(
    processes: &crate::task::ProcessSet,
    max_crashes: usize,
    horizon: TimeStep,
) -> Vec<FailurePattern> {
    let mut out = Vec::new();
    let cap = max_crashes.min(processes.len().saturating_sub(1));
    for k in 0..=cap {
        for subset in processes.subsets_of_size(k) {
            let victims: Vec<ProcessId> = subset.iter().collect();
            let mut times = vec![0u64; k];
            loop {
                let crashes: BTreeMap<ProcessId, TimeStep> =
                    victims.iter().copied().zip(times.iter().copied()).collect();
                out.push(
                    FailurePattern::new(processes.clone(), crashes)
                        .expect("a proper subset of processes always leaves a survivor"),
                );
                // Advance the time vector like a base-(horizon + 1) counter.
                let mut i = 0;
                loop {
                    if i == times.len() {
                        break;
                    }
                    if times[i] < horizon {
                        times[i] += 1;
                        break;
                    }
                    times[i] = 0;
                    i += 1;
                }
                if i == times.len() {
                    break;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{build_cstar, build_naive_guarded};
    use crate::runtime::automaton::{QuerySpec, Transition};
    use crate::runtime::MsgBody;
    use crate::task::{AgreementProblem, ProcessSet, Value, ValueDomain};

    #[test]
    fn pattern_enumeration_counts_match() {
        let procs = ProcessSet::new((1..=3).map(ProcessId));
        // Failure-free, plus 3 single-crash choices at 3 times each.
        let patterns = enumerate_patterns(&procs, 1, 2);
        assert_eq!(patterns.len(), 1 + 3 * 3);
        // Never a pattern crashing everyone.
        let all = enumerate_patterns(&procs, 3, 0);
        assert!(all.iter().all(|p| !p.correct().is_empty()));
        assert_eq!(all.len(), 1 + 3 + 3);
    }

    #[test]
    fn a_correct_algorithm_sweeps_clean() {
        let instance = build_cstar(2, 1).expect("build");
        let report = explore(
            &ExploreTarget {
                automata: &instance.automata,
                sanctuaries: &instance.sanctuaries,
                problem: instance.task.problem(),
            },
            &ExploreConfig {
                seeds: (0..4).collect(),
                inputs: InputSpace::All,
                patterns: PatternSpace::UpToCrashes {
                    max_crashes: 1,
                    horizon: 1,
                },
                strategies: vec![AnswerStrategy::default()],
                budget: 0,
                check_rules: true,
            },
        )
        .expect("sweep");
        // 8 input vectors, 1 + 3 * 2 patterns, 4 seeds.
        assert_eq!(report.runs, 8 * 7 * 4);
        assert_eq!(report.skipped_invalid, 0);
        assert_eq!(report.quiescent, report.runs);
        assert!(report.all_clean(), "{report:?}");
    }

    #[test]
    fn patterns_that_starve_a_sanctuary_are_skipped() {
        let instance = build_cstar(2, 2).expect("build");
        // Crash processes 1 and 2 at time 0: the sanctuary serving exactly
        // {1, 2} has no surviving consultant, so nothing can run.
        let pattern = FailurePattern::new(
            instance.processes.clone(),
            BTreeMap::from([(ProcessId(1), 0), (ProcessId(2), 0)]),
        )
        .expect("pattern");
        let report = explore(
            &ExploreTarget {
                automata: &instance.automata,
                sanctuaries: &instance.sanctuaries,
                problem: instance.task.problem(),
            },
            &ExploreConfig {
                seeds: vec![0, 1, 2],
                inputs: InputSpace::List(vec![InputVector::uniform(
                    &instance.processes,
                    Value(1),
                )]),
                patterns: PatternSpace::List(vec![pattern]),
                strategies: vec![AnswerStrategy::default()],
                budget: 0,
                check_rules: false,
            },
        )
        .expect("sweep");
        assert_eq!(report.runs, 0);
        assert_eq!(report.skipped_invalid, 3);
    }

    /// Decides its own input immediately: splits on mixed inputs.
    #[derive(Clone)]
    struct DecideOwn;

    impl Automaton for DecideOwn {
        type State = Value;

        fn initial(&self, v: Value) -> Value {
            v
        }

        fn query(&self, _s: &Value) -> Option<QuerySpec> {
            None
        }

        fn transition(
            &self,
            s: &Value,
            _m: Option<&MsgBody>,
            _d: Option<Value>,
        ) -> Transition<Value> {
            Transition::stay(*s)
        }

        fn decision(&self, s: &Value) -> Option<Value> {
            Some(*s)
        }

        fn is_halted(&self, _s: &Value) -> bool {
            false
        }
    }

    #[test]
    fn the_first_failure_is_reported_in_combo_order() {
        let procs = ProcessSet::new((1..=2).map(ProcessId));
        let automata: BTreeMap<ProcessId, DecideOwn> =
            procs.iter().map(|p| (p, DecideOwn)).collect();
        let problem =
            AgreementProblem::consensus(procs.clone(), ValueDomain::binary()).expect("problem");
        let mut split = InputVector::uniform(&procs, Value(0));
        split.set(ProcessId(2), Value(1));
        let report = explore(
            &ExploreTarget {
                automata: &automata,
                sanctuaries: &[],
                problem: &problem,
            },
            &ExploreConfig {
                seeds: vec![7, 8],
                inputs: InputSpace::List(vec![
                    InputVector::uniform(&procs, Value(0)),
                    split.clone(),
                ]),
                patterns: PatternSpace::List(vec![FailurePattern::failure_free(procs.clone())
                    .expect("pattern")]),
                strategies: vec![AnswerStrategy::default()],
                budget: 0,
                check_rules: true,
            },
        )
        .expect("sweep");
        assert_eq!(report.runs, 4);
        assert_eq!(report.failures, 2, "{report:?}");
        let first = report.first_failure.expect("failure");
        assert_eq!(first.seed, 7);
        assert_eq!(first.inputs, split);
        assert!(first.details.iter().any(|d| d.contains("agreement")));
    }

    #[test]
    fn truncated_runs_are_flagged_not_failed() {
        let instance = build_cstar(2, 1).expect("build");
        let report = explore(
            &ExploreTarget {
                automata: &instance.automata,
                sanctuaries: &instance.sanctuaries,
                problem: instance.task.problem(),
            },
            &ExploreConfig {
                seeds: (0..3).collect(),
                inputs: InputSpace::List(vec![InputVector::uniform(
                    &instance.processes,
                    Value(1),
                )]),
                patterns: PatternSpace::List(vec![FailurePattern::failure_free(
                    instance.processes.clone(),
                )
                .expect("pattern")]),
                strategies: vec![AnswerStrategy::default()],
                budget: 4,
                check_rules: true,
            },
        )
        .expect("sweep");
        assert_eq!(report.runs, 3);
        assert_eq!(report.failures, 0, "{report:?}");
        assert_eq!(report.flagged, 3);
        assert_eq!(report.quiescent, 0);
    }

    #[test]
    fn the_guarded_race_shows_up_in_a_seeded_sweep() {
        // The broken single-oracle algorithm is schedule-sensitive: sweep
        // enough seeds on the unanimous failure-free instance and some
        // schedule parks the outsider's vote long enough to abort.
        let instance = build_naive_guarded(2, 1).expect("build");
        let report = explore(
            &ExploreTarget {
                automata: &instance.automata,
                sanctuaries: &instance.sanctuaries,
                problem: instance.task.problem(),
            },
            &ExploreConfig {
                seeds: (0..150).collect(),
                inputs: InputSpace::List(vec![InputVector::uniform(
                    &instance.processes,
                    Value(1),
                )]),
                patterns: PatternSpace::List(vec![FailurePattern::failure_free(
                    instance.processes.clone(),
                )
                .expect("pattern")]),
                strategies: vec![AnswerStrategy::default()],
                budget: 0,
                check_rules: false,
            },
        )
        .expect("sweep");
        assert!(report.failures > 0, "{report:?}");
        // Schedule-sensitive, not always wrong: plenty of seeds succeed.
        assert!(report.failures < report.runs, "{report:?}");
        let first = report.first_failure.expect("failure");
        assert!(
            first.details.iter().any(|d| d.contains("validity")),
            "{:?}",
            first.details
        );
    }

    #[test]
    fn every_strategy_runs_its_own_jobs() {
        // Guard for the combo indexing: two strategies over two seeds must
        // run four jobs, not reuse results across strategies.
        let instance = build_cstar(2, 1).expect("build");
        let report = explore(
            &ExploreTarget {
                automata: &instance.automata,
                sanctuaries: &instance.sanctuaries,
                problem: instance.task.problem(),
            },
            &ExploreConfig {
                seeds: vec![0, 1],
                inputs: InputSpace::List(vec![InputVector::uniform(
                    &instance.processes,
                    Value(0),
                )]),
                patterns: PatternSpace::List(vec![FailurePattern::failure_free(
                    instance.processes.clone(),
                )
                .expect("pattern")]),
                strategies: vec![
                    AnswerStrategy::default(),
                    AnswerStrategy {
                        value: crate::oracle::ValuePolicy::MaxAllowed,
                        ..AnswerStrategy::default()
                    },
                ],
                budget: 0,
                check_rules: true,
            },
        )
        .expect("sweep");
        assert_eq!(report.runs, 4);
        assert!(report.all_clean(), "{report:?}");
    }
}
