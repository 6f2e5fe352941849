//! Process sets, crash failure patterns, and agreement problems.
//!
//! An agreement problem maps a failure pattern and an input vector to the set
//! of values processes are allowed to decide. Two problems are built in:
//!
//! * consensus: any input value may be decided;
//! * atomic commitment over `{0, 1}`: commit (1) is allowed only on unanimous
//!   1-inputs, and is the only allowed value when additionally nobody crashes.
//!
//! Invariants enforced by constructors:
//!
//! * a failure pattern never crashes every process (at least one survivor),
//!   and is monotone by construction (each process has at most one crash time);
//! * input vectors are total over their process set and stay in the domain;
//! * renamings are bijections.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete global time. Event timestamps and crash times share this scale.
pub type TimeStep = u64;

/// Process identifier. Canonical process sets use `1..=n`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An input or decision value. Atomic commitment fixes the domain to `{0, 1}`;
/// consensus works over any finite domain.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Value(pub u32);

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const ZERO: Value = Value(0);
pub const ONE: Value = Value(1);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("process set must not be empty")]
    EmptyProcessSet,
    #[error("process {0} is not a member of the process set")]
    UnknownProcess(ProcessId),
    #[error("failure pattern crashes every process; at least one must survive")]
    NoSurvivor,
    #[error("input vector does not assign exactly one value to every process")]
    PartialInput,
    #[error("value {0} is outside the problem domain")]
    ValueOutsideDomain(Value),
    #[error("value domain must not be empty")]
    EmptyDomain,
    #[error("atomic commitment requires the binary domain {{0, 1}}")]
    NonBinaryDomain,
    #[error("renaming is not a bijection")]
    NotABijection,
    #[error("renaming domain does not match the process set")]
    RenamingDomainMismatch,
    #[error("resiliency {f} out of range for {n} processes (need f <= n)")]
    ResiliencyOutOfRange { f: u32, n: usize },
}

/// A finite set of processes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ProcessSet(BTreeSet<ProcessId>);

impl ProcessSet {
    pub fn new(members: impl IntoIterator<Item = ProcessId>) -> Self {
        ProcessSet(members.into_iter().collect())
    }

    /// The canonical set `{1, ..., n}`.
    pub fn contiguous(n: u32) -> Self {
        ProcessSet((1..=n).map(ProcessId).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        self.0.contains(&p)
    }

    pub fn insert(&mut self, p: ProcessId) {
        self.0.insert(p);
    }

    pub fn iter(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &ProcessSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &ProcessSet) -> ProcessSet {
        ProcessSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &ProcessSet) -> ProcessSet {
        ProcessSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &ProcessSet) -> ProcessSet {
        ProcessSet(self.0.difference(&other.0).copied().collect())
    }

    /// All size-`k` subsets in lexicographic order of their sorted member lists.
    pub fn subsets_of_size(&self, k: usize) -> Vec<ProcessSet> {
        let members: Vec<ProcessId> = self.iter().collect();
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(k);
        fn choose(
            members: &[ProcessId],
            start: usize,
            k: usize,
            current: &mut Vec<ProcessId>,
            out: &mut Vec<ProcessSet>,
        ) {
            if current.len() == k {
                out.push(ProcessSet::new(current.iter().copied()));
                return;
            }
            let needed = k - current.len();
            for i in start..members.len() {
                if members.len() - i < needed {
                    break;
                }
                current.push(members[i]);
                choose(members, i + 1, k, current, out);
                current.pop();
            }
        }
        choose(&members, 0, k, &mut current, &mut out);
        out
    }
}

impl FromIterator<ProcessId> for ProcessSet {
    fn from_iter<T: IntoIterator<Item = ProcessId>>(iter: T) -> Self {
        ProcessSet(iter.into_iter().collect())
    }
}

impl fmt::Display for ProcessSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

/// A crash failure pattern over a process universe.
///
/// Each faulty process has a single crash time; the set of crashed processes
/// at time `t` is everyone whose crash time is `<= t`, so the pattern is
/// monotone by construction. A process crashed at time `c` performs no event
/// at any time `>= c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePattern {
    universe: ProcessSet,
    crashes: BTreeMap<ProcessId, TimeStep>,
}

impl FailurePattern {
    pub fn new(
        universe: ProcessSet,
        crashes: BTreeMap<ProcessId, TimeStep>,
    ) -> Result<Self, TaskError> {
        if universe.is_empty() {
            return Err(TaskError::EmptyProcessSet);
        }
        for p in crashes.keys() {
            if !universe.contains(*p) {
                return Err(TaskError::UnknownProcess(*p));
            }
        }
        if crashes.len() == universe.len() {
            return Err(TaskError::NoSurvivor);
        }
        Ok(FailurePattern { universe, crashes })
    }

    pub fn failure_free(universe: ProcessSet) -> Result<Self, TaskError> {
        FailurePattern::new(universe, BTreeMap::new())
    }

    pub fn universe(&self) -> &ProcessSet {
        &self.universe
    }

    /// Processes crashed at or before time `t`.
    pub fn crashed_at(&self, t: TimeStep) -> ProcessSet {
        self.crashes
            .iter()
            .filter(|(_, c)| **c <= t)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Every process that crashes at some point.
    pub fn faulty(&self) -> ProcessSet {
        self.crashes.keys().copied().collect()
    }

    pub fn correct(&self) -> ProcessSet {
        self.universe.difference(&self.faulty())
    }

    pub fn is_faulty(&self, p: ProcessId) -> bool {
        self.crashes.contains_key(&p)
    }

    pub fn crash_time(&self, p: ProcessId) -> Option<TimeStep> {
        self.crashes.get(&p).copied()
    }

    pub fn crashes(&self) -> &BTreeMap<ProcessId, TimeStep> {
        &self.crashes
    }

    /// Whether `p` may perform an event at time `t`.
    pub fn allows_event(&self, p: ProcessId, t: TimeStep) -> bool {
        match self.crash_time(p) {
            Some(c) => t < c,
            None => true,
        }
    }
}

impl fmt::Display for FailurePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.crashes.is_empty() {
            return write!(f, "failure-free");
        }
        for (i, (p, c)) in self.crashes.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}@{c}")?;
        }
        Ok(())
    }
}

/// A total assignment of input values to a process set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputVector {
    values: BTreeMap<ProcessId, Value>,
}

impl InputVector {
    pub fn new(
        processes: &ProcessSet,
        values: BTreeMap<ProcessId, Value>,
    ) -> Result<Self, TaskError> {
        if values.len() != processes.len() || !processes.iter().all(|p| values.contains_key(&p)) {
            return Err(TaskError::PartialInput);
        }
        Ok(InputVector { values })
    }

    pub fn uniform(processes: &ProcessSet, v: Value) -> Self {
        InputVector {
            values: processes.iter().map(|p| (p, v)).collect(),
        }
    }

    /// Decode an input vector from the bits of `index`: process `i` (in set
    /// order) gets domain element `(index >> i) & 1`. Handy for exhaustive
    /// binary sweeps.
    pub fn from_bits(processes: &ProcessSet, index: u64) -> Self {
        InputVector {
            values: processes
                .iter()
                .enumerate()
                .map(|(i, p)| (p, Value(((index >> i) & 1) as u32)))
                .collect(),
        }
    }

    pub fn get(&self, p: ProcessId) -> Option<Value> {
        self.values.get(&p).copied()
    }

    pub fn set(&mut self, p: ProcessId, v: Value) {
        self.values.insert(p, v);
    }

    pub fn values(&self) -> &BTreeMap<ProcessId, Value> {
        &self.values
    }

    pub fn value_set(&self) -> BTreeSet<Value> {
        self.values.values().copied().collect()
    }

    pub fn processes(&self) -> ProcessSet {
        self.values.keys().copied().collect()
    }

    /// Restriction to a subset of the processes.
    pub fn restrict(&self, to: &ProcessSet) -> InputVector {
        InputVector {
            values: self
                .values
                .iter()
                .filter(|(p, _)| to.contains(**p))
                .map(|(p, v)| (*p, *v))
                .collect(),
        }
    }
}

impl fmt::Display for InputVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (p, v)) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}={v}")?;
        }
        write!(f, ")")
    }
}

/// A finite, non-empty value domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueDomain(BTreeSet<Value>);

impl ValueDomain {
    pub fn new(values: impl IntoIterator<Item = Value>) -> Result<Self, TaskError> {
        let set: BTreeSet<Value> = values.into_iter().collect();
        if set.is_empty() {
            return Err(TaskError::EmptyDomain);
        }
        Ok(ValueDomain(set))
    }

    pub fn binary() -> Self {
        ValueDomain([ZERO, ONE].into_iter().collect())
    }

    pub fn is_binary(&self) -> bool {
        self.0.len() == 2 && self.0.contains(&ZERO) && self.0.contains(&ONE)
    }

    pub fn contains(&self, v: Value) -> bool {
        self.0.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = Value> + '_ {
        self.0.iter().copied()
    }

    pub fn min(&self) -> Value {
        *self.0.iter().next().expect("domain is non-empty")
    }

    pub fn max(&self) -> Value {
        *self.0.iter().next_back().expect("domain is non-empty")
    }
}

/// Allowed consensus decisions: exactly the values that appear in the input
/// vector, regardless of the failure pattern.
pub fn allowed_values_cons(inputs: &InputVector) -> BTreeSet<Value> {
    inputs.value_set()
}

/// Allowed atomic-commitment decisions over `{0, 1}`:
///
/// * some input is 0: abort only, `{0}`;
/// * all inputs are 1 and nobody crashes: commit only, `{1}`;
/// * all inputs are 1 but someone crashes: either, `{0, 1}`.
pub fn allowed_values_ac(pattern: &FailurePattern, inputs: &InputVector) -> BTreeSet<Value> {
    let all_one = inputs.values().values().all(|v| *v == ONE);
    if !all_one {
        [ZERO].into_iter().collect()
    } else if pattern.faulty().is_empty() {
        [ONE].into_iter().collect()
    } else {
        [ZERO, ONE].into_iter().collect()
    }
}

/// Evaluation interface for agreement problems, used by symmetry checking and
/// by oracle answer-candidate computation.
pub trait ProblemEval {
    fn processes(&self) -> &ProcessSet;
    fn domain(&self) -> &ValueDomain;
    /// The non-empty set of decisions allowed under `pattern` and `inputs`.
    /// `inputs` must be total over [`ProblemEval::processes`].
    fn allowed(&self, pattern: &FailurePattern, inputs: &InputVector) -> BTreeSet<Value>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Consensus,
    AtomicCommitment,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::Consensus => write!(f, "consensus"),
            ProblemKind::AtomicCommitment => write!(f, "atomic-commitment"),
        }
    }
}

/// One of the two built-in agreement problems over a concrete process set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementProblem {
    kind: ProblemKind,
    processes: ProcessSet,
    domain: ValueDomain,
}

impl AgreementProblem {
    pub fn consensus(processes: ProcessSet, domain: ValueDomain) -> Result<Self, TaskError> {
        if processes.is_empty() {
            return Err(TaskError::EmptyProcessSet);
        }
        Ok(AgreementProblem {
            kind: ProblemKind::Consensus,
            processes,
            domain,
        })
    }

    pub fn atomic_commitment(processes: ProcessSet) -> Result<Self, TaskError> {
        if processes.is_empty() {
            return Err(TaskError::EmptyProcessSet);
        }
        Ok(AgreementProblem {
            kind: ProblemKind::AtomicCommitment,
            processes,
            domain: ValueDomain::binary(),
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }
}

impl ProblemEval for AgreementProblem {
    fn processes(&self) -> &ProcessSet {
        &self.processes
    }

    fn domain(&self) -> &ValueDomain {
        &self.domain
    }

    fn allowed(&self, pattern: &FailurePattern, inputs: &InputVector) -> BTreeSet<Value> {
        debug_assert_eq!(inputs.processes(), self.processes);
        match self.kind {
            ProblemKind::Consensus => allowed_values_cons(inputs),
            ProblemKind::AtomicCommitment => allowed_values_ac(pattern, inputs),
        }
    }
}

/// A problem paired with a resiliency bound `f`: the number of crashes the
/// solver (or an oracle for it) must tolerate. Requires `0 <= f <= n`; at
/// `f = n` an oracle for the task owes answers from the very first query
/// (its obligation threshold `n - f` is zero).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTask {
    problem: AgreementProblem,
    resiliency: u32,
}

impl AgreementTask {
    pub fn new(problem: AgreementProblem, resiliency: u32) -> Result<Self, TaskError> {
        let n = problem.processes().len();
        if resiliency as usize > n {
            return Err(TaskError::ResiliencyOutOfRange { f: resiliency, n });
        }
        Ok(AgreementTask {
            problem,
            resiliency,
        })
    }

    pub fn problem(&self) -> &AgreementProblem {
        &self.problem
    }

    pub fn resiliency(&self) -> u32 {
        self.resiliency
    }
}

impl fmt::Display for AgreementTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(n={}, f={})",
            self.problem.kind(),
            self.problem.processes().len(),
            self.resiliency
        )
    }
}

/// A bijective renaming of process identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Renaming {
    map: BTreeMap<ProcessId, ProcessId>,
}

impl Renaming {
    pub fn new(map: BTreeMap<ProcessId, ProcessId>) -> Result<Self, TaskError> {
        let image: BTreeSet<ProcessId> = map.values().copied().collect();
        if image.len() != map.len() {
            return Err(TaskError::NotABijection);
        }
        Ok(Renaming { map })
    }

    pub fn identity(set: &ProcessSet) -> Self {
        Renaming {
            map: set.iter().map(|p| (p, p)).collect(),
        }
    }

    pub fn domain(&self) -> ProcessSet {
        self.map.keys().copied().collect()
    }

    pub fn image(&self) -> ProcessSet {
        self.map.values().copied().collect()
    }

    pub fn apply(&self, p: ProcessId) -> Option<ProcessId> {
        self.map.get(&p).copied()
    }

    pub fn inverse(&self) -> Renaming {
        Renaming {
            map: self.map.iter().map(|(k, v)| (*v, *k)).collect(),
        }
    }

    pub fn rename_set(&self, set: &ProcessSet) -> Result<ProcessSet, TaskError> {
        set.iter()
            .map(|p| self.apply(p).ok_or(TaskError::UnknownProcess(p)))
            .collect::<Result<_, _>>()
    }

    pub fn rename_pattern(&self, pattern: &FailurePattern) -> Result<FailurePattern, TaskError> {
        let universe = self.rename_set(pattern.universe())?;
        let crashes = pattern
            .crashes()
            .iter()
            .map(|(p, c)| {
                self.apply(*p)
                    .map(|q| (q, *c))
                    .ok_or(TaskError::UnknownProcess(*p))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        FailurePattern::new(universe, crashes)
    }

    pub fn rename_inputs(&self, inputs: &InputVector) -> Result<InputVector, TaskError> {
        let values = inputs
            .values()
            .iter()
            .map(|(p, v)| {
                self.apply(*p)
                    .map(|q| (q, *v))
                    .ok_or(TaskError::UnknownProcess(*p))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        Ok(InputVector { values })
    }
}

/// A problem with renamed processes, evaluated by pulling arguments back
/// through the inverse renaming.
pub struct Renamed<'a, P: ProblemEval> {
    inner: &'a P,
    processes: ProcessSet,
    inverse: Renaming,
}

/// Rename `problem` along `phi`, whose domain must be the problem's process
/// set. The renamed problem allows exactly the values the original allows on
/// the pulled-back failure pattern and input vector.
pub fn rename_problem<'a, P: ProblemEval>(
    problem: &'a P,
    phi: &Renaming,
) -> Result<Renamed<'a, P>, TaskError> {
    if phi.domain() != *problem.processes() {
        return Err(TaskError::RenamingDomainMismatch);
    }
    Ok(Renamed {
        inner: problem,
        processes: phi.image(),
        inverse: phi.inverse(),
    })
}

impl<P: ProblemEval> ProblemEval for Renamed<'_, P> {
    fn processes(&self) -> &ProcessSet {
        &self.processes
    }

    fn domain(&self) -> &ValueDomain {
        self.inner.domain()
    }

    fn allowed(&self, pattern: &FailurePattern, inputs: &InputVector) -> BTreeSet<Value> {
        let pattern = self
            .inverse
            .rename_pattern(pattern)
            .expect("pattern is over the renamed process set");
        let inputs = self
            .inverse
            .rename_inputs(inputs)
            .expect("inputs are over the renamed process set");
        self.inner.allowed(&pattern, &inputs)
    }
}

fn permutations(items: &[ProcessId]) -> Vec<Vec<ProcessId>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &head) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// All failure patterns over `universe` whose crash times lie below `horizon`.
/// Every proper subset of the universe appears as the faulty set, with every
/// combination of crash times in `0..horizon`.
pub fn enumerate_failure_patterns(universe: &ProcessSet, horizon: TimeStep) -> Vec<FailurePattern> {
    let members: Vec<ProcessId> = universe.iter().collect();
    let mut out = Vec::new();
    for k in 0..members.len() {
        for faulty in ProcessSet::new(members.iter().copied()).subsets_of_size(k) {
            let faulty_list: Vec<ProcessId> = faulty.iter().collect();
            let mut times = vec![0 as TimeStep; faulty_list.len()];
            loop {
                let crashes: BTreeMap<ProcessId, TimeStep> = faulty_list
                    .iter()
                    .copied()
                    .zip(times.iter().copied())
                    .collect();
                out.push(
                    FailurePattern::new(universe.clone(), crashes)
                        .expect("proper subset leaves a survivor"),
                );
                // Odometer over crash-time assignments.
                let mut i = 0;
                loop {
                    if i == times.len() {
                        break;
                    }
                    times[i] += 1;
                    if times[i] < horizon {
                        break;
                    }
                    times[i] = 0;
                    i += 1;
                }
                if i == times.len() {
                    break;
                }
            }
            if faulty_list.is_empty() {
                // The empty subset has exactly one time assignment.
                continue;
            }
        }
    }
    out
}

/// All total input vectors over `processes` with values drawn from `domain`.
pub fn enumerate_input_vectors(processes: &ProcessSet, domain: &ValueDomain) -> Vec<InputVector> {
    let members: Vec<ProcessId> = processes.iter().collect();
    let values: Vec<Value> = domain.iter().collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; members.len()];
    loop {
        let map: BTreeMap<ProcessId, Value> = members
            .iter()
            .copied()
            .zip(idx.iter().map(|i| values[*i]))
            .collect();
        out.push(InputVector { values: map });
        let mut i = 0;
        loop {
            if i == idx.len() {
                return out;
            }
            idx[i] += 1;
            if idx[i] < values.len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Exhaustively check that `problem` is invariant under every permutation of
/// its processes: for each permutation `phi`, the renamed problem must allow
/// the same decision sets as the original on every failure pattern (crash
/// times below `horizon`) and every input vector. Exponential in the number of
/// processes; intended for `n <= 4` and small domains.
pub fn is_symmetric<P: ProblemEval>(problem: &P, horizon: TimeStep) -> bool {
    let members: Vec<ProcessId> = problem.processes().iter().collect();
    let patterns = enumerate_failure_patterns(problem.processes(), horizon.max(1));
    let inputs = enumerate_input_vectors(problem.processes(), problem.domain());
    for perm in permutations(&members) {
        let phi = Renaming::new(members.iter().copied().zip(perm).collect())
            .expect("permutations are bijections");
        let renamed = rename_problem(problem, &phi).expect("domain matches");
        for pattern in &patterns {
            for vector in &inputs {
                if renamed.allowed(pattern, vector) != problem.allowed(pattern, vector) {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(n: u32) -> ProcessId {
        ProcessId(n)
    }

    fn inputs_of(pairs: &[(u32, u32)]) -> InputVector {
        let procs: ProcessSet = pairs.iter().map(|(p, _)| pid(*p)).collect();
        InputVector::new(
            &procs,
            pairs.iter().map(|(p, v)| (pid(*p), Value(*v))).collect(),
        )
        .unwrap()
    }

    fn pattern_of(universe: &[u32], crashes: &[(u32, TimeStep)]) -> FailurePattern {
        FailurePattern::new(
            ProcessSet::new(universe.iter().map(|p| pid(*p))),
            crashes.iter().map(|(p, t)| (pid(*p), *t)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn consensus_allows_exactly_the_input_values() {
        let v = inputs_of(&[(1, 0), (2, 1), (3, 1)]);
        let allowed = allowed_values_cons(&v);
        assert_eq!(allowed, [ZERO, ONE].into_iter().collect());

        let same = inputs_of(&[(1, 7), (2, 7)]);
        assert_eq!(
            allowed_values_cons(&same),
            [Value(7)].into_iter().collect()
        );
    }

    #[test]
    fn atomic_commitment_decision_table() {
        let all_one = inputs_of(&[(1, 1), (2, 1), (3, 1)]);
        let mixed = inputs_of(&[(1, 1), (2, 0), (3, 1)]);
        let clean = pattern_of(&[1, 2, 3], &[]);
        let crashy = pattern_of(&[1, 2, 3], &[(2, 4)]);

        assert_eq!(
            allowed_values_ac(&clean, &all_one),
            [ONE].into_iter().collect()
        );
        assert_eq!(
            allowed_values_ac(&crashy, &all_one),
            [ZERO, ONE].into_iter().collect()
        );
        assert_eq!(
            allowed_values_ac(&clean, &mixed),
            [ZERO].into_iter().collect()
        );
        assert_eq!(
            allowed_values_ac(&crashy, &mixed),
            [ZERO].into_iter().collect()
        );
    }

    #[test]
    fn failure_pattern_requires_a_survivor() {
        let universe = ProcessSet::contiguous(2);
        let crashes: BTreeMap<ProcessId, TimeStep> = [(pid(1), 0), (pid(2), 3)].into();
        assert_eq!(
            FailurePattern::new(universe, crashes),
            Err(TaskError::NoSurvivor)
        );
    }

    #[test]
    fn failure_pattern_is_monotone_and_gates_events() {
        let f = pattern_of(&[1, 2, 3], &[(1, 0), (3, 5)]);
        assert_eq!(f.crashed_at(0), ProcessSet::new([pid(1)]));
        assert_eq!(f.crashed_at(4), ProcessSet::new([pid(1)]));
        assert_eq!(f.crashed_at(5), ProcessSet::new([pid(1), pid(3)]));
        assert_eq!(f.faulty(), ProcessSet::new([pid(1), pid(3)]));
        assert_eq!(f.correct(), ProcessSet::new([pid(2)]));
        assert!(!f.allows_event(pid(1), 0));
        assert!(f.allows_event(pid(3), 4));
        assert!(!f.allows_event(pid(3), 5));
        assert!(f.allows_event(pid(2), 1_000_000));
    }

    #[test]
    fn renaming_must_be_bijective() {
        let squash: BTreeMap<ProcessId, ProcessId> = [(pid(1), pid(3)), (pid(2), pid(3))].into();
        assert_eq!(Renaming::new(squash), Err(TaskError::NotABijection));
    }

    #[test]
    fn renaming_round_trips_through_inverse() {
        let phi = Renaming::new([(pid(1), pid(2)), (pid(2), pid(3)), (pid(3), pid(1))].into())
            .unwrap();
        let f = pattern_of(&[1, 2, 3], &[(1, 4)]);
        let renamed = phi.rename_pattern(&f).unwrap();
        assert_eq!(renamed.crash_time(pid(2)), Some(4));
        assert_eq!(phi.inverse().rename_pattern(&renamed).unwrap(), f);
    }

    #[test]
    fn built_in_problems_are_symmetric() {
        for n in 2..=4 {
            let procs = ProcessSet::contiguous(n);
            let cons =
                AgreementProblem::consensus(procs.clone(), ValueDomain::binary()).unwrap();
            let ac = AgreementProblem::atomic_commitment(procs).unwrap();
            assert!(is_symmetric(&cons, 2), "consensus n={n}");
            assert!(is_symmetric(&ac, 2), "atomic commitment n={n}");
        }
    }

    /// A problem that always decides process 1's input: not symmetric.
    struct Dictatorship {
        procs: ProcessSet,
        domain: ValueDomain,
    }

    impl ProblemEval for Dictatorship {
        fn processes(&self) -> &ProcessSet {
            &self.procs
        }
        fn domain(&self) -> &ValueDomain {
            &self.domain
        }
        fn allowed(&self, _f: &FailurePattern, v: &InputVector) -> BTreeSet<Value> {
            [v.get(pid(1)).unwrap()].into_iter().collect()
        }
    }

    #[test]
    fn dictatorship_is_not_symmetric() {
        let d = Dictatorship {
            procs: ProcessSet::contiguous(3),
            domain: ValueDomain::binary(),
        };
        assert!(!is_symmetric(&d, 2));
    }

    #[test]
    fn task_rejects_out_of_range_resiliency() {
        let procs = ProcessSet::contiguous(3);
        let p = AgreementProblem::consensus(procs, ValueDomain::binary()).unwrap();
        assert!(AgreementTask::new(p.clone(), 0).is_ok());
        assert!(AgreementTask::new(p.clone(), 3).is_ok());
        assert_eq!(
            AgreementTask::new(p, 4),
            Err(TaskError::ResiliencyOutOfRange { f: 4, n: 3 })
        );
    }

    #[test]
    fn enumeration_counts_for_three_processes() {
        let procs = ProcessSet::contiguous(3);
        // Subsets of size 0..=2, horizon 2: 1 + 3*2 + 3*4 = 19 patterns.
        assert_eq!(enumerate_failure_patterns(&procs, 2).len(), 19);
        assert_eq!(
            enumerate_input_vectors(&procs, &ValueDomain::binary()).len(),
            8
        );
        assert_eq!(procs.subsets_of_size(2).len(), 3);
    }

    proptest! {
        #[test]
        fn ac_allowed_is_nonempty_and_binary(
            bits in 0u64..8,
            crash_mask in 0u64..4,
        ) {
            let procs = ProcessSet::contiguous(3);
            let v = InputVector::from_bits(&procs, bits);
            let crashes: BTreeMap<ProcessId, TimeStep> = (0..2)
                .filter(|i| crash_mask & (1 << i) != 0)
                .map(|i| (pid(i as u32 + 1), 0))
                .collect();
            let f = FailurePattern::new(procs, crashes).unwrap();
            let allowed = allowed_values_ac(&f, &v);
            prop_assert!(!allowed.is_empty());
            prop_assert!(allowed.iter().all(|v| *v == ZERO || *v == ONE));
            // Commit is only ever allowed on unanimous 1 inputs.
            if allowed.contains(&ONE) {
                prop_assert_eq!(bits, 7);
            }
        }

        #[test]
        fn cons_allowed_equals_input_values(bits in 0u64..16) {
            let procs = ProcessSet::contiguous(4);
            let v = InputVector::from_bits(&procs, bits);
            let allowed = allowed_values_cons(&v);
            prop_assert_eq!(allowed, v.value_set());
        }

        #[test]
        fn renamed_problem_allows_same_sets_under_pullback(
            bits in 0u64..8,
            rot in 0usize..3,
        ) {
            let procs = ProcessSet::contiguous(3);
            let members: Vec<ProcessId> = procs.iter().collect();
            let phi = Renaming::new(
                members.iter().enumerate()
                    .map(|(i, p)| (*p, members[(i + rot) % members.len()]))
                    .collect(),
            ).unwrap();
            let ac = AgreementProblem::atomic_commitment(procs.clone()).unwrap();
            let renamed = rename_problem(&ac, &phi).unwrap();
            let v = InputVector::from_bits(&procs, bits);
            let f = FailurePattern::failure_free(procs).unwrap();
            // Rotations fix the set {1,2,3}, so both sides are evaluable on
            // the same arguments.
            prop_assert_eq!(
                renamed.allowed(&f, &v),
                ac.allowed(
                    &phi.inverse().rename_pattern(&f).unwrap(),
                    &phi.inverse().rename_inputs(&v).unwrap(),
                )
            );
        }
    }
}
