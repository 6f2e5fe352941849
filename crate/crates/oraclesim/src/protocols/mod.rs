//! Ready-made oracle-backed agreement algorithms.
//!
//! Each builder assembles a [`ProtocolInstance`]: the process set, one
//! deterministic automaton per process, the sanctuaries they consult, and the
//! agreement task the ensemble is supposed to solve (what the verifier judges
//! the run against). The catalogue:
//!
//! * [`build_sync_k_reduction`]: synchronous rounds of input exchange
//!   followed by one consensus consultation, solving atomic commitment.
//! * [`build_cstar`]: commitment oracles on every size-`n` subset of `n + f`
//!   processes, combined by maximum, solving consensus with `f` extra
//!   processes.
//! * [`build_ac_plus_one`]: two overlapping commitment oracles covering
//!   `n + 1` processes, combined by minimum, solving commitment for one
//!   process more than either oracle serves.
//! * [`build_cons_shrink`]: a consensus oracle on an `n`-process kernel whose
//!   verdict is relayed to an outsider, solving consensus on `n + 1`
//!   processes.
//! * [`build_cons_grow`]: a consensus oracle with one consultant that never
//!   runs; everyone asks once and decides the answer, with no messages at
//!   all.
//! * [`build_derand_benor`]: a commitment probe that either certifies a
//!   failure-free all-ones exchange or falls back to deterministic voting
//!   rounds, solving consensus for a single crash.
//! * [`build_naive_guarded`]: a deliberately broken single-oracle attempt at
//!   commitment for `n + 1` processes; it races an outsider's vote against
//!   the members' consultation and loses on some fair schedules.
//!
//! Invariants the builders maintain: every automaton's broadcasts are staged
//! in an outbox and drained one message per step, so the engine's step shape
//! (at most one send per event) is respected; queries are gated on an empty
//! outbox, so a process finishes telling peers what it knows before it
//! commits to a consultation; verdict slots are numbered identically across
//! processes, so any two processes combining a full slot vector compute the
//! same decision.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::oracle::{OracleError, Sanctuary, SanctuaryId};
use crate::runtime::automaton::{Automaton, QuerySpec, Transition, WithHalting};
use crate::runtime::sync::RoundProgram;
use crate::runtime::{Message, MsgBody, RoundPhase, Run};
use crate::task::{
    AgreementProblem, AgreementTask, ProcessId, ProcessSet, TaskError, Value, ValueDomain,
};

/// Why a builder refused its parameters.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid protocol parameters: {detail}")]
    BadParameters { detail: String },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// An asynchronous algorithm ready to run: automata, sanctuaries, and the
/// task the run is judged against.
#[derive(Debug, Clone)]
pub struct ProtocolInstance<A: Automaton> {
    pub name: String,
    pub processes: ProcessSet,
    pub automata: BTreeMap<ProcessId, A>,
    pub sanctuaries: Vec<Sanctuary>,
    pub task: AgreementTask,
}

impl<A: Automaton> ProtocolInstance<A> {
    /// Wrap every automaton so processes notify their peers and halt after
    /// deciding. Infinite algorithms (the voting rounds, say) only quiesce
    /// in this form.
    pub fn with_halting(self) -> ProtocolInstance<WithHalting<A>> {
        let ProtocolInstance {
            name,
            processes,
            automata,
            sanctuaries,
            task,
        } = self;
        let automata = automata
            .into_iter()
            .map(|(p, a)| {
                let peers: Vec<ProcessId> = processes.iter().filter(|q| *q != p).collect();
                (p, WithHalting::new(a, peers))
            })
            .collect();
        ProtocolInstance {
            name,
            processes,
            automata,
            sanctuaries,
            task,
        }
    }
}

/// A synchronous algorithm ready to run: one round program per process and
/// the single sanctuary consulted after the rounds.
#[derive(Debug, Clone)]
pub struct SyncProtocolInstance<P: RoundProgram> {
    pub name: String,
    pub processes: ProcessSet,
    pub programs: BTreeMap<ProcessId, P>,
    pub sanctuary: Sanctuary,
    pub task: AgreementTask,
}

fn contiguous(from: u32, to: u32) -> ProcessSet {
    ProcessSet::new((from..=to).map(ProcessId))
}

fn others(all: &ProcessSet, me: ProcessId) -> Vec<ProcessId> {
    all.iter().filter(|q| *q != me).collect()
}

// ---------------------------------------------------------------------------
// Subset consultation: the shape shared by four of the reductions.
// ---------------------------------------------------------------------------

/// How a full vector of slot verdicts becomes a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineRule {
    /// Decide the largest verdict (any slot that committed wins).
    MaxVerdict,
    /// Decide the smallest verdict (any slot that aborted wins).
    MinVerdict,
}

/// Walks a shared list of sanctuaries, querying those whose consultant set
/// contains this process (always with the original input), broadcasting each
/// answer as a slot verdict, and deciding once every slot is filled.
///
/// The walk order is shared by all processes, which is what keeps the
/// consultations deadlock-free: the earliest sanctuary still waiting for
/// queries always has every correct consultant either already enqueued on it
/// or walking toward it, never parked behind a later slot.
#[derive(Debug, Clone)]
pub struct SubsetConsultAutomaton {
    me: ProcessId,
    /// Recipients of verdict broadcasts. Empty for algorithms that share
    /// nothing (everyone consults every slot themselves).
    peers: Vec<ProcessId>,
    /// Canonical slot list: slot `j` (1-based) is `subsets[j - 1]`.
    subsets: Vec<(SanctuaryId, ProcessSet)>,
    /// The shared walk order, indices into `subsets`.
    consult_order: Vec<usize>,
    combine: CombineRule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetConsultState {
    input: Value,
    /// Position in the walk order, normalized past slots this process is not
    /// a consultant of.
    pos: usize,
    verdicts: BTreeMap<u32, Value>,
    outbox: VecDeque<Message>,
}

impl SubsetConsultAutomaton {
    fn normalize(&self, mut pos: usize) -> usize {
        while pos < self.consult_order.len()
            && !self.subsets[self.consult_order[pos]].1.contains(self.me)
        {
            pos += 1;
        }
        pos
    }
}

impl Automaton for SubsetConsultAutomaton {
    type State = SubsetConsultState;

    fn initial(&self, v: Value) -> SubsetConsultState {
        SubsetConsultState {
            input: v,
            pos: self.normalize(0),
            verdicts: BTreeMap::new(),
            outbox: VecDeque::new(),
        }
    }

    fn query(&self, s: &SubsetConsultState) -> Option<QuerySpec> {
        if !s.outbox.is_empty() || s.pos >= self.consult_order.len() {
            return None;
        }
        Some(QuerySpec {
            sanctuary: self.subsets[self.consult_order[s.pos]].0.clone(),
            value: s.input,
        })
    }

    fn transition(
        &self,
        s: &SubsetConsultState,
        m: Option<&MsgBody>,
        d: Option<Value>,
    ) -> Transition<SubsetConsultState> {
        let mut next = s.clone();
        if let Some(MsgBody::Verdict { slot, value }) = m {
            // Oracle agreement makes duplicates consistent; keep the first.
            next.verdicts.entry(*slot).or_insert(*value);
        }
        if let Some(v) = d {
            let slot = self.consult_order[next.pos] as u32 + 1;
            next.verdicts.entry(slot).or_insert(v);
            for peer in &self.peers {
                next.outbox.push_back(Message {
                    dest: *peer,
                    body: MsgBody::Verdict { slot, value: v },
                });
            }
            next.pos = self.normalize(next.pos + 1);
        }
        let send = next.outbox.pop_front();
        Transition { next, send }
    }

    fn decision(&self, s: &SubsetConsultState) -> Option<Value> {
        if s.verdicts.len() < self.subsets.len() {
            return None;
        }
        let values = s.verdicts.values().copied();
        match self.combine {
            CombineRule::MaxVerdict => values.max(),
            CombineRule::MinVerdict => values.min(),
        }
    }

    fn is_halted(&self, _s: &SubsetConsultState) -> bool {
        false
    }
}

fn subset_consult_instance(
    name: &str,
    processes: ProcessSet,
    subsets: Vec<(SanctuaryId, ProcessSet)>,
    broadcast: bool,
    combine: CombineRule,
    task: AgreementTask,
) -> ProtocolInstance<SubsetConsultAutomaton> {
    let automata = processes
        .iter()
        .map(|p| {
            let peers = if broadcast {
                others(&processes, p)
            } else {
                Vec::new()
            };
            (
                p,
                SubsetConsultAutomaton {
                    me: p,
                    peers,
                    subsets: subsets.clone(),
                    consult_order: (0..subsets.len()).collect(),
                    combine,
                },
            )
        })
        .collect();
    ProtocolInstance {
        name: name.to_string(),
        processes,
        automata,
        sanctuaries: Vec::new(),
        task,
    }
}

/// Consensus for `n + f` processes from commitment oracles for `n`: one
/// oracle per size-`n` subset, walked in a shared order; decide the maximum
/// slot verdict. All-zero inputs abort every slot; all-one inputs with at
/// most `f` crashes leave some subset failure-free, whose oracle must
/// commit.
pub fn build_cstar(
    n: u32,
    f: u32,
) -> Result<ProtocolInstance<SubsetConsultAutomaton>, ProtocolError> {
    let order: Vec<usize> = (0..subset_count(n, f)?).collect();
    build_cstar_with_order(n, f, &order)
}

fn subset_count(n: u32, f: u32) -> Result<usize, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::BadParameters {
            detail: "subset consultation needs at least one process per oracle".to_string(),
        });
    }
    if f == 0 || f > n {
        return Err(ProtocolError::BadParameters {
            detail: format!("extra-process count must satisfy 1 <= f <= n, got f={f} n={n}"),
        });
    }
    let total = contiguous(1, n + f);
    Ok(total.subsets_of_size(n as usize).len())
}

/// [`build_cstar`] with an explicit walk order (a permutation of the
/// canonical lexicographic slot indices). Decisions do not depend on the
/// order; the permuted builder exists so that claim can be tested.
pub fn build_cstar_with_order(
    n: u32,
    f: u32,
    order: &[usize],
) -> Result<ProtocolInstance<SubsetConsultAutomaton>, ProtocolError> {
    let m = subset_count(n, f)?;
    let mut seen = vec![false; m];
    for &i in order {
        if i >= m || seen[i] {
            return Err(ProtocolError::BadParameters {
                detail: format!("walk order must be a permutation of 0..{m}"),
            });
        }
        seen[i] = true;
    }
    if order.len() != m {
        return Err(ProtocolError::BadParameters {
            detail: format!("walk order must list all {m} slots"),
        });
    }

    let processes = contiguous(1, n + f);
    let mut subsets = Vec::with_capacity(m);
    let mut sanctuaries = Vec::with_capacity(m);
    for (j, members) in processes.subsets_of_size(n as usize).into_iter().enumerate() {
        let id = SanctuaryId::new(format!("sigma{}", j + 1))?;
        let task = AgreementTask::new(AgreementProblem::atomic_commitment(members.clone())?, f)?;
        sanctuaries.push(Sanctuary::new(id.clone(), task));
        subsets.push((id, members));
    }
    let task = AgreementTask::new(
        AgreementProblem::consensus(processes.clone(), ValueDomain::binary())?,
        f,
    )?;
    let mut instance = subset_consult_instance(
        "cstar",
        processes,
        subsets,
        true,
        CombineRule::MaxVerdict,
        task,
    );
    for a in instance.automata.values_mut() {
        a.consult_order = order.to_vec();
    }
    instance.sanctuaries = sanctuaries;
    Ok(instance)
}

/// Commitment for `n + 1` processes from two commitment oracles for `n`:
/// one covers processes `1..=n`, the other `2..=n + 1`, and every process
/// decides the minimum of the two slot verdicts. Any zero vote lands in at
/// least one oracle, which then aborts and drags the minimum to zero.
pub fn build_ac_plus_one(
    n: u32,
    f: u32,
) -> Result<ProtocolInstance<SubsetConsultAutomaton>, ProtocolError> {
    if n < 2 {
        return Err(ProtocolError::BadParameters {
            detail: "the overlapping oracles need n >= 2 so they share a process".to_string(),
        });
    }
    if f == 0 || f >= n {
        return Err(ProtocolError::BadParameters {
            detail: format!(
                "resiliency must satisfy 1 <= f <= n - 1 so each oracle keeps a survivor, got f={f} n={n}"
            ),
        });
    }
    let processes = contiguous(1, n + 1);
    let mut subsets = Vec::new();
    let mut sanctuaries = Vec::new();
    for (j, members) in [contiguous(1, n), contiguous(2, n + 1)].into_iter().enumerate() {
        let id = SanctuaryId::new(format!("sigma{}", j + 1))?;
        let task = AgreementTask::new(AgreementProblem::atomic_commitment(members.clone())?, f)?;
        sanctuaries.push(Sanctuary::new(id.clone(), task));
        subsets.push((id, members));
    }
    let task = AgreementTask::new(AgreementProblem::atomic_commitment(processes.clone())?, f)?;
    let mut instance = subset_consult_instance(
        "ac_plus_one",
        processes,
        subsets,
        true,
        CombineRule::MinVerdict,
        task,
    );
    instance.sanctuaries = sanctuaries;
    Ok(instance)
}

/// Consensus for `n + 1` processes from a consensus oracle for `n`: the
/// kernel `1..=n` consults and broadcasts the verdict; the outsider decides
/// the first verdict it hears and never sends anything.
pub fn build_cons_shrink(
    n: u32,
    f: u32,
) -> Result<ProtocolInstance<SubsetConsultAutomaton>, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::BadParameters {
            detail: "the kernel needs at least one process".to_string(),
        });
    }
    if f == 0 || f >= n {
        return Err(ProtocolError::BadParameters {
            detail: format!(
                "resiliency must satisfy 1 <= f <= n - 1 so the kernel keeps a survivor, got f={f} n={n}"
            ),
        });
    }
    let processes = contiguous(1, n + 1);
    let kernel = contiguous(1, n);
    let id = SanctuaryId::new("sigma")?;
    let oracle_task = AgreementTask::new(
        AgreementProblem::consensus(kernel.clone(), ValueDomain::binary())?,
        f,
    )?;
    let sanctuary = Sanctuary::new(id.clone(), oracle_task);
    let task = AgreementTask::new(
        AgreementProblem::consensus(processes.clone(), ValueDomain::binary())?,
        f,
    )?;
    let mut instance = subset_consult_instance(
        "cons_shrink",
        processes,
        vec![(id, kernel)],
        true,
        CombineRule::MaxVerdict,
        task,
    );
    instance.sanctuaries = vec![sanctuary];
    Ok(instance)
}

/// Consensus for `n` processes from a consensus oracle for `n + 1` tolerating
/// one more crash: the extra consultant never runs (it counts as crashed from
/// the start), everyone asks with their input and decides the answer. No
/// messages are exchanged at all.
pub fn build_cons_grow(
    n: u32,
    f: u32,
) -> Result<ProtocolInstance<SubsetConsultAutomaton>, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::BadParameters {
            detail: "the algorithm needs at least one process".to_string(),
        });
    }
    if f >= n {
        return Err(ProtocolError::BadParameters {
            detail: format!(
                "resiliency must satisfy 0 <= f <= n - 1 so a consultant survives, got f={f} n={n}"
            ),
        });
    }
    let processes = contiguous(1, n);
    let consultants = contiguous(1, n + 1);
    let id = SanctuaryId::new("sigma")?;
    let oracle_task = AgreementTask::new(
        AgreementProblem::consensus(consultants.clone(), ValueDomain::binary())?,
        f + 1,
    )?;
    let sanctuary = Sanctuary::new(id.clone(), oracle_task);
    let task = AgreementTask::new(
        AgreementProblem::consensus(processes.clone(), ValueDomain::binary())?,
        f,
    )?;
    let mut instance = subset_consult_instance(
        "cons_grow",
        processes,
        vec![(id, consultants)],
        false,
        CombineRule::MaxVerdict,
        task,
    );
    instance.sanctuaries = vec![sanctuary];
    Ok(instance)
}

// ---------------------------------------------------------------------------
// Synchronous exchange rounds in front of one consensus consultation.
// ---------------------------------------------------------------------------

/// The synchronous round program: post the input every round, remember every
/// sender, and ask the sanctuary to commit exactly when all `n` inputs were
/// heard and every one of them is 1.
#[derive(Debug, Clone)]
pub struct ExchangeRound {
    n: u32,
    rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeRoundState {
    input: Value,
    heard: BTreeMap<ProcessId, Value>,
}

impl RoundProgram for ExchangeRound {
    type State = ExchangeRoundState;

    fn init(&self, p: ProcessId, input: Value) -> ExchangeRoundState {
        let mut heard = BTreeMap::new();
        heard.insert(p, input);
        ExchangeRoundState { input, heard }
    }

    fn rounds(&self) -> u32 {
        self.rounds
    }

    fn message(&self, s: &ExchangeRoundState, _r: u32) -> Value {
        s.input
    }

    fn absorb_round(
        &self,
        s: &ExchangeRoundState,
        _r: u32,
        received: &BTreeMap<ProcessId, Value>,
    ) -> ExchangeRoundState {
        let mut next = s.clone();
        next.heard.extend(received.iter().map(|(p, v)| (*p, *v)));
        next
    }

    fn query_value(&self, s: &ExchangeRoundState) -> Value {
        let unanimous =
            s.heard.len() == self.n as usize && s.heard.values().all(|v| *v == Value(1));
        Value(u32::from(unanimous))
    }
}

/// Commitment for `n` processes from one consensus oracle, in a synchronous
/// system: `rounds` rounds of posting inputs, then everyone asks the oracle
/// to commit exactly when it heard all `n` inputs and they are all 1. A
/// missing or zero input forces a zero query, and the oracle's agreement
/// carries everyone to the same verdict.
pub fn build_sync_k_reduction(
    n: u32,
    f: u32,
    rounds: u32,
) -> Result<SyncProtocolInstance<ExchangeRound>, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::BadParameters {
            detail: "the exchange needs at least one process".to_string(),
        });
    }
    if f >= n {
        return Err(ProtocolError::BadParameters {
            detail: format!(
                "resiliency must satisfy 0 <= f <= n - 1 so a consultant survives, got f={f} n={n}"
            ),
        });
    }
    if rounds == 0 {
        return Err(ProtocolError::BadParameters {
            detail: "at least one exchange round is required".to_string(),
        });
    }
    let processes = contiguous(1, n);
    let id = SanctuaryId::new("sigma")?;
    let oracle_task = AgreementTask::new(
        AgreementProblem::consensus(processes.clone(), ValueDomain::binary())?,
        f,
    )?;
    let sanctuary = Sanctuary::new(id, oracle_task);
    let task = AgreementTask::new(AgreementProblem::atomic_commitment(processes.clone())?, f)?;
    let programs = processes
        .iter()
        .map(|p| (p, ExchangeRound { n, rounds }))
        .collect();
    Ok(SyncProtocolInstance {
        name: "sync_k".to_string(),
        processes,
        programs,
        sanctuary,
        task,
    })
}

// ---------------------------------------------------------------------------
// The commitment probe with deterministic voting rounds behind it.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProbeStage {
    /// Draining the initial input broadcasts.
    Seeding,
    /// Outbox empty; the next step queries the probe.
    Probing,
    /// Probe committed: wait for all inputs and decide their minimum.
    AwaitInputs,
    /// Voting round: wait for enough reports, then propose.
    AwaitReports,
    /// Voting round: wait for enough proposals, then decide, adopt, or fall
    /// back to zero.
    AwaitProposals,
}

/// Consensus for one crash from a commitment probe. Everyone broadcasts its
/// input (to itself too), then asks the commitment oracle with a constant 1.
/// A committed probe certifies that every process queried, hence finished
/// broadcasting, so waiting for all `n` inputs terminates and their minimum
/// is a safe unanimous decision. An aborted probe falls back to voting
/// rounds: report your estimate, propose a value seen in a strict majority
/// of the fixed `n` (or pass), then decide on two concurring proposals,
/// adopt a single one, and reset the estimate to zero when every proposal
/// passed. Deciders keep voting so laggards never starve; wrap the automata
/// with halting to make runs quiesce.
#[derive(Debug, Clone)]
pub struct ProbeRoundsAutomaton {
    me: ProcessId,
    everyone: Vec<ProcessId>,
    n: u32,
    sanctuary: SanctuaryId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeRoundsState {
    x: Value,
    stage: ProbeStage,
    inputs_heard: BTreeMap<ProcessId, Value>,
    reports: BTreeMap<u32, BTreeMap<ProcessId, Value>>,
    proposals: BTreeMap<u32, BTreeMap<ProcessId, Option<Value>>>,
    round: u32,
    decided: Option<Value>,
    outbox: VecDeque<Message>,
}

impl ProbeRoundsAutomaton {
    fn broadcast(&self, outbox: &mut VecDeque<Message>, body: MsgBody) {
        for dest in &self.everyone {
            outbox.push_back(Message {
                dest: *dest,
                body: body.clone(),
            });
        }
    }

    fn enter_round(&self, s: &mut ProbeRoundsState, r: u32) {
        s.round = r;
        s.stage = ProbeStage::AwaitReports;
        self.broadcast(
            &mut s.outbox,
            MsgBody::Round {
                from: self.me,
                phase: RoundPhase::Report,
                value: Some(s.x),
                round: r,
            },
        );
    }

    /// Move through every stage whose wait is already satisfied. Stops as
    /// soon as the outbox is nonempty: the pending broadcasts drain first.
    fn advance(&self, s: &mut ProbeRoundsState) {
        let quota = (self.n - 1) as usize;
        loop {
            if !s.outbox.is_empty() {
                return;
            }
            match s.stage {
                ProbeStage::Seeding => {
                    s.stage = ProbeStage::Probing;
                    return;
                }
                ProbeStage::Probing => return,
                ProbeStage::AwaitInputs => {
                    if s.inputs_heard.len() == self.n as usize {
                        let min = s.inputs_heard.values().copied().min();
                        if s.decided.is_none() {
                            s.decided = min;
                        }
                    }
                    return;
                }
                ProbeStage::AwaitReports => {
                    let heard = s.reports.get(&s.round).map_or(0, |m| m.len());
                    if heard < quota {
                        return;
                    }
                    let reports = &s.reports[&s.round];
                    let proposal = [Value(0), Value(1)]
                        .into_iter()
                        .find(|v| 2 * reports.values().filter(|w| *w == v).count() > self.n as usize);
                    s.stage = ProbeStage::AwaitProposals;
                    self.broadcast(
                        &mut s.outbox,
                        MsgBody::Round {
                            from: self.me,
                            phase: RoundPhase::Propose,
                            value: proposal,
                            round: s.round,
                        },
                    );
                }
                ProbeStage::AwaitProposals => {
                    let heard = s.proposals.get(&s.round).map_or(0, |m| m.len());
                    if heard < quota {
                        return;
                    }
                    let named: Vec<Value> =
                        s.proposals[&s.round].values().filter_map(|o| *o).collect();
                    match named.len() {
                        0 => s.x = Value(0),
                        1 => s.x = named[0],
                        _ => {
                            let v = named.iter().copied().min().expect("nonempty");
                            s.x = v;
                            if s.decided.is_none() {
                                s.decided = Some(v);
                            }
                        }
                    }
                    let next = s.round + 1;
                    self.enter_round(s, next);
                }
            }
        }
    }

    fn absorb(&self, s: &mut ProbeRoundsState, m: &MsgBody) {
        match m {
            MsgBody::Input { from, value } => {
                s.inputs_heard.insert(*from, *value);
            }
            MsgBody::Round {
                from,
                phase: RoundPhase::Report,
                value: Some(v),
                round,
            } => {
                s.reports.entry(*round).or_default().insert(*from, *v);
            }
            MsgBody::Round {
                from,
                phase: RoundPhase::Propose,
                value,
                round,
            } => {
                s.proposals.entry(*round).or_default().insert(*from, *value);
            }
            _ => {}
        }
    }
}

impl Automaton for ProbeRoundsAutomaton {
    type State = ProbeRoundsState;

    fn initial(&self, v: Value) -> ProbeRoundsState {
        let mut outbox = VecDeque::new();
        self.broadcast(
            &mut outbox,
            MsgBody::Input {
                from: self.me,
                value: v,
            },
        );
        ProbeRoundsState {
            x: v,
            stage: ProbeStage::Seeding,
            inputs_heard: BTreeMap::new(),
            reports: BTreeMap::new(),
            proposals: BTreeMap::new(),
            round: 0,
            decided: None,
            outbox,
        }
    }

    fn query(&self, s: &ProbeRoundsState) -> Option<QuerySpec> {
        if s.stage == ProbeStage::Probing && s.outbox.is_empty() {
            return Some(QuerySpec {
                sanctuary: self.sanctuary.clone(),
                value: Value(1),
            });
        }
        None
    }

    fn transition(
        &self,
        s: &ProbeRoundsState,
        m: Option<&MsgBody>,
        d: Option<Value>,
    ) -> Transition<ProbeRoundsState> {
        let mut next = s.clone();
        if let Some(body) = m {
            self.absorb(&mut next, body);
        }
        if let Some(answer) = d {
            if answer == Value(1) {
                next.stage = ProbeStage::AwaitInputs;
            } else {
                self.enter_round(&mut next, 1);
            }
        }
        self.advance(&mut next);
        let send = next.outbox.pop_front();
        Transition { next, send }
    }

    fn decision(&self, s: &ProbeRoundsState) -> Option<Value> {
        s.decided
    }

    fn is_halted(&self, _s: &ProbeRoundsState) -> bool {
        false
    }
}

/// Consensus for `n > 2` processes and a single crash from one commitment
/// oracle. See [`ProbeRoundsAutomaton`] for the algorithm; the voting
/// quorums assume `f = 1`, which the builder enforces.
pub fn build_derand_benor(
    n: u32,
) -> Result<ProtocolInstance<ProbeRoundsAutomaton>, ProtocolError> {
    if n <= 2 {
        return Err(ProtocolError::BadParameters {
            detail: format!("the voting quorums need n > 2, got n={n}"),
        });
    }
    let processes = contiguous(1, n);
    let id = SanctuaryId::new("sigma")?;
    let oracle_task =
        AgreementTask::new(AgreementProblem::atomic_commitment(processes.clone())?, 1)?;
    let sanctuary = Sanctuary::new(id.clone(), oracle_task);
    let task = AgreementTask::new(
        AgreementProblem::consensus(processes.clone(), ValueDomain::binary())?,
        1,
    )?;
    let automata = processes
        .iter()
        .map(|p| {
            (
                p,
                ProbeRoundsAutomaton {
                    me: p,
                    everyone: processes.iter().collect(),
                    n,
                    sanctuary: id.clone(),
                },
            )
        })
        .collect();
    Ok(ProtocolInstance {
        name: "derand_benor".to_string(),
        processes,
        automata,
        sanctuaries: vec![sanctuary],
        task,
    })
}

/// The distinct proposal values posted per voting round across a run. Two
/// different values in one round would let two processes decide
/// differently; the voting majorities are meant to exclude that, and tests
/// assert it on every explored run.
pub fn proposal_values_by_round(run: &Run) -> BTreeMap<u32, Vec<Value>> {
    let mut by_round: BTreeMap<u32, Vec<Value>> = BTreeMap::new();
    for event in &run.events {
        if let crate::runtime::EventKind::Send(Some(message)) = &event.kind {
            if let MsgBody::Round {
                phase: RoundPhase::Propose,
                value: Some(v),
                round,
                ..
            } = &message.body
            {
                let values = by_round.entry(*round).or_default();
                if !values.contains(v) {
                    values.push(*v);
                }
            }
        }
    }
    by_round
}

// ---------------------------------------------------------------------------
// The guarded single-oracle attempt that loses a race.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum GuardedRole {
    /// Consults the oracle; asks to commit only when every member input is 1
    /// and the outsider's 1 already arrived.
    Member,
    /// Broadcasts its input to the members and adopts the first verdict.
    Outsider,
}

/// A single commitment oracle serving only the members `1..=n`, pressed into
/// judging all `n + 1` processes. Members gather member inputs, then ask the
/// oracle, guarding the commit query on having already heard the outsider's
/// 1. The guard races the outsider's broadcast: a schedule that parks the
/// outsider's vote in the mailbox until the members reach their query makes
/// everyone ask 0 and abort a run that was failure-free and unanimously 1.
#[derive(Debug, Clone)]
pub struct GuardedAutomaton {
    role: GuardedRole,
    me: ProcessId,
    members: ProcessSet,
    /// Recipients of the initial input broadcast.
    input_targets: Vec<ProcessId>,
    /// Recipients of the verdict broadcast (members only; empty for the
    /// outsider).
    verdict_targets: Vec<ProcessId>,
    sanctuary: SanctuaryId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardedState {
    member_inputs: BTreeMap<ProcessId, Value>,
    outsider_input: Option<Value>,
    decided: Option<Value>,
    outbox: VecDeque<Message>,
}

impl Automaton for GuardedAutomaton {
    type State = GuardedState;

    fn initial(&self, v: Value) -> GuardedState {
        let mut member_inputs = BTreeMap::new();
        if self.role == GuardedRole::Member {
            member_inputs.insert(self.me, v);
        }
        let mut outbox = VecDeque::new();
        for dest in &self.input_targets {
            outbox.push_back(Message {
                dest: *dest,
                body: MsgBody::Input {
                    from: self.me,
                    value: v,
                },
            });
        }
        GuardedState {
            member_inputs,
            outsider_input: None,
            decided: None,
            outbox,
        }
    }

    fn query(&self, s: &GuardedState) -> Option<QuerySpec> {
        if self.role != GuardedRole::Member
            || !s.outbox.is_empty()
            || s.decided.is_some()
            || s.member_inputs.len() < self.members.len()
        {
            return None;
        }
        let all_ones = s.member_inputs.values().all(|v| *v == Value(1));
        let value = Value(u32::from(all_ones && s.outsider_input == Some(Value(1))));
        Some(QuerySpec {
            sanctuary: self.sanctuary.clone(),
            value,
        })
    }

    fn transition(
        &self,
        s: &GuardedState,
        m: Option<&MsgBody>,
        d: Option<Value>,
    ) -> Transition<GuardedState> {
        let mut next = s.clone();
        match m {
            Some(MsgBody::Input { from, value }) => {
                if self.members.contains(*from) {
                    next.member_inputs.insert(*from, *value);
                } else {
                    next.outsider_input = Some(*value);
                }
            }
            Some(MsgBody::Decision { value }) => {
                if self.role == GuardedRole::Outsider && next.decided.is_none() {
                    next.decided = Some(*value);
                }
            }
            _ => {}
        }
        if let Some(v) = d {
            next.decided = Some(v);
            for dest in &self.verdict_targets {
                next.outbox.push_back(Message {
                    dest: *dest,
                    body: MsgBody::Decision { value: v },
                });
            }
        }
        let send = next.outbox.pop_front();
        Transition { next, send }
    }

    fn decision(&self, s: &GuardedState) -> Option<Value> {
        s.decided
    }

    fn is_halted(&self, _s: &GuardedState) -> bool {
        false
    }
}

/// The broken commitment attempt for `n + 1` processes over one oracle for
/// `n`. Correct on many schedules, wrong on some: see [`GuardedAutomaton`].
pub fn build_naive_guarded(
    n: u32,
    f: u32,
) -> Result<ProtocolInstance<GuardedAutomaton>, ProtocolError> {
    if n < 2 {
        return Err(ProtocolError::BadParameters {
            detail: "the member kernel needs n >= 2".to_string(),
        });
    }
    if f == 0 || f >= n {
        return Err(ProtocolError::BadParameters {
            detail: format!(
                "resiliency must satisfy 1 <= f <= n - 1 so the oracle keeps a survivor, got f={f} n={n}"
            ),
        });
    }
    let processes = contiguous(1, n + 1);
    let members = contiguous(1, n);
    let outsider = ProcessId(n + 1);
    let id = SanctuaryId::new("sigma")?;
    let oracle_task = AgreementTask::new(AgreementProblem::atomic_commitment(members.clone())?, f)?;
    let sanctuary = Sanctuary::new(id.clone(), oracle_task);
    let task = AgreementTask::new(AgreementProblem::atomic_commitment(processes.clone())?, f)?;
    let automata = processes
        .iter()
        .map(|p| {
            let a = if p == outsider {
                GuardedAutomaton {
                    role: GuardedRole::Outsider,
                    me: p,
                    members: members.clone(),
                    input_targets: members.iter().collect(),
                    verdict_targets: Vec::new(),
                    sanctuary: id.clone(),
                }
            } else {
                GuardedAutomaton {
                    role: GuardedRole::Member,
                    me: p,
                    members: members.clone(),
                    input_targets: members.iter().filter(|q| *q != p).collect(),
                    verdict_targets: others(&processes, p),
                    sanctuary: id.clone(),
                }
            };
            (p, a)
        })
        .collect();
    Ok(ProtocolInstance {
        name: "naive_guarded".to_string(),
        processes,
        automata,
        sanctuaries: vec![sanctuary],
        task,
    })
}
