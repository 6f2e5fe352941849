//! Validated run configurations with a canonical digest.
//!
//! A [`RunConfig`] names a protocol instance, an input assignment, a failure
//! plan, a scheduler, and an oracle answer strategy. [`RunConfig::build`]
//! validates every field against the chosen protocol and returns the ready
//! pieces; validation errors carry the offending field path.
//!
//! # Invariants
//!
//! * [`RunConfig::canonical`] sorts all process-keyed lists, so configs that
//!   differ only in list order share one canonical form.
//! * [`RunConfig::digest`] is the SHA-256 of the canonical JSON; equal
//!   digests mean equal canonical configs.
//! * The canonical JSON round-trips losslessly through serde.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::oracle::{AnswerStrategy, AnswerTiming, ValuePolicy};
use crate::runtime::automaton::WithHalting;
use crate::protocols::{
    build_ac_plus_one, build_cons_grow, build_cons_shrink, build_cstar, build_derand_benor,
    build_naive_guarded, build_sync_k_reduction, ExchangeRound, GuardedAutomaton,
    ProbeRoundsAutomaton, ProtocolInstance, SubsetConsultAutomaton, SyncProtocolInstance,
};
use crate::runtime::engine::Scheduler;
use crate::runtime::sync::SyncCrashPoint;
use crate::runtime::RunMode;
use crate::task::{FailurePattern, InputVector, ProcessId, ProcessSet, TimeStep, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    /// A field failed validation; `path` names it, `detail` says why.
    #[error("{path}: {detail}")]
    Field { path: String, detail: String },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

fn field(path: impl Into<String>, detail: impl fmt::Display) -> ConfigError {
    ConfigError::Field {
        path: path.into(),
        detail: detail.to_string(),
    }
}

/// The protocols the command line can instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Cstar,
    AcPlusOne,
    ConsShrink,
    ConsGrow,
    DerandBenor,
    NaiveGuarded,
    SyncK,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 7] = [
        ProtocolName::Cstar,
        ProtocolName::AcPlusOne,
        ProtocolName::ConsShrink,
        ProtocolName::ConsGrow,
        ProtocolName::DerandBenor,
        ProtocolName::NaiveGuarded,
        ProtocolName::SyncK,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolName::Cstar => "cstar",
            ProtocolName::AcPlusOne => "ac_plus_one",
            ProtocolName::ConsShrink => "cons_shrink",
            ProtocolName::ConsGrow => "cons_grow",
            ProtocolName::DerandBenor => "derand_benor",
            ProtocolName::NaiveGuarded => "naive_guarded",
            ProtocolName::SyncK => "sync_k",
        }
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl FromStr for ProtocolName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ProtocolName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ProtocolName::ALL.iter().map(|p| p.as_str()).collect();
                format!("unknown protocol {s:?}, expected one of {}", names.join(", "))
            })
    }
}

/// One process's input value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub process: u32,
    pub value: u32,
}

/// One crash in an asynchronous failure pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub process: u32,
    pub time: TimeStep,
}

/// Where in the round structure a synchronous process crashes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncPointSpec {
    BeforeQuery,
    AfterQuery,
    DuringRound {
        round: u32,
        #[serde(default)]
        deliver_to: Vec<u32>,
    },
}

/// One crash in a synchronous run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncCrashSpec {
    pub process: u32,
    pub point: SyncPointSpec,
}

/// Scheduler choice for asynchronous runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerSpec {
    Seeded {
        seed: u64,
    },
    Fair {
        /// Round-robin order; empty means ascending process ids.
        #[serde(default)]
        queue: Vec<u32>,
    },
}

/// Oracle answer-value policy. Timing is always eager.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    #[default]
    Min,
    Max,
}

impl StrategySpec {
    pub fn to_strategy(self) -> AnswerStrategy {
        AnswerStrategy {
            value: match self {
                StrategySpec::Min => ValuePolicy::MinAllowed,
                StrategySpec::Max => ValuePolicy::MaxAllowed,
            },
            timing: AnswerTiming::Eager,
        }
    }
}

impl FromStr for StrategySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min" => Ok(StrategySpec::Min),
            "max" => Ok(StrategySpec::Max),
            other => Err(format!("unknown strategy {other:?}, expected min or max")),
        }
    }
}

fn default_rounds() -> u32 {
    1
}

/// A complete, serializable description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolName,
    pub n: u32,
    pub f: u32,
    /// Exchange rounds; only `sync_k` takes more than the default 1.
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    pub mode: RunMode,
    /// Explicit per-process inputs. Exactly one of `inputs` and
    /// `uniform_input` must be given.
    #[serde(default)]
    pub inputs: Vec<InputSpec>,
    /// Shorthand: every process gets this value.
    #[serde(default)]
    pub uniform_input: Option<u32>,
    /// Asynchronous crash plan (process, time).
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    /// Synchronous crash plan (process, round point).
    #[serde(default)]
    pub sync_crashes: Vec<SyncCrashSpec>,
    /// Missing means a seeded scheduler with the ambient default seed.
    #[serde(default)]
    pub scheduler: Option<SchedulerSpec>,
    /// Event budget for asynchronous runs. Missing means the engine
    /// default; an explicit 0 permits no actions at all, so every liveness
    /// verdict comes back flagged.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub strategy: StrategySpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// The config with all process-keyed lists sorted; the form the digest
    /// is computed over.
    pub fn canonical(&self) -> RunConfig {
        let mut c = self.clone();
        c.inputs.sort_by_key(|i| i.process);
        c.crashes.sort_by_key(|c| c.process);
        c.sync_crashes.sort_by_key(|c| c.process);
        c
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.canonical()).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_json().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in hash {
            use fmt::Write;
            write!(out, "{byte:02x}").expect("writing to a string");
        }
        out
    }

    /// Validate the config against the protocol it names and assemble
    /// everything a command needs to execute it. `default_seed` fills in
    /// when no scheduler is configured.
    pub fn build(&self, default_seed: u64) -> Result<BuiltRun, ConfigError> {
        let config = self.canonical();
        let protocol = config.instantiate()?;
        let processes = protocol.processes().clone();
        let inputs = config.build_inputs(&processes)?;
        let strategy = config.strategy.to_strategy();

        match (&config.mode, protocol) {
            (RunMode::Sync, BuiltProtocol::SyncK(instance)) => {
                if !config.crashes.is_empty() {
                    return Err(field(
                        "crashes",
                        "synchronous runs crash at round points; use sync_crashes",
                    ));
                }
                if config.budget.is_some() {
                    return Err(field(
                        "budget",
                        "synchronous runs are round-bounded and take no budget",
                    ));
                }
                if config.scheduler.is_some() {
                    return Err(field(
                        "scheduler",
                        "synchronous runs are lockstep and take no scheduler",
                    ));
                }
                let crashes = config.build_sync_crashes(&processes)?;
                Ok(BuiltRun::Sync(SyncBuild {
                    instance,
                    inputs,
                    crashes,
                    strategy,
                }))
            }
            (RunMode::Sync, other) => Err(field(
                "mode",
                format!(
                    "protocol {} is asynchronous; sync mode requires sync_k",
                    other.name()
                ),
            )),
            (RunMode::Async, BuiltProtocol::SyncK(_)) => Err(field(
                "mode",
                "protocol sync_k runs in lockstep rounds; use sync mode",
            )),
            (RunMode::Async, protocol) => {
                if !config.sync_crashes.is_empty() {
                    return Err(field(
                        "sync_crashes",
                        "asynchronous runs crash at times; use crashes",
                    ));
                }
                let pattern = config.build_pattern(&processes)?;
                let scheduler = config.build_scheduler(&processes, default_seed)?;
                Ok(BuiltRun::Async(AsyncBuild {
                    protocol,
                    inputs,
                    pattern,
                    scheduler,
                    strategy,
                    budget: config.budget,
                }))
            }
        }
    }

    fn instantiate(&self) -> Result<BuiltProtocol, ConfigError> {
        if self.protocol != ProtocolName::SyncK && self.rounds != default_rounds() {
            return Err(field(
                "rounds",
                format!("only sync_k takes a round count, not {}", self.protocol),
            ));
        }
        let into = |e: crate::protocols::ProtocolError| field("params", e);
        Ok(match self.protocol {
            ProtocolName::Cstar => BuiltProtocol::Subset(build_cstar(self.n, self.f).map_err(into)?),
            ProtocolName::AcPlusOne => {
                BuiltProtocol::Subset(build_ac_plus_one(self.n, self.f).map_err(into)?)
            }
            ProtocolName::ConsShrink => {
                BuiltProtocol::Subset(build_cons_shrink(self.n, self.f).map_err(into)?)
            }
            ProtocolName::ConsGrow => {
                BuiltProtocol::Subset(build_cons_grow(self.n, self.f).map_err(into)?)
            }
            ProtocolName::DerandBenor => {
                if self.f != 1 {
                    return Err(field(
                        "f",
                        format!("derand_benor tolerates exactly one crash, got f={}", self.f),
                    ));
                }
                BuiltProtocol::Probe(build_derand_benor(self.n).map_err(into)?.with_halting())
            }
            ProtocolName::NaiveGuarded => {
                BuiltProtocol::Guarded(build_naive_guarded(self.n, self.f).map_err(into)?)
            }
            ProtocolName::SyncK => BuiltProtocol::SyncK(
                build_sync_k_reduction(self.n, self.f, self.rounds).map_err(into)?,
            ),
        })
    }

    fn build_inputs(&self, processes: &ProcessSet) -> Result<InputVector, ConfigError> {
        match (self.uniform_input, self.inputs.is_empty()) {
            (Some(v), true) => {
                if v > 1 {
                    return Err(field("uniform_input", format!("value must be 0 or 1, got {v}")));
                }
                Ok(InputVector::uniform(processes, Value(v)))
            }
            (Some(_), false) => Err(field(
                "inputs",
                "give either uniform_input or explicit inputs, not both",
            )),
            (None, true) => Err(field(
                "inputs",
                "no input values; give inputs or uniform_input",
            )),
            (None, false) => {
                let mut values = BTreeMap::new();
                for (i, spec) in self.inputs.iter().enumerate() {
                    let p = ProcessId(spec.process);
                    if !processes.contains(p) {
                        return Err(field(
                            format!("inputs[{i}].process"),
                            format!("{p} is not one of the protocol's processes {processes}"),
                        ));
                    }
                    if spec.value > 1 {
                        return Err(field(
                            format!("inputs[{i}].value"),
                            format!("value must be 0 or 1, got {}", spec.value),
                        ));
                    }
                    if values.insert(p, Value(spec.value)).is_some() {
                        return Err(field(
                            format!("inputs[{i}].process"),
                            format!("{p} is assigned twice"),
                        ));
                    }
                }
                for p in processes.iter() {
                    if !values.contains_key(&p) {
                        return Err(field("inputs", format!("no value for process {p}")));
                    }
                }
                InputVector::new(processes, values).map_err(|e| field("inputs", e))
            }
        }
    }

    fn build_pattern(&self, processes: &ProcessSet) -> Result<FailurePattern, ConfigError> {
        let mut crashes = BTreeMap::new();
        for (i, spec) in self.crashes.iter().enumerate() {
            let p = ProcessId(spec.process);
            if !processes.contains(p) {
                return Err(field(
                    format!("crashes[{i}].process"),
                    format!("{p} is not one of the protocol's processes {processes}"),
                ));
            }
            if crashes.insert(p, spec.time).is_some() {
                return Err(field(
                    format!("crashes[{i}].process"),
                    format!("{p} crashes twice"),
                ));
            }
        }
        FailurePattern::new(processes.clone(), crashes).map_err(|e| field("crashes", e))
    }

    fn build_sync_crashes(
        &self,
        processes: &ProcessSet,
    ) -> Result<BTreeMap<ProcessId, SyncCrashPoint>, ConfigError> {
        let mut out = BTreeMap::new();
        for (i, spec) in self.sync_crashes.iter().enumerate() {
            let p = ProcessId(spec.process);
            if !processes.contains(p) {
                return Err(field(
                    format!("sync_crashes[{i}].process"),
                    format!("{p} is not one of the protocol's processes {processes}"),
                ));
            }
            let point = match &spec.point {
                SyncPointSpec::BeforeQuery => SyncCrashPoint::BeforeQuery,
                SyncPointSpec::AfterQuery => SyncCrashPoint::AfterQuery,
                SyncPointSpec::DuringRound { round, deliver_to } => {
                    if *round == 0 || *round > self.rounds {
                        return Err(field(
                            format!("sync_crashes[{i}].point.round"),
                            format!("round must be in 1..={}, got {round}", self.rounds),
                        ));
                    }
                    let mut dests = Vec::new();
                    for (j, &d) in deliver_to.iter().enumerate() {
                        let q = ProcessId(d);
                        if !processes.contains(q) {
                            return Err(field(
                                format!("sync_crashes[{i}].point.deliver_to[{j}]"),
                                format!("{q} is not one of the protocol's processes {processes}"),
                            ));
                        }
                        dests.push(q);
                    }
                    SyncCrashPoint::DuringRound {
                        round: *round,
                        deliver_to: ProcessSet::new(dests),
                    }
                }
            };
            if out.insert(p, point).is_some() {
                return Err(field(
                    format!("sync_crashes[{i}].process"),
                    format!("{p} crashes twice"),
                ));
            }
        }
        if out.len() >= processes.len() {
            return Err(field("sync_crashes", "at least one process must survive"));
        }
        Ok(out)
    }

    fn build_scheduler(
        &self,
        processes: &ProcessSet,
        default_seed: u64,
    ) -> Result<Scheduler, ConfigError> {
        match &self.scheduler {
            None => Ok(Scheduler::Seeded { seed: default_seed }),
            Some(SchedulerSpec::Seeded { seed }) => Ok(Scheduler::Seeded { seed: *seed }),
            Some(SchedulerSpec::Fair { queue }) => {
                let queue: Vec<ProcessId> = if queue.is_empty() {
                    processes.iter().collect()
                } else {
                    let ids: Vec<ProcessId> = queue.iter().map(|&q| ProcessId(q)).collect();
                    let as_set = ProcessSet::new(ids.iter().copied());
                    if ids.len() != processes.len() || as_set != *processes {
                        return Err(field(
                            "scheduler.queue",
                            format!(
                                "queue must be a permutation of the protocol's processes {processes}"
                            ),
                        ));
                    }
                    ids
                };
                Ok(Scheduler::FairExtension { queue })
            }
        }
    }
}

/// An instantiated protocol, by automaton family. The voting-round family
/// ships with the halting wrapper because its raw automata probe forever
/// after deciding and would never quiesce.
pub enum BuiltProtocol {
    Subset(ProtocolInstance<SubsetConsultAutomaton>),
    Probe(ProtocolInstance<WithHalting<ProbeRoundsAutomaton>>),
    Guarded(ProtocolInstance<GuardedAutomaton>),
    SyncK(SyncProtocolInstance<ExchangeRound>),
}

impl BuiltProtocol {
    pub fn name(&self) -> &str {
        match self {
            BuiltProtocol::Subset(i) => &i.name,
            BuiltProtocol::Probe(i) => &i.name,
            BuiltProtocol::Guarded(i) => &i.name,
            BuiltProtocol::SyncK(i) => &i.name,
        }
    }

    pub fn processes(&self) -> &ProcessSet {
        match self {
            BuiltProtocol::Subset(i) => &i.processes,
            BuiltProtocol::Probe(i) => &i.processes,
            BuiltProtocol::Guarded(i) => &i.processes,
            BuiltProtocol::SyncK(i) => &i.processes,
        }
    }

    pub fn task(&self) -> &crate::task::AgreementTask {
        match self {
            BuiltProtocol::Subset(i) => &i.task,
            BuiltProtocol::Probe(i) => &i.task,
            BuiltProtocol::Guarded(i) => &i.task,
            BuiltProtocol::SyncK(i) => &i.task,
        }
    }
}

/// Everything an asynchronous run needs.
pub struct AsyncBuild {
    pub protocol: BuiltProtocol,
    pub inputs: InputVector,
    pub pattern: FailurePattern,
    pub scheduler: Scheduler,
    pub strategy: AnswerStrategy,
    /// `None`: engine default. `Some(0)`: no actions allowed.
    pub budget: Option<u64>,
}

/// Everything a synchronous run needs.
pub struct SyncBuild {
    pub instance: SyncProtocolInstance<ExchangeRound>,
    pub inputs: InputVector,
    pub crashes: BTreeMap<ProcessId, SyncCrashPoint>,
    pub strategy: AnswerStrategy,
}

/// A validated, instantiated run description.
pub enum BuiltRun {
    Async(AsyncBuild),
    Sync(SyncBuild),
}
