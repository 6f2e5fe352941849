//! Command-line surface: `run`, `check`, `explore`, `report`.
//!
//! Every command reads a validated [`RunConfig`] (from a JSON file, inline
//! flags, or both, with flags overriding the file), executes or re-checks
//! runs, prints one verdict line per check, and exits 0 only when everything
//! passed outright. Violations and flagged (truncation-undecidable) verdicts
//! exit 1; configuration and parse problems exit 2.
//!
//! The `ORACLESIM_SEED` environment variable supplies the scheduler seed
//! when neither the config nor `--seed` picks one.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    build_transform_sample, replay_crash_after_exchange, replay_guarded_race,
    transform_soundness_suite,
};
use crate::config::{
    AsyncBuild, BuiltProtocol, BuiltRun, ConfigError, CrashSpec, InputSpec, ProtocolName,
    RunConfig, SchedulerSpec, StrategySpec, SyncCrashSpec, SyncPointSpec,
};
use crate::oracle::{check_oracle_laws, restrict_failure_pattern, OracleLawViolation, Sanctuary};
use crate::protocols::{ExchangeRound, ProtocolInstance, SyncProtocolInstance};
use crate::report::{ExploreReportDoc, ExploreRowDoc, ReplayDoc, ReportDoc, RunReportDoc};
use crate::runtime::automaton::Automaton;
use crate::runtime::check::{check_run, CheckReport};
use crate::runtime::engine::{run_async, RunSetup};
use crate::runtime::explore::{
    explore, ExploreConfig, ExploreTarget, InputSpace, PatternSpace,
};
use crate::runtime::sync::{run_sync, SyncSetup};
use crate::runtime::verify::{
    verify_agreement_conditions, verify_recorded_conditions, AgreementReport,
};
use crate::runtime::{sanctuary_projection, Run, RunError, RunMode, RunOutcome};
use crate::task::{enumerate_input_vectors, InputVector, ProcessSet, ValueDomain};
use crate::trace::{parse_trace, write_trace, TraceError};

/// Anything that should terminate a command with exit code 2.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Trace(TraceError),
    Run(RunError),
    Io { path: PathBuf, detail: String },
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config: {e}"),
            CliError::Trace(e) => write!(f, "trace: {e}"),
            CliError::Run(e) => write!(f, "run: {e}"),
            CliError::Io { path, detail } => write!(f, "{}: {detail}", path.display()),
            CliError::Usage(detail) => write!(f, "{detail}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Trace(e)
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Run(e)
    }
}

#[derive(Parser)]
#[command(
    name = "oraclesim",
    about = "Simulate and check oracle-aided agreement protocols",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured run, write its trace, and judge it.
    Run(RunArgs),
    /// Re-check a trace file against a config's protocol and task.
    Check(CheckArgs),
    /// Sweep (protocol, n, f) grids; optionally include the counterexample
    /// replays and the oracle-removal transform suite.
    Explore(ExploreArgs),
    /// Re-render a saved JSON report and exit by its verdict.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigFlags {
    /// JSON config file; inline flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol name (cstar, ac_plus_one, cons_shrink, cons_grow,
    /// derand_benor, naive_guarded, sync_k).
    #[arg(long)]
    protocol: Option<ProtocolName>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    f: Option<u32>,
    /// Exchange rounds (sync_k only).
    #[arg(long)]
    rounds: Option<u32>,
    /// Run mode: async or sync.
    #[arg(long)]
    mode: Option<String>,
    /// Give every process this input value.
    #[arg(long)]
    uniform_input: Option<u32>,
    /// One process's input as p=v; repeat per process.
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// One crash as p@t (async); repeat per crash.
    #[arg(long = "crash")]
    crashes: Vec<String>,
    /// One sync crash as p@before_query, p@after_query, p@round:k, or
    /// p@round:k:deliver=a,b; repeat per crash.
    #[arg(long = "sync-crash")]
    sync_crashes: Vec<String>,
    /// Seeded scheduler with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fair round-robin scheduler; optional comma list fixes the queue.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    fair: Option<String>,
    /// Event budget; 0 permits no actions at all.
    #[arg(long)]
    budget: Option<u64>,
    /// Oracle answer-value policy: min or max.
    #[arg(long)]
    strategy: Option<StrategySpec>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigFlags,
    /// Trace output file.
    #[arg(long, default_value = "trace.txt")]
    out: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file to re-check.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    config: ConfigFlags,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExploreArgs {
    /// Protocols to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "cons_grow")]
    protocol: Vec<ProtocolName>,
    /// Values of n to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    n: Vec<u32>,
    /// Values of f to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1")]
    f: Vec<u32>,
    /// Seeds 0..count per combination.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Sweep every input vector (default) or only this uniform value.
    #[arg(long)]
    uniform_input: Option<u32>,
    /// Crash patterns: all patterns with at most this many crashes…
    #[arg(long, default_value_t = 0)]
    max_crashes: usize,
    /// …each crashing at every time up to this horizon.
    #[arg(long, default_value_t = 8)]
    horizon: u64,
    /// Answer-value policies to sweep (comma separated: min, max).
    #[arg(long, value_delimiter = ',', default_value = "min")]
    strategies: Vec<StrategySpec>,
    /// Event budget per run; 0 means the engine default.
    #[arg(long, default_value_t = 0)]
    budget: u64,
    /// Include the two counterexample replay scenarios.
    #[arg(long)]
    replays: bool,
    /// Include the oracle-removal transform soundness suite.
    #[arg(long)]
    transform: bool,
    /// Seeds for the transform suite (runs = seeds x 4 member inputs).
    #[arg(long, default_value_t = 25)]
    transform_seeds: u64,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a counterexample trace per failing row into this directory.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved JSON report to re-render.
    #[arg(long)]
    input: PathBuf,
}

/// Entry point: parse, dispatch, and map errors to exit code 2.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Explore(args) => cmd_explore(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// The scheduler seed used when neither the config nor `--seed` picks one.
fn ambient_seed() -> Result<u64, CliError> {
    match std::env::var("ORACLESIM_SEED") {
        Ok(text) => text.parse().map_err(|_| {
            CliError::Usage(format!("ORACLESIM_SEED is not a number: {text:?}"))
        }),
        Err(_) => Ok(0),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn parse_pair<'t>(text: &'t str, sep: char, what: &str) -> Result<(u32, &'t str), CliError> {
    let (p, rest) = text
        .split_once(sep)
        .ok_or_else(|| CliError::Usage(format!("{what} must look like p{sep}…, got {text:?}")))?;
    let p = p
        .parse()
        .map_err(|_| CliError::Usage(format!("{what}: process id is not a number: {p:?}")))?;
    Ok((p, rest))
}

fn parse_sync_point(text: &str) -> Result<SyncPointSpec, CliError> {
    if text == "before_query" {
        return Ok(SyncPointSpec::BeforeQuery);
    }
    if text == "after_query" {
        return Ok(SyncPointSpec::AfterQuery);
    }
    if let Some(rest) = text.strip_prefix("round:") {
        let (round, deliver_to) = match rest.split_once(":deliver=") {
            Some((r, dests)) => {
                let mut out = Vec::new();
                for d in dests.split(',') {
                    out.push(d.parse().map_err(|_| {
                        CliError::Usage(format!("sync crash: bad destination {d:?}"))
                    })?);
                }
                (r, out)
            }
            None => (rest, Vec::new()),
        };
        let round = round
            .parse()
            .map_err(|_| CliError::Usage(format!("sync crash: bad round {round:?}")))?;
        return Ok(SyncPointSpec::DuringRound { round, deliver_to });
    }
    Err(CliError::Usage(format!(
        "sync crash point must be before_query, after_query, round:k, or \
         round:k:deliver=a,b; got {text:?}"
    )))
}

impl ConfigFlags {
    /// Load the config file (if any) and apply the flag overrides.
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_json(&read_file(path)?)?,
            None => {
                let missing = |flag: &str| {
                    CliError::Usage(format!("--{flag} is required without --config"))
                };
                RunConfig {
                    protocol: self.protocol.ok_or_else(|| missing("protocol"))?,
                    n: self.n.ok_or_else(|| missing("n"))?,
                    f: self.f.ok_or_else(|| missing("f"))?,
                    rounds: 1,
                    mode: RunMode::Async,
                    inputs: Vec::new(),
                    uniform_input: None,
                    crashes: Vec::new(),
                    sync_crashes: Vec::new(),
                    scheduler: None,
                    budget: None,
                    strategy: StrategySpec::Min,
                }
            }
        };
        if let Some(p) = self.protocol {
            config.protocol = p;
        }
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(f) = self.f {
            config.f = f;
        }
        if let Some(rounds) = self.rounds {
            config.rounds = rounds;
        }
        if let Some(mode) = &self.mode {
            config.mode = match mode.as_str() {
                "async" => RunMode::Async,
                "sync" => RunMode::Sync,
                other => {
                    return Err(CliError::Usage(format!(
                        "--mode must be async or sync, got {other:?}"
                    )));
                }
            };
        }
        if let Some(v) = self.uniform_input {
            config.uniform_input = Some(v);
            config.inputs = Vec::new();
        }
        if !self.inputs.is_empty() {
            config.uniform_input = None;
            config.inputs = self
                .inputs
                .iter()
                .map(|text| {
                    let (process, v) = parse_pair(text, '=', "--input")?;
                    let value = v.parse().map_err(|_| {
                        CliError::Usage(format!("--input: value is not a number: {v:?}"))
                    })?;
                    Ok(InputSpec { process, value })
                })
                .collect::<Result<_, CliError>>()?;
        }
        if !self.crashes.is_empty() {
            config.crashes = self
                .crashes
                .iter()
                .map(|text| {
                    let (process, t) = parse_pair(text, '@', "--crash")?;
                    let time = t.parse().map_err(|_| {
                        CliError::Usage(format!("--crash: time is not a number: {t:?}"))
                    })?;
                    Ok(CrashSpec { process, time })
                })
                .collect::<Result<_, CliError>>()?;
        }
        if !self.sync_crashes.is_empty() {
            config.sync_crashes = self
                .sync_crashes
                .iter()
                .map(|text| {
                    let (process, point) = parse_pair(text, '@', "--sync-crash")?;
                    Ok(SyncCrashSpec {
                        process,
                        point: parse_sync_point(point)?,
                    })
                })
                .collect::<Result<_, CliError>>()?;
        }
        match (&self.seed, &self.fair) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "--seed and --fair are mutually exclusive".to_string(),
                ));
            }
            (Some(seed), None) => config.scheduler = Some(SchedulerSpec::Seeded { seed: *seed }),
            (None, Some(queue)) => {
                let queue = if queue.is_empty() {
                    Vec::new()
                } else {
                    queue
                        .split(',')
                        .map(|q| {
                            q.parse().map_err(|_| {
                                CliError::Usage(format!("--fair: bad process id {q:?}"))
                            })
                        })
                        .collect::<Result<_, CliError>>()?
                };
                config.scheduler = Some(SchedulerSpec::Fair { queue });
            }
            (None, None) => {}
        }
        if let Some(budget) = self.budget {
            config.budget = Some(budget);
        }
        if let Some(strategy) = self.strategy {
            config.strategy = strategy;
        }
        Ok(config)
    }
}

/// A run plus everything judged about it.
pub struct RunProduct {
    pub run: Run,
    /// Step-grammar rule findings; `None` for round-structured (sync) runs.
    pub rules: Option<CheckReport>,
    pub laws: Vec<OracleLawViolation>,
    pub conditions: AgreementReport,
}

fn judge_async<A: Automaton>(instance: &ProtocolInstance<A>, run: Run) -> RunProduct {
    let rules = check_run(&run, &instance.automata, &instance.sanctuaries);
    let conditions =
        verify_agreement_conditions(&run, &instance.automata, instance.task.problem());
    let laws = rules.law_violations.clone();
    RunProduct {
        run,
        rules: Some(rules),
        laws,
        conditions,
    }
}

fn sync_oracle_laws(run: &Run, sanctuary: &Sanctuary) -> Result<Vec<OracleLawViolation>, RunError> {
    let events = sanctuary_projection(&run.events, sanctuary.id());
    let restricted = restrict_failure_pattern(&run.pattern, sanctuary, &run.processes)?;
    Ok(check_oracle_laws(
        &events,
        sanctuary,
        &restricted,
        run.outcome.is_quiescent(),
    ))
}

fn judge_sync(
    instance: &SyncProtocolInstance<ExchangeRound>,
    run: Run,
) -> Result<RunProduct, RunError> {
    let laws = sync_oracle_laws(&run, &instance.sanctuary)?;
    let conditions = verify_recorded_conditions(&run, instance.task.problem());
    Ok(RunProduct {
        run,
        rules: None,
        laws,
        conditions,
    })
}

fn execute_async<A: Automaton>(
    instance: &ProtocolInstance<A>,
    build: &AsyncBuild,
) -> Result<Run, RunError> {
    if build.budget == Some(0) {
        // A zero budget permits no actions: the run is the empty truncated
        // prefix, so every liveness verdict comes back flagged.
        return Ok(Run {
            mode: RunMode::Async,
            processes: instance.processes.clone(),
            pattern: build.pattern.clone(),
            inputs: build.inputs.clone(),
            events: Vec::new(),
            outcome: RunOutcome::BudgetExhausted,
            decisions: BTreeMap::new(),
        });
    }
    run_async(RunSetup {
        automata: &instance.automata,
        sanctuaries: &instance.sanctuaries,
        pattern: &build.pattern,
        inputs: &build.inputs,
        strategy: build.strategy.clone(),
        scheduler: build.scheduler.clone(),
        budget: build.budget.unwrap_or(0),
        prefix: &[],
    })
}

/// Execute a built run and judge it (rules where applicable, oracle laws,
/// agreement conditions).
pub fn execute(built: &BuiltRun) -> Result<RunProduct, RunError> {
    match built {
        BuiltRun::Async(build) => match &build.protocol {
            BuiltProtocol::Subset(i) => Ok(judge_async(i, execute_async(i, build)?)),
            BuiltProtocol::Probe(i) => Ok(judge_async(i, execute_async(i, build)?)),
            BuiltProtocol::Guarded(i) => Ok(judge_async(i, execute_async(i, build)?)),
            BuiltProtocol::SyncK(_) => unreachable!("validated: sync_k never builds async"),
        },
        BuiltRun::Sync(build) => {
            let run = run_sync(SyncSetup {
                programs: &build.instance.programs,
                sanctuary: &build.instance.sanctuary,
                inputs: &build.inputs,
                crashes: &build.crashes,
                strategy: build.strategy.clone(),
            })?;
            judge_sync(&build.instance, run)
        }
    }
}

/// Judge an already-recorded run against a built protocol.
pub fn judge_recorded(built: &BuiltRun, run: Run) -> Result<RunProduct, RunError> {
    match built {
        BuiltRun::Async(build) => match &build.protocol {
            BuiltProtocol::Subset(i) => Ok(judge_async(i, run)),
            BuiltProtocol::Probe(i) => Ok(judge_async(i, run)),
            BuiltProtocol::Guarded(i) => Ok(judge_async(i, run)),
            BuiltProtocol::SyncK(_) => unreachable!("validated: sync_k never builds async"),
        },
        BuiltRun::Sync(build) => judge_sync(&build.instance, run),
    }
}

fn report_doc(config: &RunConfig, product: &RunProduct) -> RunReportDoc {
    RunReportDoc::new(
        config.digest(),
        config.protocol.to_string(),
        &product.run,
        product.rules.as_ref(),
        &product.laws,
        &product.conditions,
    )
}

fn emit(doc: &RunReportDoc, report_path: Option<&Path>) -> Result<i32, CliError> {
    for line in doc.summary_lines() {
        println!("{line}");
    }
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(doc).expect("report serializes");
        write_file(path, &json)?;
        println!("report written to {}", path.display());
    }
    Ok(if doc.clean { 0 } else { 1 })
}

fn cmd_run(args: RunArgs) -> Result<i32, CliError> {
    let config = args.config.resolve()?;
    let built = config.build(ambient_seed()?)?;
    let product = execute(&built)?;
    let digest = config.digest();
    write_file(&args.out, &write_trace(&product.run, Some(&digest)))?;
    let mut doc = report_doc(&config, &product);
    doc.trace_path = Some(args.out.display().to_string());
    println!("trace written to {}", args.out.display());
    emit(&doc, args.report.as_deref())
}

fn cmd_check(args: CheckArgs) -> Result<i32, CliError> {
    let config = args.config.resolve()?;
    let built = config.build(ambient_seed()?)?;
    let trace = parse_trace(&read_file(&args.trace)?)?;
    let digest_matched = trace.digest.as_deref().map(|d| d == config.digest());
    if digest_matched == Some(false) {
        eprintln!(
            "warning: trace digest does not match the given config; checking anyway"
        );
    }
    let product = judge_recorded(&built, trace.run)?;
    let mut doc = report_doc(&config, &product);
    doc.digest_matched = digest_matched;
    doc.trace_path = Some(args.trace.display().to_string());
    emit(&doc, args.report.as_deref())
}

fn build_for_explore(
    protocol: ProtocolName,
    n: u32,
    f: u32,
    uniform_input: Option<u32>,
) -> Result<RunConfig, CliError> {
    Ok(RunConfig {
        protocol,
        n,
        f,
        rounds: 1,
        mode: if protocol == ProtocolName::SyncK {
            RunMode::Sync
        } else {
            RunMode::Async
        },
        inputs: Vec::new(),
        uniform_input: Some(uniform_input.unwrap_or(1)),
        crashes: Vec::new(),
        sync_crashes: Vec::new(),
        scheduler: None,
        budget: None,
        strategy: StrategySpec::Min,
    })
}

fn explore_row<A: Automaton + Sync>(
    instance: &ProtocolInstance<A>,
    args: &ExploreArgs,
    n: u32,
    f: u32,
    trace_dir: Option<&Path>,
) -> Result<ExploreRowDoc, CliError> {
    let inputs = match args.uniform_input {
        Some(v) => {
            if v > 1 {
                return Err(CliError::Usage(format!(
                    "--uniform-input must be 0 or 1, got {v}"
                )));
            }
            InputSpace::List(vec![InputVector::uniform(
                &instance.processes,
                crate::task::Value(v),
            )])
        }
        None => InputSpace::All,
    };
    let report = explore(
        &ExploreTarget {
            automata: &instance.automata,
            sanctuaries: &instance.sanctuaries,
            problem: instance.task.problem(),
        },
        &ExploreConfig {
            seeds: (0..args.seeds).collect(),
            inputs,
            patterns: PatternSpace::UpToCrashes {
                max_crashes: args.max_crashes,
                horizon: args.horizon,
            },
            strategies: args.strategies.iter().map(|s| s.to_strategy()).collect(),
            budget: args.budget,
            check_rules: true,
        },
    )
    .map_err(CliError::Run)?;
    let mut row = ExploreRowDoc {
        protocol: instance.name.clone(),
        n,
        f,
        runs: report.runs,
        skipped: report.skipped_invalid,
        flagged: report.flagged,
        failures: report.failures,
        law_violations: report.law_violations,
        pass: report.all_clean(),
        first_failure: None,
        counterexample_trace: None,
    };
    if let Some(case) = &report.first_failure {
        row.first_failure = case.details.first().cloned();
        if let Some(dir) = trace_dir {
            fs::create_dir_all(dir).map_err(|e| CliError::Io {
                path: dir.to_path_buf(),
                detail: e.to_string(),
            })?;
            let path = dir.join(format!("{}-n{}-f{}-fail.txt", instance.name, n, f));
            write_file(&path, &write_trace(&case.run, None))?;
            row.counterexample_trace = Some(path.display().to_string());
        }
    }
    Ok(row)
}

fn cmd_explore(args: ExploreArgs) -> Result<i32, CliError> {
    let mut doc = ExploreReportDoc::default();
    for &protocol in &args.protocol {
        if protocol == ProtocolName::SyncK {
            return Err(CliError::Usage(
                "explore sweeps asynchronous protocols; drive sync_k through run".to_string(),
            ));
        }
        for &n in &args.n {
            for &f in &args.f {
                let config = build_for_explore(protocol, n, f, args.uniform_input)?;
                let built = config.build(0)?;
                let row = match &built {
                    BuiltRun::Async(build) => match &build.protocol {
                        BuiltProtocol::Subset(i) => {
                            explore_row(i, &args, n, f, args.trace_dir.as_deref())?
                        }
                        BuiltProtocol::Probe(i) => {
                            explore_row(i, &args, n, f, args.trace_dir.as_deref())?
                        }
                        BuiltProtocol::Guarded(i) => {
                            explore_row(i, &args, n, f, args.trace_dir.as_deref())?
                        }
                        BuiltProtocol::SyncK(_) => unreachable!("sync_k rejected above"),
                    },
                    BuiltRun::Sync(_) => unreachable!("sync_k rejected above"),
                };
                doc.rows.push(row);
            }
        }
    }
    if args.replays {
        doc.replays.push(ReplayDoc::from(&replay_crash_after_exchange(3, 1)));
        doc.replays.push(ReplayDoc::from(&replay_guarded_race(2, 1)));
    }
    if args.transform {
        let (automata, spectator, sanctuary, _) = build_transform_sample();
        let members = ProcessSet::new(
            automata.keys().copied().filter(|&p| p != spectator),
        );
        let inputs = enumerate_input_vectors(&members, &ValueDomain::binary());
        let seeds: Vec<u64> = (0..args.transform_seeds).collect();
        let report = transform_soundness_suite(
            "share-consult-decide",
            &automata,
            spectator,
            &sanctuary,
            &inputs,
            &seeds,
        )
        .map_err(|e| CliError::Usage(format!("transform suite: {e}")))?;
        doc.transform = Some(report);
    }
    doc.compute_pass();
    for line in doc.summary_lines() {
        println!("{line}");
    }
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&doc).expect("report serializes");
        write_file(path, &json)?;
        println!("report written to {}", path.display());
    }
    Ok(if doc.pass { 0 } else { 1 })
}

fn cmd_report(args: ReportArgs) -> Result<i32, CliError> {
    let text = read_file(&args.input)?;
    let doc = ReportDoc::from_json(&text).map_err(|e| CliError::Usage(format!(
        "{}: not a report document: {e}",
        args.input.display()
    )))?;
    for line in doc.summary_lines() {
        println!("{line}");
    }
    Ok(if doc.passed_clean() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::check::Verdict;

    fn flags() -> ConfigFlags {
        ConfigFlags {
            config: None,
            protocol: Some(ProtocolName::ConsGrow),
            n: Some(2),
            f: Some(1),
            rounds: None,
            mode: None,
            uniform_input: Some(1),
            inputs: Vec::new(),
            crashes: Vec::new(),
            sync_crashes: Vec::new(),
            seed: None,
            fair: None,
            budget: None,
            strategy: None,
        }
    }

    #[test]
    fn inline_flags_build_a_config_and_seed_overrides() {
        let mut f = flags();
        f.seed = Some(9);
        f.crashes = vec!["2@4".to_string()];
        let config = f.resolve().expect("resolve");
        assert_eq!(config.protocol, ProtocolName::ConsGrow);
        assert_eq!(config.scheduler, Some(SchedulerSpec::Seeded { seed: 9 }));
        assert_eq!(config.crashes, vec![CrashSpec { process: 2, time: 4 }]);
        let built = config.build(0).expect("build");
        let product = execute(&built).expect("execute");
        assert!(product.run.outcome.is_quiescent());
        assert!(product.rules.expect("async rules").no_failures());
    }

    #[test]
    fn sync_crash_points_parse() {
        assert_eq!(
            parse_sync_point("before_query").expect("parse"),
            SyncPointSpec::BeforeQuery
        );
        assert_eq!(
            parse_sync_point("round:2:deliver=1,3").expect("parse"),
            SyncPointSpec::DuringRound {
                round: 2,
                deliver_to: vec![1, 3],
            }
        );
        assert!(parse_sync_point("sometime").is_err());
    }

    #[test]
    fn zero_budget_runs_flag_every_liveness_verdict() {
        let mut f = flags();
        f.budget = Some(0);
        let config = f.resolve().expect("resolve");
        let built = config.build(0).expect("build");
        let product = execute(&built).expect("execute");
        assert_eq!(product.run.outcome, RunOutcome::BudgetExhausted);
        assert!(product.run.events.is_empty());
        let doc = report_doc(&config, &product);
        assert!(doc.pass, "an empty prefix breaks nothing: {doc:?}");
        assert!(!doc.clean, "liveness must be flagged: {doc:?}");
    }

    #[test]
    fn sync_runs_judge_laws_and_conditions_without_step_rules() {
        let mut f = flags();
        f.protocol = Some(ProtocolName::SyncK);
        f.n = Some(3);
        f.mode = Some("sync".to_string());
        f.sync_crashes = vec!["2@before_query".to_string()];
        let config = f.resolve().expect("resolve");
        let built = config.build(0).expect("build");
        let product = execute(&built).expect("execute");
        assert!(product.rules.is_none());
        assert!(product.laws.is_empty());
        assert_eq!(
            product.conditions.verdict(crate::runtime::verify::AgreementCondition::Agreement),
            Verdict::Pass
        );
    }

    #[test]
    fn recorded_runs_can_be_rejudged() {
        let config = flags().resolve().expect("resolve");
        let built = config.build(3).expect("build");
        let product = execute(&built).expect("execute");
        let text = write_trace(&product.run, Some(&config.digest()));
        let parsed = parse_trace(&text).expect("parse");
        assert_eq!(parsed.digest.as_deref(), Some(config.digest().as_str()));
        let rejudged = judge_recorded(&built, parsed.run).expect("judge");
        assert!(rejudged.rules.expect("rules").passed());
        assert!(rejudged.conditions.passed());
    }
}
