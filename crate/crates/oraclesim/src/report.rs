//! Machine-readable report documents for the command-line surface.
//!
//! Every command emits one of these as JSON. The schema is plain data
//! (strings, numbers, lists), so reports from equal configs are stable and
//! diffable across runs.
//!
//! Verdict vocabulary: `pass`, `flagged` (undecidable on a truncated run),
//! `fail`. A document's `pass` says nothing failed; `clean` additionally
//! says nothing was flagged. Exit codes key off `clean`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{CounterexampleReport, TransformReport};
use crate::oracle::OracleLawViolation;
use crate::runtime::check::{CheckReport, Verdict};
use crate::runtime::verify::AgreementReport;
use crate::runtime::Run;

fn verdict_str(v: Verdict) -> String {
    match v {
        Verdict::Pass => "pass",
        Verdict::Flagged => "flagged",
        Verdict::Fail => "fail",
    }
    .to_string()
}

/// One named check with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub name: String,
    pub verdict: String,
    #[serde(default)]
    pub details: Vec<String>,
}

impl VerdictEntry {
    pub fn failed(&self) -> bool {
        self.verdict == "fail"
    }

    pub fn flagged(&self) -> bool {
        self.verdict == "flagged"
    }
}

/// Report of one executed or re-checked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReportDoc {
    pub config_digest: String,
    pub protocol: String,
    pub mode: String,
    pub outcome: String,
    /// Recorded decisions: process -> (time, value).
    pub decisions: BTreeMap<u32, (u64, u32)>,
    /// The four agreement conditions.
    pub conditions: Vec<VerdictEntry>,
    /// The run rules, when they were checked.
    pub rules: Vec<VerdictEntry>,
    /// False for synchronous runs: their histories are round-structured,
    /// not step-structured, so only oracle legality and the agreement
    /// conditions apply.
    pub rules_checked: bool,
    pub law_violations: Vec<String>,
    /// First failing detail, for quick triage.
    pub first_failure: Option<String>,
    /// For re-checks: whether the trace's digest matched the given config.
    #[serde(default)]
    pub digest_matched: Option<bool>,
    /// Nothing failed.
    pub pass: bool,
    /// Nothing failed and nothing was flagged.
    pub clean: bool,
    #[serde(default)]
    pub trace_path: Option<String>,
}

impl RunReportDoc {
    pub fn new(
        config_digest: String,
        protocol: String,
        run: &Run,
        rules: Option<&CheckReport>,
        laws: &[OracleLawViolation],
        conditions: &AgreementReport,
    ) -> Self {
        let condition_entries: Vec<VerdictEntry> = conditions
            .findings
            .iter()
            .map(|f| VerdictEntry {
                name: f.condition.to_string(),
                verdict: verdict_str(f.verdict),
                details: f.details.clone(),
            })
            .collect();
        let rule_entries: Vec<VerdictEntry> = rules
            .map(|r| {
                r.findings
                    .iter()
                    .map(|f| VerdictEntry {
                        name: f.rule.to_string(),
                        verdict: verdict_str(f.verdict),
                        details: f.details.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let law_violations: Vec<String> = laws.iter().map(|v| v.to_string()).collect();
        let first_failure = rule_entries
            .iter()
            .chain(&condition_entries)
            .filter(|e| e.failed())
            .filter_map(|e| e.details.first())
            .next()
            .cloned()
            .or_else(|| law_violations.first().cloned());
        let failed = rule_entries
            .iter()
            .chain(&condition_entries)
            .any(|e| e.failed())
            || !law_violations.is_empty();
        let flagged = rule_entries
            .iter()
            .chain(&condition_entries)
            .any(|e| e.flagged());
        RunReportDoc {
            config_digest,
            protocol,
            mode: match run.mode {
                crate::runtime::RunMode::Async => "async",
                crate::runtime::RunMode::Sync => "sync",
            }
            .to_string(),
            outcome: run.outcome.label().to_string(),
            decisions: run
                .decisions
                .iter()
                .map(|(p, (t, v))| (p.0, (*t, v.0)))
                .collect(),
            conditions: condition_entries,
            rules: rule_entries,
            rules_checked: rules.is_some(),
            law_violations,
            first_failure,
            digest_matched: None,
            pass: !failed,
            clean: !failed && !flagged,
            trace_path: None,
        }
    }

    /// Human-readable verdict lines, one per check.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.push(format!(
            "{} ({} mode): outcome {}",
            self.protocol, self.mode, self.outcome
        ));
        for entry in &self.rules {
            out.push(format!("rule {}: {}", entry.name, entry.verdict));
        }
        if !self.rules_checked {
            out.push("rules: not applicable (round-structured run)".to_string());
        }
        for entry in &self.conditions {
            out.push(format!("{}: {}", entry.name, entry.verdict));
        }
        out.push(format!("oracle law violations: {}", self.law_violations.len()));
        if let Some(first) = &self.first_failure {
            out.push(format!("first failure: {first}"));
        }
        out
    }
}

/// One (protocol, n, f) sweep row of an exploration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreRowDoc {
    pub protocol: String,
    pub n: u32,
    pub f: u32,
    pub runs: usize,
    pub skipped: usize,
    pub flagged: usize,
    pub failures: usize,
    pub law_violations: usize,
    pub pass: bool,
    #[serde(default)]
    pub first_failure: Option<String>,
    /// Trace file written for the first failing run, if any failed.
    #[serde(default)]
    pub counterexample_trace: Option<String>,
}

/// Status of one expected-counterexample replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayDoc {
    pub scenario: String,
    /// `confirmed`, `missing`, or `inapplicable`.
    pub status: String,
    pub confirmed: bool,
    pub violated: Vec<String>,
    pub details: Vec<String>,
}

impl From<&CounterexampleReport> for ReplayDoc {
    fn from(r: &CounterexampleReport) -> Self {
        ReplayDoc {
            scenario: r.scenario.clone(),
            status: if !r.applicable {
                "inapplicable"
            } else if r.confirmed {
                "confirmed"
            } else {
                "missing"
            }
            .to_string(),
            confirmed: r.confirmed,
            violated: r.violated.iter().map(|c| c.to_string()).collect(),
            details: r.details.clone(),
        }
    }
}

/// Aggregate exploration report: sweep matrix plus optional replay and
/// transform sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExploreReportDoc {
    pub rows: Vec<ExploreRowDoc>,
    #[serde(default)]
    pub replays: Vec<ReplayDoc>,
    #[serde(default)]
    pub transform: Option<TransformReport>,
    /// Every row clean, every requested replay confirmed, transform sound.
    pub pass: bool,
}

impl ExploreReportDoc {
    pub fn compute_pass(&mut self) {
        self.pass = self.rows.iter().all(|r| r.pass)
            && self.replays.iter().all(|r| r.confirmed)
            && self.transform.as_ref().is_none_or(|t| t.sound());
    }

    pub fn summary_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for row in &self.rows {
            out.push(format!(
                "{} n={} f={}: {} runs, {} failures, {} flagged, {} law violations -> {}",
                row.protocol,
                row.n,
                row.f,
                row.runs,
                row.failures,
                row.flagged,
                row.law_violations,
                if row.pass { "pass" } else { "FAIL" }
            ));
        }
        for replay in &self.replays {
            out.push(format!(
                "expected-counterexample: {} ({})",
                replay.status, replay.scenario
            ));
        }
        if let Some(t) = &self.transform {
            out.push(format!(
                "transform: {}/{} lifted runs clean, {} nonzero answers, counts {}+{}+{}={} -> {}",
                t.lifted_passes,
                t.lifted_runs,
                t.nonzero_answers,
                t.counts.removed,
                t.counts.rewritten,
                t.counts.kept,
                t.counts.total,
                if t.sound() { "sound" } else { "UNSOUND" }
            ));
        }
        out.push(format!(
            "explore: {}",
            if self.pass { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// Any report document, for the `report` command to re-render.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReportDoc {
    Run(RunReportDoc),
    Explore(ExploreReportDoc),
}

impl ReportDoc {
    /// Parse either document kind, telling them apart by their fields
    /// (exploration reports carry `rows`).
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("rows").is_some() {
            Ok(ReportDoc::Explore(serde_json::from_value(value)?))
        } else {
            Ok(ReportDoc::Run(serde_json::from_value(value)?))
        }
    }
    pub fn passed_clean(&self) -> bool {
        match self {
            ReportDoc::Run(r) => r.clean,
            ReportDoc::Explore(e) => e.pass,
        }
    }

    pub fn summary_lines(&self) -> Vec<String> {
        match self {
            ReportDoc::Run(r) => r.summary_lines(),
            ReportDoc::Explore(e) => e.summary_lines(),
        }
    }
}
