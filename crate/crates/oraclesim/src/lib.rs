//! Simulation and verification toolkit for distributed agreement protocols that
//! consult failure-aware decision oracles.
//!
//! The crate is organized bottom-up:
//!
//! * [`task`] defines process sets, crash failure patterns, and the two
//!   agreement problems (consensus and atomic commitment) as functions from
//!   `(failure pattern, input vector)` to allowed decision sets.
//! * [`oracle`] implements sanctuaries: shared one-shot agreement services with
//!   query/answer histories, answer-candidate computation, and law checking
//!   (well-formedness, agreement, validity, resilience).
//! * [`runtime`] holds the asynchronous engine and its schedulers, a
//!   lockstep-round engine, the run-correctness checker, agreement-condition
//!   verification, exploration sweeps, and the trace-mutation catalog.
//! * [`protocols`] builds the message-passing automata for the bundled
//!   reductions between agreement tasks.
//! * [`analysis`] contains the oracle-removal transform, run lifting, and the
//!   scripted counterexample replays.
//! * [`config`], [`trace`], [`report`], and [`cli`] are the I/O surface: run
//!   configuration files, the on-disk trace format, structured reports, and
//!   the command-line front end.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod oracle;
pub mod protocols;
pub mod report;
pub mod runtime;
pub mod task;
pub mod trace;
