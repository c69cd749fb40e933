//! specforge models a local AI stack as a typed five-primitive spec
//! (intelligence, engine, agent, tools & memory, learning) and searches the
//! configuration space with budgeted, gate-checked edits.
//!
//! The crate is organised around the data flow of a search session:
//!
//! - [`spec`]: the typed configuration document, its canonical serialization,
//!   content hashing, and diffing.
//! - [`edit`]: typed field edits, atomic application with inverse records,
//!   and the finite template catalog that defines the move space.
//! - [`gate`]: per-cluster scoring and the no-regression acceptance rule.
//! - [`reward`]: the weighted composite objective and z-normalization.
//! - [`telemetry`]: append-only JSONL measurement store, aggregation,
//!   Pareto frontiers, and cost amortization.
//! - [`harness`]: synthetic task suites with planted, brute-force verifiable
//!   oracles and a deterministic simulated executor.
//! - [`proposers`]: edit sources (scripted, template-random, remote HTTP).
//! - [`search`]: greedy gated search, evolutionary Pareto search,
//!   single-component baselines, and best-of-N restarts.
//! - [`events`]: a small publish-subscribe bus for session progress.
//!
//! Everything downstream of a seed is deterministic: identical
//! (spec, suite, algorithm, seed) inputs reproduce identical sessions.

pub mod edit;
pub mod gate;
pub mod events;
pub mod harness;
pub mod proposers;
pub mod reward;
pub mod search;
pub mod spec;
pub mod telemetry;
