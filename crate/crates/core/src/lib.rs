//! Dual-mode verification for networks of timed automata.
//!
//! The crate ships two engines over one modelling core:
//!
//! * a classical zone-based model checker ([`zone`]) that explores the
//!   symbolic product of a network with difference-bound matrices, and
//! * a statistical model checker ([`smc`]) that simulates the stochastic
//!   race semantics of the same network and evaluates bounded monitors
//!   over the sampled traces.
//!
//! Models use per-location delay annotations: `none`, `fixed d`, or
//! `empirical h` where `h` is a latency histogram ingested from
//! measurement logs ([`timing`]). [`model::to_approximate`] collapses every
//! empirical delay to its weighted average so the classical engine can run
//! on a measurement-derived model; the gap between the two verdicts is the
//! point of the exercise.

pub mod casestudy;
pub mod dbm;
pub mod model;
pub mod query;
pub mod report;
pub mod rng;
pub mod smc;
pub mod timing;
pub mod zone;
