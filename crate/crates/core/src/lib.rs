//! Deterministic multi-blockchain interoperability simulator.
//!
//! Blockchains form a directed topology of direct connections; a topology is
//! usable only when strongly connected. Cross-chain transactions propagate by
//! confirmation: each blockchain synchronizes its direct sources, verifies
//! the copied chain under the source's consensus, translates transaction
//! formats edge by edge, and re-seals the transactions under its own
//! consensus, hop by hop until every blockchain holds a copy. The simulator
//! runs whole scenarios of this on a tick clock, with proof-of-work and
//! proof-of-stake chains side by side, and records network flow, propagation,
//! balance, and block metrics to CSV.
//!
//! Module map:
//! - [`topology`]: the directed graph, strong-connectivity validation,
//!   canonical builders, and the connection proposal/agreement protocol.
//! - [`chain`]: per-blockchain ledger, blocks, mempool, escrow settlement,
//!   and fork choice.
//! - [`consensus`]: proof-of-work and proof-of-stake sealing and verification.
//! - [`format`]: per-chain transaction encodings and the per-edge translator
//!   registry.
//! - [`propagation`]: the synchronize/verify/translate/re-seal engine and the
//!   world tick.
//! - [`security`]: closed-form fake/detection probabilities and trace-based
//!   confirmation depth.
//! - [`sim`]: scenario configs, workload injection, the run loop, metrics,
//!   and bundled presets.

pub mod chain;
pub mod consensus;
pub mod format;
pub mod propagation;
pub mod security;
pub mod sim;
pub mod topology;
