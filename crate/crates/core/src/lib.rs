//! Domain layer for grev, a grounded code-review pipeline.
//!
//! Everything in this crate is synchronous and deterministic: the finding
//! model and its wire format, the toy C rule analyzer, unified-diff handling,
//! call-graph-aware context extraction, grounded prompt construction and
//! response validation, the deviation policy, and the append-only audit log.
//! The serving stack, review orchestrator, and benchmark harness build on it.

pub mod analyzer;
pub mod audit;
pub mod clock;
pub mod context;
pub mod diffing;
pub mod fsutil;
pub mod hash;
pub mod lex;
pub mod model;
pub mod policy;
pub mod prompting;
