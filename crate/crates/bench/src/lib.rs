//! Mutation benchmark: seeded fault injection over a frozen corpus, replay
//! through the full review pipeline, and fix-rate metrics.

pub mod generate;
pub mod metrics;
pub mod mutate;
pub mod replay;
pub mod report;
