//! Review orchestration: takes a PR event from ingest to posted comments.

pub mod buildcfg;
pub mod comment;
pub mod event;
pub mod review;
pub mod sink;
