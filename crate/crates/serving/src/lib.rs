//! Model serving: L1 response cache, bounded broker queue, L2 job store,
//! single-flight GPU inference with lazy model lifecycle, HTTP front end.

pub mod backend;
pub mod broker;
pub mod cache;
pub mod error;
pub mod http;
pub mod lifecycle;
pub mod retry;
pub mod service;
pub mod store;
