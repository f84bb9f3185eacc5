//! Model lifecycle: UNLOADED -> LOADING -> READY, with lazy idle unload.
//!
//! There is no background eviction thread; idleness is evaluated whenever
//! someone looks (a request arriving, a stats read). The cold-start sleep
//! itself happens outside the lifecycle lock so state stays observable as
//! LOADING while the weights "load".

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelState {
    Unloaded,
    Loading,
    Ready,
}

impl ModelState {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Unloaded => "UNLOADED",
            Self::Loading => "LOADING",
            Self::Ready => "READY",
        }
    }
}

#[derive(Debug)]
pub struct ModelLifecycle {
    state: ModelState,
    last_used_s: f64,
}

impl ModelLifecycle {
    pub fn new() -> Self {
        Self { state: ModelState::Unloaded, last_used_s: 0.0 }
    }

    pub fn state(&self) -> ModelState {
        self.state
    }

    /// If the model is unloaded, move to LOADING and return true; the caller
    /// must sleep the cold start and then call [`finish_load`]. Returns
    /// false when already READY (or LOADING, which cannot happen while the
    /// inference lock is held).
    pub fn begin_load(&mut self) -> bool {
        if self.state == ModelState::Unloaded {
            self.state = ModelState::Loading;
            true
        } else {
            false
        }
    }

    pub fn finish_load(&mut self, now_s: f64) {
        self.state = ModelState::Ready;
        self.last_used_s = now_s;
    }

    pub fn note_used(&mut self, now_s: f64) {
        self.last_used_s = self.last_used_s.max(now_s);
    }

    /// Lazy idle check: unload if READY and untouched for `idle_unload_s`.
    pub fn maybe_unload(&mut self, now_s: f64, idle_unload_s: f64) -> bool {
        if self.state == ModelState::Ready && now_s - self.last_used_s >= idle_unload_s {
            self.state = ModelState::Unloaded;
            true
        } else {
            false
        }
    }
}

impl Default for ModelLifecycle {
    fn default() -> Self {
        Self::new()
    }
}
