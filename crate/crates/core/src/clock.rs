//! Injectable time source.
//!
//! All timing-sensitive behavior (cache TTLs, cold starts, idle unloads,
//! retry backoff, phase timings) goes through [`Clock`] so tests can run the
//! whole serving stack in milliseconds of wall time. `now_s` is seconds since
//! the Unix epoch for the real clock and seconds since construction for the
//! simulated one; only differences of it are ever interpreted.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Current time in seconds. Monotone non-decreasing.
    fn now_s(&self) -> f64;
    /// Sleep for `secs`. The simulated clock advances itself instead of
    /// blocking the thread.
    fn sleep(&self, secs: f64);
}

pub type SharedClock = Arc<dyn Clock>;

/// Wall clock backed by `SystemTime`.
pub struct RealClock;

impl Clock for RealClock {
    fn now_s(&self) -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO)
            .as_secs_f64()
    }

    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

/// Virtual clock: `sleep` advances time by the full requested amount while
/// blocking the caller for `requested / scale` real seconds (`scale` large
/// means effectively instant). Shared freely across threads.
pub struct SimClock {
    micros: AtomicU64,
    scale: f64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::with_scale(f64::INFINITY)
    }

    pub fn with_scale(scale: f64) -> Self {
        Self { micros: AtomicU64::new(0), scale: if scale > 0.0 { scale } else { f64::INFINITY } }
    }

    /// Advance the virtual clock without sleeping at all.
    pub fn advance(&self, secs: f64) {
        if secs > 0.0 {
            self.micros.fetch_add((secs * 1e6) as u64, Ordering::SeqCst);
        }
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SimClock {
    fn now_s(&self) -> f64 {
        self.micros.load(Ordering::SeqCst) as f64 / 1e6
    }

    fn sleep(&self, secs: f64) {
        if secs <= 0.0 {
            return;
        }
        self.advance(secs);
        if self.scale.is_finite() {
            std::thread::sleep(Duration::from_secs_f64(secs / self.scale));
        }
    }
}

pub fn real_clock() -> SharedClock {
    Arc::new(RealClock)
}

pub fn sim_clock() -> Arc<SimClock> {
    Arc::new(SimClock::new())
}
