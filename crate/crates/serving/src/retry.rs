//! Retry with exponential backoff and jitter, for transient failures only.

use crate::error::ServeError;
use grev_core::clock::SharedClock;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_s: f64,
    pub factor: f64,
    /// Relative jitter: each delay is scaled by a uniform factor in
    /// `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_s: 1.0, factor: 2.0, jitter: 0.2 }
    }
}

/// Run `f` until it succeeds, fails permanently, or exhausts the attempt
/// budget. Only transient errors (timeout, connection, queue-full) are
/// retried; the sleep between attempt `i` and `i+1` is
/// `base * factor^(i-1) * (1 +- jitter)` on the injected clock, so tests can
/// pin timing exactly with a simulated clock and a seeded RNG.
pub fn call_with_retry<T>(
    policy: &RetryPolicy,
    clock: &SharedClock,
    rng: &mut dyn rand::RngCore,
    mut f: impl FnMut() -> Result<T, ServeError>,
) -> Result<T, ServeError> {
    let mut attempt = 1u32;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < policy.max_attempts => {
                let scale = 1.0 + rng.gen_range(-policy.jitter..=policy.jitter);
                let delay = policy.base_s * policy.factor.powi(attempt as i32 - 1) * scale;
                log::debug!("transient failure (attempt {attempt}): {e}; retrying in {delay:.3}s");
                clock.sleep(delay);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use grev_core::clock::{sim_clock, Clock};
    use rand::SeedableRng;

    fn chacha() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn transient_failures_retry_with_jittered_backoff() {
        let clock = sim_clock();
        let shared: SharedClock = clock.clone();
        let mut rng = chacha();
        let mut calls = 0;
        let result = call_with_retry(&RetryPolicy::default(), &shared, &mut rng, || {
            calls += 1;
            if calls < 3 {
                Err(ServeError::Timeout { seconds: 0.0 })
            } else {
                Ok("done")
            }
        });
        assert_eq!(result.unwrap(), "done");
        assert_eq!(calls, 3);
        let elapsed = clock.now_s();
        // d1 in [0.8, 1.2], d2 in [1.6, 2.4]
        assert!((2.4..=3.6).contains(&elapsed), "elapsed {elapsed}");
    }

    #[test]
    fn permanent_failures_do_not_retry() {
        let clock = sim_clock();
        let shared: SharedClock = clock.clone();
        let mut rng = chacha();
        let mut calls = 0;
        let result: Result<(), _> = call_with_retry(&RetryPolicy::default(), &shared, &mut rng, || {
            calls += 1;
            Err(ServeError::Backend { detail: "bad".into() })
        });
        assert!(matches!(result, Err(ServeError::Backend { .. })));
        assert_eq!(calls, 1);
        assert_eq!(clock.now_s(), 0.0, "no backoff slept");
    }

    #[test]
    fn exhaustion_returns_the_last_error_after_max_attempts() {
        let clock = sim_clock();
        let shared: SharedClock = clock.clone();
        let mut rng = chacha();
        let mut calls = 0;
        let result: Result<(), _> = call_with_retry(&RetryPolicy::default(), &shared, &mut rng, || {
            calls += 1;
            Err(ServeError::QueueFull)
        });
        assert!(matches!(result, Err(ServeError::QueueFull)));
        assert_eq!(calls, 3);
        let elapsed = clock.now_s();
        assert!((2.4..=3.6).contains(&elapsed), "two sleeps only: {elapsed}");
    }

    #[test]
    fn seeded_rng_makes_delays_reproducible() {
        let run = || {
            let clock = sim_clock();
            let shared: SharedClock = clock.clone();
            let mut rng = chacha();
            let _ = call_with_retry::<()>(&RetryPolicy::default(), &shared, &mut rng, || {
                Err(ServeError::QueueFull)
            });
            clock.now_s()
        };
        assert_eq!(run(), run());
    }
}
