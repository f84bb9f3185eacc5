//! The serving core: request handling, queueing, dedup, single-flight
//! inference.
//!
//! Request path (`handle_request`): L1 lookup by (model, params, prompt
//! hash); on a miss, publish to the bounded broker queue with a private
//! reply channel and wait, bounded by the request timeout on the injected
//! clock.
//!
//! Worker path (`process_task`): jobs are identified by the SHA-256 of the
//! full prompt text. A COMPLETE L2 record answers without inference; a
//! PENDING record means another worker owns the job, so wait on the
//! completion board (with a staleness takeover if the owner looks dead); an
//! ERROR record is re-runnable by a fresh request. Actual inference
//! (`process_llm`) holds the exclusive GPU lock, re-checks L2 after
//! acquiring it, cold-starts the model when unloaded, and runs the backend
//! under the retry policy.

use crate::backend::{GenerationOutput, GenerationRequest, InferenceBackend};
use crate::broker::{Broker, QueuedTask};
use crate::cache::{l1_key, L1Cache};
use crate::error::ServeError;
use crate::lifecycle::ModelLifecycle;
use crate::retry::{call_with_retry, RetryPolicy};
use crate::store::{Claim, FsJobStore, JobState};
use grev_core::clock::SharedClock;
use grev_core::hash::sha256_hex;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub queue_cap: usize,
    pub workers: usize,
    pub l1_capacity: usize,
    pub l1_ttl_s: f64,
    pub idle_unload_s: f64,
    pub cold_start_s: f64,
    pub request_timeout_s: f64,
    /// Real-time slice for waiting loops (reply wait, PENDING watch).
    pub pending_poll_s: f64,
    pub retry: RetryPolicy,
    pub l2_dir: PathBuf,
    pub rng_seed: u64,
}

impl ServeConfig {
    pub fn new(l2_dir: PathBuf) -> Self {
        Self {
            queue_cap: 64,
            workers: 4,
            l1_capacity: 4096,
            l1_ttl_s: 600.0,
            idle_unload_s: 600.0,
            cold_start_s: 35.0,
            request_timeout_s: 300.0,
            pending_poll_s: 0.25,
            retry: RetryPolicy::default(),
            l2_dir,
            rng_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub l2_hits: u64,
    pub inferences: u64,
    pub queue_depth: usize,
    pub model_state: String,
}

#[derive(Default)]
struct Counters {
    l1_hits: AtomicU64,
    l1_misses: AtomicU64,
    l2_hits: AtomicU64,
    inferences: AtomicU64,
    correlation: AtomicU64,
}

/// One condvar shared by every job waiter; wakers bump a generation counter
/// and waiters re-read their own job record. Thundering herd is fine at the
/// concurrency this serves.
struct CompletionBoard {
    generation: Mutex<u64>,
    cv: Condvar,
}

impl CompletionBoard {
    fn new() -> Self {
        Self { generation: Mutex::new(0), cv: Condvar::new() }
    }

    fn notify(&self) {
        *self.generation.lock().unwrap() += 1;
        self.cv.notify_all();
    }

    fn wait_slice(&self, timeout: Duration) {
        let guard = self.generation.lock().unwrap();
        let _ = self.cv.wait_timeout(guard, timeout);
    }
}

pub struct Service {
    config: ServeConfig,
    clock: SharedClock,
    backend: Arc<dyn InferenceBackend>,
    l1: Mutex<L1Cache>,
    store: FsJobStore,
    broker: Broker,
    /// Exclusive inference lock: one generation in flight, ever.
    gpu: Mutex<()>,
    lifecycle: Mutex<ModelLifecycle>,
    counters: Counters,
    board: CompletionBoard,
    rng: Mutex<rand_chacha::ChaCha8Rng>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Service {
    pub fn start(
        config: ServeConfig,
        clock: SharedClock,
        backend: Arc<dyn InferenceBackend>,
    ) -> std::io::Result<Arc<Self>> {
        let store = FsJobStore::new(&config.l2_dir)?;
        let service = Arc::new(Self {
            l1: Mutex::new(L1Cache::new(config.l1_capacity, config.l1_ttl_s)),
            broker: Broker::new(config.queue_cap),
            gpu: Mutex::new(()),
            lifecycle: Mutex::new(ModelLifecycle::new()),
            counters: Counters::default(),
            board: CompletionBoard::new(),
            rng: Mutex::new(rand_chacha::ChaCha8Rng::seed_from_u64(config.rng_seed)),
            workers: Mutex::new(Vec::new()),
            store,
            clock,
            backend,
            config,
        });
        for i in 0..service.config.workers.max(1) {
            let rx = service.broker.receiver();
            let svc = service.clone();
            let handle = std::thread::Builder::new()
                .name(format!("serve-worker-{i}"))
                .spawn(move || {
                    while let Ok(task) = rx.recv() {
                        svc.process_task(task);
                    }
                })?;
            service.workers.lock().unwrap().push(handle);
        }
        Ok(service)
    }

    /// Close the queue, drain, and join the workers.
    pub fn stop(&self) {
        self.broker.close();
        let handles: Vec<_> = self.workers.lock().unwrap().drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }

    pub fn backend_label(&self) -> String {
        self.backend.label()
    }

    pub fn stats(&self) -> StatsSnapshot {
        let now = self.clock.now_s();
        let state = {
            let mut lc = self.lifecycle.lock().unwrap();
            lc.maybe_unload(now, self.config.idle_unload_s);
            lc.state().name().to_string()
        };
        StatsSnapshot {
            l1_hits: self.counters.l1_hits.load(Ordering::Relaxed),
            l1_misses: self.counters.l1_misses.load(Ordering::Relaxed),
            l2_hits: self.counters.l2_hits.load(Ordering::Relaxed),
            inferences: self.counters.inferences.load(Ordering::Relaxed),
            queue_depth: self.broker.depth(),
            model_state: state,
        }
    }

    pub fn handle_request(&self, request: GenerationRequest) -> Result<GenerationOutput, ServeError> {
        let now = self.clock.now_s();
        {
            let mut lc = self.lifecycle.lock().unwrap();
            lc.maybe_unload(now, self.config.idle_unload_s);
        }

        let key = l1_key(&request.model_id, &request.params_canonical(), &request.prompt_hash());
        if let Some(text) = self.l1.lock().unwrap().get(&key, now) {
            self.counters.l1_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(GenerationOutput { text });
        }
        self.counters.l1_misses.fetch_add(1, Ordering::Relaxed);

        let correlation_id = self.counters.correlation.fetch_add(1, Ordering::Relaxed) + 1;
        let (reply_tx, reply_rx) = crossbeam_channel::bounded(1);
        self.broker.publish(QueuedTask {
            request,
            reply: reply_tx,
            correlation_id,
            enqueued_s: now,
        })?;

        let deadline = now + self.config.request_timeout_s;
        let result = loop {
            match reply_rx.recv_timeout(Duration::from_secs_f64(self.config.pending_poll_s)) {
                Ok(r) => break r,
                Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                    if self.clock.now_s() >= deadline {
                        log::warn!("request {correlation_id}: reply wait timed out");
                        break Err(ServeError::Timeout { seconds: self.config.request_timeout_s });
                    }
                }
                Err(crossbeam_channel::RecvTimeoutError::Disconnected) => {
                    break Err(ServeError::Internal { detail: "worker dropped the reply".into() })
                }
            }
        };

        if let Ok(out) = &result {
            self.l1.lock().unwrap().put(key, out.text.clone(), self.clock.now_s());
        }
        result
    }

    fn process_task(&self, task: QueuedTask) {
        let j_id = sha256_hex(task.request.prompt.as_bytes());
        match self.store.load(&j_id) {
            Some(r) if r.state == JobState::Complete => {
                self.counters.l2_hits.fetch_add(1, Ordering::Relaxed);
                let _ = task.reply.send(Ok(GenerationOutput { text: r.result.unwrap_or_default() }));
            }
            Some(r) if r.state == JobState::Pending => self.wait_for_peer(&j_id, task),
            // Absent, or ERROR from a previous attempt: this is a fresh
            // request, so run it.
            _ => self.claim_and_run(&j_id, task),
        }
    }

    fn claim_and_run(&self, j_id: &str, task: QueuedTask) {
        match self.store.claim(j_id, self.clock.now_s()) {
            Ok(Claim::AlreadyComplete(r)) => {
                self.counters.l2_hits.fetch_add(1, Ordering::Relaxed);
                let _ = task.reply.send(Ok(GenerationOutput { text: r.result.unwrap_or_default() }));
            }
            Ok(Claim::Run(_)) => self.process_llm(j_id, task),
            Err(e) => {
                let _ = task.reply.send(Err(ServeError::Internal {
                    detail: format!("job store write failed: {e}"),
                }));
            }
        }
    }

    /// Another worker owns this job: watch the record until it resolves. If
    /// the owner's heartbeat (`updated_s`) is older than twice the request
    /// timeout, assume it died and take the job over.
    fn wait_for_peer(&self, j_id: &str, task: QueuedTask) {
        let entered = self.clock.now_s();
        let deadline = entered + self.config.request_timeout_s;
        let stale_after = 2.0 * self.config.request_timeout_s;
        loop {
            match self.store.load(j_id) {
                Some(r) if r.state == JobState::Complete => {
                    self.counters.l2_hits.fetch_add(1, Ordering::Relaxed);
                    let _ =
                        task.reply.send(Ok(GenerationOutput { text: r.result.unwrap_or_default() }));
                    return;
                }
                Some(r) if r.state == JobState::Error => {
                    // The attempt we waited on failed; report its error.
                    let _ = task.reply.send(Err(r
                        .error
                        .unwrap_or(ServeError::Internal { detail: "job failed".into() })));
                    return;
                }
                Some(r) => {
                    let now = self.clock.now_s();
                    if now - r.updated_s >= stale_after {
                        log::warn!(
                            "job {}: pending owner stale ({}s); taking over",
                            &j_id[..8],
                            now - r.updated_s
                        );
                        self.claim_and_run(j_id, task);
                        return;
                    }
                    if now >= deadline {
                        let _ = task.reply.send(Err(ServeError::Timeout {
                            seconds: self.config.request_timeout_s,
                        }));
                        return;
                    }
                    self.board.wait_slice(Duration::from_secs_f64(self.config.pending_poll_s));
                }
                None => {
                    // Record vanished; treat as fresh.
                    self.claim_and_run(j_id, task);
                    return;
                }
            }
        }
    }

    fn process_llm(&self, j_id: &str, task: QueuedTask) {
        let _gpu = self.gpu.lock().unwrap();

        // Double-check after acquiring the lock: a peer may have finished
        // this exact job while we queued for the GPU.
        if let Some(r) = self.store.load(j_id) {
            if r.state == JobState::Complete {
                self.counters.l2_hits.fetch_add(1, Ordering::Relaxed);
                let _ = task.reply.send(Ok(GenerationOutput { text: r.result.unwrap_or_default() }));
                self.board.notify();
                return;
            }
        }

        let cold = self.lifecycle.lock().unwrap().begin_load();
        if cold {
            log::info!("model cold start ({}s)", self.config.cold_start_s);
            self.clock.sleep(self.config.cold_start_s);
            self.lifecycle.lock().unwrap().finish_load(self.clock.now_s());
        }

        self.counters.inferences.fetch_add(1, Ordering::Relaxed);
        let result = {
            let mut rng = self.rng.lock().unwrap();
            call_with_retry(&self.config.retry, &self.clock, &mut *rng, || {
                self.backend.generate(&task.request)
            })
        };

        let now = self.clock.now_s();
        match &result {
            Ok(text) => {
                if let Err(e) = self.store.complete(j_id, text.clone(), now) {
                    log::error!("job {}: failed to persist result: {e}", &j_id[..8]);
                }
            }
            Err(e) => {
                if let Err(werr) = self.store.fail(j_id, e.clone(), now) {
                    log::error!("job {}: failed to persist error: {werr}", &j_id[..8]);
                }
            }
        }
        self.lifecycle.lock().unwrap().note_used(now);
        self.board.notify();
        let _ = task.reply.send(result.map(|text| GenerationOutput { text }));
    }
}
