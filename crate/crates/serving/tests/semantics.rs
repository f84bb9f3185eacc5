//! End-to-end semantics of the serving stack, driven through the public
//! API with simulated or real clocks. These are the behaviors the rest of
//! the system leans on: exactly-one inference per unique prompt, bounded
//! queueing, lazy model lifecycle, and persistent L2 dedup.

use grev_core::clock::{real_clock, sim_clock, Clock, SharedClock};
use grev_serving::backend::{backend_from_spec, GenerationRequest, InferenceBackend, NullBackend};
use grev_serving::error::ServeError;
use grev_serving::http;
use grev_serving::service::{ServeConfig, Service};
use grev_serving::store::{FsJobStore, JobState};
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;

fn request(prompt: &str) -> GenerationRequest {
    GenerationRequest {
        model_id: "toy".into(),
        params: serde_json::json!({"temperature": 0.0}),
        prompt: prompt.into(),
    }
}

/// Backend that blocks inside `generate` until the test releases a token,
/// recording entry counts and peak concurrency.
struct GatedBackend {
    gate: crossbeam_channel::Receiver<()>,
    entries: AtomicU64,
    concurrent: AtomicI64,
    peak: AtomicI64,
}

impl GatedBackend {
    fn new() -> (Arc<Self>, crossbeam_channel::Sender<()>) {
        let (tx, rx) = crossbeam_channel::unbounded();
        (
            Arc::new(Self {
                gate: rx,
                entries: AtomicU64::new(0),
                concurrent: AtomicI64::new(0),
                peak: AtomicI64::new(0),
            }),
            tx,
        )
    }
}

impl InferenceBackend for GatedBackend {
    fn label(&self) -> String {
        "gated".into()
    }

    fn generate(&self, _req: &GenerationRequest) -> Result<String, ServeError> {
        self.entries.fetch_add(1, Ordering::SeqCst);
        let now = self.concurrent.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let _ = self.gate.recv();
        self.concurrent.fetch_sub(1, Ordering::SeqCst);
        Ok("gated-reply".to_string())
    }
}

#[test]
fn identical_prompts_infer_exactly_once() {
    let dir = tempfile::tempdir().unwrap();
    let (backend, release) = GatedBackend::new();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.workers = 4;
    config.queue_cap = 32;
    config.pending_poll_s = 0.02;
    config.cold_start_s = 0.0;
    let svc = Service::start(config, real_clock(), backend.clone()).unwrap();

    let mut clients = Vec::new();
    for _ in 0..8 {
        let svc = svc.clone();
        clients.push(std::thread::spawn(move || svc.handle_request(request("same prompt"))));
    }
    std::thread::sleep(std::time::Duration::from_millis(300));
    release.send(()).unwrap();

    for c in clients {
        assert_eq!(c.join().unwrap().unwrap().text, "gated-reply");
    }
    let stats = svc.stats();
    assert_eq!(stats.inferences, 1, "single flight");
    assert_eq!(backend.entries.load(Ordering::SeqCst), 1);
    assert_eq!(backend.peak.load(Ordering::SeqCst), 1, "GPU lock is exclusive");
    assert_eq!(stats.l2_hits, 7, "everyone else is served from the job store");
    assert_eq!(stats.l1_hits, 0);
    svc.stop();
}

#[test]
fn distinct_prompts_serialize_on_the_gpu_lock() {
    let dir = tempfile::tempdir().unwrap();
    let (backend, release) = GatedBackend::new();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.workers = 4;
    config.queue_cap = 32;
    config.cold_start_s = 0.0;
    let svc = Service::start(config, real_clock(), backend.clone()).unwrap();

    let mut clients = Vec::new();
    for i in 0..4 {
        let svc = svc.clone();
        clients.push(std::thread::spawn(move || svc.handle_request(request(&format!("p{i}")))));
    }
    std::thread::sleep(std::time::Duration::from_millis(200));
    for _ in 0..4 {
        release.send(()).unwrap();
    }
    for c in clients {
        c.join().unwrap().unwrap();
    }
    assert_eq!(backend.entries.load(Ordering::SeqCst), 4);
    assert_eq!(backend.peak.load(Ordering::SeqCst), 1, "never two inferences at once");
    svc.stop();
}

#[test]
fn full_queue_rejects_immediately_with_queue_full() {
    let dir = tempfile::tempdir().unwrap();
    let (backend, release) = GatedBackend::new();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.workers = 1;
    config.queue_cap = 2;
    config.cold_start_s = 0.0;
    let svc = Service::start(config, real_clock(), backend).unwrap();

    // One request occupies the worker, two more fill the queue.
    let mut clients = Vec::new();
    for i in 0..3 {
        let svc = svc.clone();
        clients.push(std::thread::spawn(move || svc.handle_request(request(&format!("q{i}")))));
        std::thread::sleep(std::time::Duration::from_millis(150));
    }
    let t0 = std::time::Instant::now();
    let overflow = svc.handle_request(request("q-overflow"));
    assert!(matches!(overflow, Err(ServeError::QueueFull)), "{overflow:?}");
    assert!(t0.elapsed().as_millis() < 500, "rejection is immediate, not queued");

    for _ in 0..3 {
        release.send(()).unwrap();
    }
    for c in clients {
        c.join().unwrap().unwrap();
    }
    svc.stop();
}

#[test]
fn cold_start_costs_exactly_the_configured_time_then_warm_is_free() {
    let dir = tempfile::tempdir().unwrap();
    let clock = sim_clock();
    let shared: SharedClock = clock.clone();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.cold_start_s = 35.0;
    let svc = Service::start(config, shared, Arc::new(NullBackend)).unwrap();

    let t0 = clock.now_s();
    svc.handle_request(request("cold")).unwrap();
    assert_eq!(clock.now_s() - t0, 35.0, "first request pays the cold start");
    assert_eq!(svc.stats().model_state, "READY");

    let t1 = clock.now_s();
    svc.handle_request(request("warm")).unwrap();
    assert_eq!(clock.now_s() - t1, 0.0, "warm requests pay nothing");
    svc.stop();
}

#[test]
fn idle_model_unloads_lazily_and_cold_starts_again() {
    let dir = tempfile::tempdir().unwrap();
    let clock = sim_clock();
    let shared: SharedClock = clock.clone();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.cold_start_s = 35.0;
    config.idle_unload_s = 600.0;
    let svc = Service::start(config, shared, Arc::new(NullBackend)).unwrap();

    svc.handle_request(request("a")).unwrap();
    assert_eq!(svc.stats().model_state, "READY");

    clock.advance(599.0);
    assert_eq!(svc.stats().model_state, "READY", "not idle long enough");
    clock.advance(1.0);
    assert_eq!(svc.stats().model_state, "UNLOADED", "idle threshold reached");

    let t0 = clock.now_s();
    svc.handle_request(request("b")).unwrap();
    assert_eq!(clock.now_s() - t0, 35.0, "cold start paid again after unload");
    svc.stop();
}

#[test]
fn transient_failures_retry_with_backoff_then_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let clock = sim_clock();
    let shared: SharedClock = clock.clone();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.cold_start_s = 0.0;
    let backend = backend_from_spec("failing:timeout,timeout,ok").unwrap();
    let svc = Service::start(config, shared, backend).unwrap();

    let t0 = clock.now_s();
    let out = svc.handle_request(request("flaky")).unwrap();
    assert!(out.text.contains("model_version"));
    let elapsed = clock.now_s() - t0;
    // Backoff delays: 1s and 2s, each jittered by at most 20%.
    assert!((2.4..=3.6).contains(&elapsed), "elapsed {elapsed}");
    assert_eq!(svc.stats().inferences, 1, "one inference despite retries");
    svc.stop();
}

#[test]
fn permanent_errors_are_stored_and_rerun_only_on_fresh_requests() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.cold_start_s = 0.0;
    let backend = backend_from_spec("failing:backend,ok").unwrap();
    let svc = Service::start(config, real_clock(), backend).unwrap();

    let first = svc.handle_request(request("p"));
    assert!(
        matches!(&first, Err(ServeError::Backend { detail }) if detail == "injected"),
        "{first:?}"
    );
    let second = svc.handle_request(request("p")).unwrap();
    assert!(second.text.contains("failing-ok"));
    assert_eq!(svc.stats().inferences, 2, "error record was re-runnable");
    assert_eq!(svc.stats().l2_hits, 0);
    svc.stop();
}

#[test]
fn stale_pending_records_are_taken_over() {
    let dir = tempfile::tempdir().unwrap();
    let l2 = dir.path().join("l2");
    let clock = sim_clock();
    clock.advance(10_000.0);
    let shared: SharedClock = clock.clone();
    let mut config = ServeConfig::new(l2.clone());
    config.cold_start_s = 0.0;
    config.request_timeout_s = 300.0;

    // A PENDING record whose owner died 601 sim-seconds ago (staleness
    // threshold is 2x the request timeout).
    let store = FsJobStore::new(&l2).unwrap();
    let req = request("orphaned prompt");
    let j_id = grev_core::hash::sha256_hex(req.prompt.as_bytes());
    let mut rec = store.mark_pending(&j_id, 0.0).unwrap();
    rec.updated_s = 10_000.0 - 601.0;
    store.save(&rec).unwrap();

    let svc = Service::start(config, shared, Arc::new(NullBackend)).unwrap();
    let out = svc.handle_request(req).unwrap();
    assert!(out.text.contains("model_version"));
    assert_eq!(svc.stats().inferences, 1, "takeover ran the job");
    let after = store.load(&j_id).unwrap();
    assert_eq!(after.state, JobState::Complete);
    assert_eq!(after.attempts, 2);
    svc.stop();
}

#[test]
fn waiters_on_a_live_pending_record_time_out_without_takeover() {
    let dir = tempfile::tempdir().unwrap();
    let l2 = dir.path().join("l2");
    let mut config = ServeConfig::new(l2.clone());
    config.cold_start_s = 0.0;
    config.request_timeout_s = 0.6;
    config.pending_poll_s = 0.05;

    let store = FsJobStore::new(&l2).unwrap();
    let req = request("busy prompt");
    let j_id = grev_core::hash::sha256_hex(req.prompt.as_bytes());
    let now = real_clock().now_s();
    let mut rec = store.mark_pending(&j_id, now).unwrap();
    rec.updated_s = now; // fresh heartbeat: owner is alive, just slow
    store.save(&rec).unwrap();

    let svc = Service::start(config, real_clock(), Arc::new(NullBackend)).unwrap();
    let t0 = std::time::Instant::now();
    let result = svc.handle_request(req);
    assert!(matches!(result, Err(ServeError::Timeout { .. })), "{result:?}");
    assert!(t0.elapsed().as_secs_f64() < 3.0);
    assert_eq!(svc.stats().inferences, 0, "no takeover of a live owner");
    svc.stop();
}

#[test]
fn l2_store_survives_a_service_restart() {
    let dir = tempfile::tempdir().unwrap();
    let l2 = dir.path().join("l2");
    {
        let mut config = ServeConfig::new(l2.clone());
        config.cold_start_s = 0.0;
        let svc = Service::start(config, real_clock(), Arc::new(NullBackend)).unwrap();
        svc.handle_request(request("durable")).unwrap();
        assert_eq!(svc.stats().inferences, 1);
        svc.stop();
    }
    let mut config = ServeConfig::new(l2);
    config.cold_start_s = 0.0;
    let svc = Service::start(config, real_clock(), Arc::new(NullBackend)).unwrap();
    svc.handle_request(request("durable")).unwrap();
    let stats = svc.stats();
    assert_eq!(stats.inferences, 0, "answered from the persisted job store");
    assert_eq!(stats.l2_hits, 1);
    svc.stop();
}

#[test]
fn http_round_trip_with_bearer_auth() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServeConfig::new(dir.path().join("l2"));
    config.cold_start_s = 0.0;
    let svc = Service::start(config, real_clock(), Arc::new(NullBackend)).unwrap();
    let mut server = http::serve(svc.clone(), "127.0.0.1:0", Some("sesame".into()), 2).unwrap();

    let good = http::HttpClient::new(server.base_url(), Some("sesame".into()));
    good.health().unwrap();
    let out = good.generate(&request("over http\nAllowed citation lines: 2\n")).unwrap();
    assert!(out.text.contains("model_version"));
    let stats = good.stats().unwrap();
    assert_eq!(stats.inferences, 1);
    assert_eq!(stats.l1_misses, 1);

    let bad = http::HttpClient::new(server.base_url(), Some("wrong".into()));
    assert!(matches!(bad.generate(&request("x")), Err(ServeError::Unauthorized)));
    let missing = http::HttpClient::new(server.base_url(), None);
    assert!(matches!(missing.generate(&request("x")), Err(ServeError::Unauthorized)));

    // Same prompt again: L1 hit, still one inference.
    good.generate(&request("over http\nAllowed citation lines: 2\n")).unwrap();
    assert_eq!(good.stats().unwrap().inferences, 1);
    assert_eq!(good.stats().unwrap().l1_hits, 1);

    server.stop();
    svc.stop();
}
