//! `grev`: one binary for the whole system. `review run` takes a PR event
//! document through analysis, grounding, generation, and comment posting;
//! `review serve` accepts the same documents over HTTP; `serve` hosts the
//! generation service; the `bench` family generates, replays, and reports
//! mutation benchmarks; `audit export` and `rules list` are operator tools.
//!
//! Exit codes: 0 success, 1 domain error (the work itself failed), 2 usage
//! error (bad flags or malformed values).

use clap::{Args, Parser, Subcommand};
use grev_core::analyzer::RuleRegistry;
use grev_core::clock::{real_clock, SharedClock, SimClock};
use grev_core::model::rfc3339_from_unix;
use grev_orchestrator::event::parse_intake;
use grev_orchestrator::review::{ReviewConfig, ReviewEngine, ReviewOutcome, ReviewReport};
use grev_orchestrator::sink::FsSink;
use grev_serving::backend::backend_from_spec;
use serde::Deserialize;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "grev",
    version,
    about = "Grounded code review: static findings anchored to generated comments"
)]
struct Cli {
    /// TOML config file; command-line flags and environment variables win
    /// over values from it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Log filter: error, warn, info, debug, or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,
    /// Time source: "real", "simulated" (sleeps are instant), or
    /// "simulated:<scale>" (sleeps run <scale> times faster than real).
    #[arg(long, global = true, value_name = "SPEC", default_value = "real")]
    clock: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Review pull requests.
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Host the generation service over HTTP.
    Serve(ServeArgs),
    /// Generate, replay, and report mutation benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Inspect the audit log.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Inspect the rule registry.
    #[command(subcommand)]
    Rules(RulesCmd),
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Review one event document and write comments under --out.
    Run(ReviewRunArgs),
    /// Accept event documents over HTTP: POST /v1/events with the same
    /// payload `review run` reads from a file.
    Serve(ReviewServeArgs),
}

#[derive(Args)]
struct ReviewRunArgs {
    /// Event JSON: {repo:{name,root}, pr_number, head_sha?, diff|diff_path}.
    /// Relative paths resolve against the event file's directory.
    #[arg(long, value_name = "FILE")]
    event: PathBuf,
    /// Generation backend: null, scripted:<dir>, failing:<plan>, or an
    /// http(s) URL of a running `grev serve`.
    #[arg(long, value_name = "SPEC", default_value = "null")]
    backend: String,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Audit log location (default: <out>/audit.log).
    #[arg(long, value_name = "FILE")]
    audit: Option<PathBuf>,
    /// Keep the materialized PR workspace for inspection.
    #[arg(long)]
    keep_workspace: bool,
}

#[derive(Args)]
struct ReviewServeArgs {
    /// Bind address, e.g. 127.0.0.1:7979 (port 0 picks a free port).
    #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:7979")]
    listen: String,
    #[arg(long, value_name = "SPEC", default_value = "null")]
    backend: String,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Audit log location (default: <out>/audit.log).
    #[arg(long, value_name = "FILE")]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Bind address. Falls back to SERVE_ADDR, then the config file, then
    /// 127.0.0.1:7878.
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,
    /// Inference backend behind the service.
    #[arg(long, value_name = "SPEC", default_value = "null")]
    backend: String,
    /// State directory (persistent job store lives in <out>/l2).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Bearer token clients must present. Falls back to SERVE_TOKEN, then
    /// the config file; unset means no authentication.
    #[arg(long, value_name = "TOKEN")]
    token: Option<String>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Cut a seeded benchmark from a corpus.
    Gen(BenchGenArgs),
    /// Replay a benchmark against a backend.
    Run(BenchRunArgs),
    /// Fold one or more runs into report files.
    Report(BenchReportArgs),
}

#[derive(Args)]
struct BenchGenArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    #[arg(long, value_name = "N", default_value_t = 20)]
    scenarios: usize,
    #[arg(long, value_name = "S", default_value_t = 42)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchRunArgs {
    /// Benchmark directory produced by `bench gen`.
    #[arg(long, value_name = "DIR")]
    bench: PathBuf,
    #[arg(long, value_name = "SPEC")]
    backend: String,
    /// Label for this run, e.g. "local-7b/strict".
    #[arg(long, value_name = "LABEL")]
    profile: String,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Corpus override; defaults to the snapshot inside the benchmark.
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct BenchReportArgs {
    /// Run directories produced by `bench run`.
    #[arg(long, value_name = "DIR", num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Comma list of output formats: json, csv, svg.
    #[arg(long, value_name = "LIST", default_value = "json,csv,svg")]
    format: String,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AuditCmd {
    /// Print audit records as JSON lines on stdout.
    Export(AuditExportArgs),
}

#[derive(Args)]
struct AuditExportArgs {
    /// Audit log file to read.
    #[arg(long, value_name = "FILE")]
    audit: PathBuf,
    /// Keep records at or after this time (RFC3339 UTC like
    /// 2026-01-01T00:00:00Z, or Unix seconds).
    #[arg(long, value_name = "TS")]
    since: Option<String>,
}

#[derive(Subcommand)]
enum RulesCmd {
    /// Print every rule id with its severity and title.
    List,
}

// === config file ===

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    log_level: Option<String>,
    audit_path: Option<PathBuf>,
    serve: ServeFileConfig,
}

/// `[serve]` table: one key per environment variable, plus tuning knobs
/// that only make sense in a file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ServeFileConfig {
    addr: Option<String>,
    token: Option<String>,
    l1_ttl_s: Option<f64>,
    idle_unload_s: Option<f64>,
    cold_start_s: Option<f64>,
    queue_cap: Option<usize>,
    workers: Option<usize>,
    request_timeout_s: Option<f64>,
    l1_capacity: Option<usize>,
}

enum CliError {
    /// Flags or values were wrong; exit 2 with a synopsis.
    Usage(String),
    /// The work itself failed; exit 1.
    Domain(String),
}

impl CliError {
    fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }
}

const SYNOPSIS: &str = "usage: grev [--config PATH] [--log-level LEVEL] [--clock SPEC] <command>
commands: review run | review serve | serve | bench gen | bench run | bench report | audit export | rules list
run `grev --help` or `grev <command> --help` for details";

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n{SYNOPSIS}");
            2
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    });
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let level = cli
        .log_level
        .clone()
        .or_else(|| file_config.log_level.clone())
        .unwrap_or_else(|| "warn".to_string());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init()
        .ok();

    let clock = parse_clock(&cli.clock).map_err(CliError::Usage)?;

    match cli.command {
        Command::Review(ReviewCmd::Run(args)) => review_run(args, &file_config, clock),
        Command::Review(ReviewCmd::Serve(args)) => review_serve(args, &file_config, clock),
        Command::Serve(args) => serve(args, &file_config, clock),
        Command::Bench(BenchCmd::Gen(args)) => bench_gen(args),
        Command::Bench(BenchCmd::Run(args)) => bench_run(args),
        Command::Bench(BenchCmd::Report(args)) => bench_report(args),
        Command::Audit(AuditCmd::Export(args)) => audit_export(args),
        Command::Rules(RulesCmd::List) => rules_list(),
    }
}

fn parse_clock(spec: &str) -> Result<SharedClock, String> {
    if spec == "real" {
        return Ok(real_clock());
    }
    if spec == "simulated" {
        return Ok(Arc::new(SimClock::new()));
    }
    if let Some(scale) = spec.strip_prefix("simulated:") {
        let scale: f64 = scale
            .parse()
            .map_err(|_| format!("clock scale {scale:?} is not a number"))?;
        if !scale.is_finite() || scale <= 0.0 {
            return Err("clock scale must be a positive number".into());
        }
        return Ok(Arc::new(SimClock::with_scale(scale)));
    }
    Err(format!("unknown clock {spec:?}: use real, simulated, or simulated:<scale>"))
}

fn parse_backend(spec: &str) -> Result<Arc<dyn grev_serving::backend::InferenceBackend>, CliError> {
    backend_from_spec(spec).map_err(CliError::Usage)
}

// === review ===

fn build_review_config(
    base_root: PathBuf,
    out: &Path,
    audit: &Option<PathBuf>,
    file_config: &FileConfig,
) -> ReviewConfig {
    let mut config = ReviewConfig::new(base_root, out.to_path_buf());
    if let Some(path) = audit.clone().or_else(|| file_config.audit_path.clone()) {
        config.audit_path = path;
    }
    // Transient PR checkouts stay inside --out.
    config.work_dir = Some(out.join(".work"));
    config
}

fn summarize(report: &ReviewReport) -> String {
    format!(
        "pr {}#{}: {} finding(s) in scope, {} comment(s) posted, {} suppressed, {} failed, {} stale thread(s) cleaned",
        report.repo,
        report.pr,
        report.findings_in_scope,
        report.comments_posted,
        report.suppressed,
        report.generation_failures,
        report.stale_cleaned.len()
    )
}

fn review_run(
    args: ReviewRunArgs,
    file_config: &FileConfig,
    clock: SharedClock,
) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.event)
        .map_err(|e| CliError::Domain(format!("event {}: {e}", args.event.display())))?;
    let event_dir = args.event.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (event, base_root) = parse_intake(&bytes, &event_dir).map_err(CliError::domain)?;

    let backend = parse_backend(&args.backend)?;
    let mut config = build_review_config(base_root, &args.out, &args.audit, file_config);
    config.keep_workspace = args.keep_workspace;
    let sink = Box::new(FsSink::new(&args.out));
    let mut engine = ReviewEngine::new(config, RuleRegistry::builtin(), clock, backend, sink)
        .map_err(CliError::domain)?;

    match engine.run_review(&event).map_err(CliError::domain)? {
        ReviewOutcome::Completed(report) => {
            if !report.conservation_ok {
                return Err(CliError::Domain(format!(
                    "conservation violated: {} findings != {} + {} + {}",
                    report.findings_in_scope,
                    report.comments_posted,
                    report.suppressed,
                    report.generation_failures
                )));
            }
            println!("{}", summarize(&report));
            println!("report: {}", args.out.join(format!("pr-{}", report.pr)).join("report.json").display());
            Ok(())
        }
        ReviewOutcome::Duplicate { key } => {
            println!("duplicate event, already reviewed: {key}");
            Ok(())
        }
    }
}

/// Set once stdin reaches EOF; lets long-running servers stop gracefully
/// when their parent closes the pipe, without a signal-handling dependency.
fn stdin_closed_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let inner = flag.clone();
    std::thread::Builder::new()
        .name("stdin-watch".into())
        .spawn(move || {
            let mut sink = [0u8; 1024];
            let mut stdin = std::io::stdin();
            loop {
                match stdin.read(&mut sink) {
                    Ok(0) | Err(_) => break,
                    Ok(_) => {}
                }
            }
            inner.store(true, Ordering::SeqCst);
        })
        .expect("spawn stdin watcher");
    flag
}

fn review_serve(
    args: ReviewServeArgs,
    file_config: &FileConfig,
    clock: SharedClock,
) -> Result<(), CliError> {
    let backend = parse_backend(&args.backend)?;
    let server = tiny_http::Server::http(&args.listen)
        .map_err(|e| CliError::Domain(format!("bind {}: {e}", args.listen)))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| CliError::Domain("server has no ip address".into()))?;
    println!("listening on http://{bound}");
    println!("POST /v1/events with an event document; close stdin to stop");
    let stop = stdin_closed_flag();

    let cwd = std::env::current_dir().map_err(CliError::domain)?;
    while !stop.load(Ordering::SeqCst) {
        let Some(mut request) = server
            .recv_timeout(Duration::from_millis(100))
            .map_err(CliError::domain)?
        else {
            continue;
        };
        let (status, body) = match (request.method().as_str(), request.url()) {
            ("GET", "/v1/health") => (200, serde_json::json!({"status": "ok"})),
            ("POST", "/v1/events") => {
                let mut bytes = Vec::new();
                match request.as_reader().take(16 << 20).read_to_end(&mut bytes) {
                    Ok(_) => handle_event(
                        &bytes,
                        &cwd,
                        &args.out,
                        &args.audit,
                        file_config,
                        clock.clone(),
                        backend.clone(),
                    ),
                    Err(e) => (400, serde_json::json!({"error": format!("read body: {e}")})),
                }
            }
            _ => (404, serde_json::json!({"error": "not found"})),
        };
        let data = body.to_string();
        let response = tiny_http::Response::from_string(data)
            .with_status_code(status)
            .with_header(
                tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                    .expect("static header"),
            );
        let _ = request.respond(response);
    }
    Ok(())
}

fn handle_event(
    bytes: &[u8],
    cwd: &Path,
    out: &Path,
    audit: &Option<PathBuf>,
    file_config: &FileConfig,
    clock: SharedClock,
    backend: Arc<dyn grev_serving::backend::InferenceBackend>,
) -> (u16, serde_json::Value) {
    let (event, base_root) = match parse_intake(bytes, cwd) {
        Ok(parsed) => parsed,
        Err(e) => return (400, serde_json::json!({"error": e.to_string()})),
    };
    let config = build_review_config(base_root, out, audit, file_config);
    let sink = Box::new(FsSink::new(out));
    let mut engine =
        match ReviewEngine::new(config, RuleRegistry::builtin(), clock, backend, sink) {
            Ok(engine) => engine,
            Err(e) => return (500, serde_json::json!({"error": e.to_string()})),
        };
    match engine.run_review(&event) {
        Ok(ReviewOutcome::Completed(report)) => {
            (200, serde_json::json!({"status": "completed", "report": *report}))
        }
        Ok(ReviewOutcome::Duplicate { key }) => {
            (200, serde_json::json!({"status": "duplicate", "key": key}))
        }
        Err(e) => (422, serde_json::json!({"error": e.to_string()})),
    }
}

// === serving ===

fn env_var(name: &str) -> Result<Option<String>, CliError> {
    match std::env::var(name) {
        Ok(v) if v.is_empty() => Ok(None),
        Ok(v) => Ok(Some(v)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("environment variable {name}: {e}"))),
    }
}

fn env_parsed<T: std::str::FromStr>(name: &str) -> Result<Option<T>, CliError> {
    match env_var(name)? {
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("environment variable {name}={v:?} is not valid"))),
        None => Ok(None),
    }
}

fn serve(args: ServeArgs, file_config: &FileConfig, clock: SharedClock) -> Result<(), CliError> {
    let fc = &file_config.serve;
    let addr = match args.listen {
        Some(a) => a,
        None => env_var("SERVE_ADDR")?
            .or_else(|| fc.addr.clone())
            .unwrap_or_else(|| "127.0.0.1:7878".to_string()),
    };
    let token = match args.token {
        Some(t) if t.is_empty() => None,
        Some(t) => Some(t),
        None => env_var("SERVE_TOKEN")?.or_else(|| fc.token.clone()),
    };

    let mut config = grev_serving::service::ServeConfig::new(args.out.join("l2"));
    if let Some(v) = env_parsed::<f64>("L1_TTL_S")?.or(fc.l1_ttl_s) {
        config.l1_ttl_s = v;
    }
    if let Some(v) = env_parsed::<f64>("IDLE_UNLOAD_S")?.or(fc.idle_unload_s) {
        config.idle_unload_s = v;
    }
    if let Some(v) = env_parsed::<f64>("COLD_START_S")?.or(fc.cold_start_s) {
        config.cold_start_s = v;
    }
    if let Some(v) = env_parsed::<usize>("QUEUE_CAP")?.or(fc.queue_cap) {
        config.queue_cap = v;
    }
    if let Some(v) = fc.workers {
        config.workers = v;
    }
    if let Some(v) = fc.request_timeout_s {
        config.request_timeout_s = v;
    }
    if let Some(v) = fc.l1_capacity {
        config.l1_capacity = v;
    }

    let backend = parse_backend(&args.backend)?;
    let service = grev_serving::service::Service::start(config, clock, backend)
        .map_err(CliError::domain)?;
    let mut server =
        grev_serving::http::serve(service.clone(), &addr, token, 4).map_err(CliError::domain)?;
    println!("listening on {}", server.base_url());
    println!("backend: {}; close stdin to stop", service.backend_label());

    let stop = stdin_closed_flag();
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    server.stop();
    service.stop();
    Ok(())
}

// === bench ===

fn bench_gen(args: BenchGenArgs) -> Result<(), CliError> {
    if args.scenarios == 0 {
        return Err(CliError::Usage("--scenarios must be at least 1".into()));
    }
    let mut params = grev_bench::generate::GenParams::new(args.corpus, args.out.clone());
    params.n_scenarios = args.scenarios;
    params.seed = args.seed;
    let info = grev_bench::generate::generate_benchmark(&params).map_err(CliError::domain)?;
    println!(
        "generated {} scenario(s), {} hunk(s), {} fixture(s) at {}",
        info.scenarios,
        info.hunks,
        info.fixtures,
        args.out.display()
    );
    println!("corpus snapshot: {}", info.corpus_sha);
    Ok(())
}

fn bench_run(args: BenchRunArgs) -> Result<(), CliError> {
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let corpus = args
        .corpus
        .unwrap_or_else(|| args.bench.join(grev_bench::generate::CORPUS_DIR));
    let backend = parse_backend(&args.backend)?;
    let mut params = grev_bench::replay::ReplayParams::new(
        args.bench,
        corpus,
        &args.profile,
        args.out.clone(),
    );
    params.workers = args.workers;
    let results = grev_bench::replay::replay_benchmark(&params, backend).map_err(CliError::domain)?;

    let mut counts = std::collections::BTreeMap::new();
    for r in &results {
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| format!("{:?}", r.status));
        *counts.entry(status).or_insert(0usize) += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(s, n)| format!("{n} {s}")).collect();
    println!("replayed {} hunk(s): {}", results.len(), summary.join(", "));
    println!(
        "results: {}",
        args.out.join(grev_bench::replay::results_file_name(&args.profile)).display()
    );
    Ok(())
}

fn bench_report(args: BenchReportArgs) -> Result<(), CliError> {
    let formats =
        grev_bench::report::ReportFormat::parse_list(&args.format).map_err(CliError::Usage)?;
    let mut runs = std::collections::BTreeMap::new();
    for dir in &args.runs {
        let (profile, results) =
            grev_bench::replay::load_results(dir).map_err(CliError::domain)?;
        if runs.insert(profile.clone(), results).is_some() {
            return Err(CliError::Domain(format!(
                "two runs share the profile label {profile:?}; relabel one with `bench run --profile`"
            )));
        }
    }
    let registry = RuleRegistry::builtin();
    let report =
        grev_bench::report::build_report(&runs, &registry).map_err(CliError::domain)?;
    for p in &report.profiles {
        println!(
            "{}: reduction {:.4}, intro-frac {:.4}, {} hunk(s)",
            p.profile, p.reduction, p.intro_frac, p.hunks
        );
    }
    let written = grev_bench::report::emit_report(&report, &args.out, &formats)
        .map_err(CliError::domain)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

// === audit & rules ===

fn audit_export(args: AuditExportArgs) -> Result<(), CliError> {
    let since = match &args.since {
        None => None,
        Some(raw) => Some(match raw.parse::<f64>() {
            Ok(secs) if secs.is_finite() => rfc3339_from_unix(secs),
            _ => {
                let looks_rfc3339 = raw.len() >= 20
                    && raw.as_bytes()[4] == b'-'
                    && raw.as_bytes()[10] == b'T'
                    && raw.ends_with('Z');
                if !looks_rfc3339 {
                    return Err(CliError::Usage(format!(
                        "--since {raw:?}: expected RFC3339 UTC (2026-01-01T00:00:00Z) or Unix seconds"
                    )));
                }
                raw.clone()
            }
        }),
    };
    let records =
        grev_core::audit::AuditLog::read_all(&args.audit).map_err(CliError::domain)?;
    let mut out = std::io::stdout().lock();
    for record in records {
        if let Some(since) = &since {
            // Fixed-width RFC3339 UTC compares correctly as text.
            if record.ts.as_str() < since.as_str() {
                continue;
            }
        }
        use std::io::Write;
        serde_json::to_writer(&mut out, &record).map_err(CliError::domain)?;
        writeln!(out).map_err(CliError::domain)?;
    }
    Ok(())
}

fn rules_list() -> Result<(), CliError> {
    let registry = RuleRegistry::builtin();
    println!("standard: {}", registry.standard_name);
    for rule in registry.rules.values() {
        println!("{:<6} {:<8} {}", rule.id, rule.severity.to_string(), rule.title);
    }
    Ok(())
}
