//! HTTP surface for the serving core.
//!
//! Endpoints:
//! * `POST /v1/generate` `{model_id, params, prompt}` -> `{text}`; bearer
//!   auth when a token is configured.
//! * `GET /v1/health` -> `{"status":"ok"}`
//! * `GET /v1/stats` -> counters, queue depth, model state.
//!
//! Errors come back as `{"error": <tagged ServeError>, "message": "..."}`
//! with a matching status code, so the client can reconstruct the exact
//! error across the wire.

use crate::backend::{GenerationOutput, GenerationRequest, InferenceBackend};
use crate::error::ServeError;
use crate::service::{Service, StatsSnapshot};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

// === server ===

pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    threads: Vec<JoinHandle<()>>,
    stop_flag: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl HttpServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(&mut self) {
        self.stop_flag.store(true, Ordering::SeqCst);
        for _ in 0..self.threads.len() {
            self.server.unblock();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serve the API over HTTP. `addr` may use port 0 to pick a free port;
/// the bound address is available on the returned handle.
pub fn serve(
    service: Arc<Service>,
    addr: &str,
    token: Option<String>,
    handler_threads: usize,
) -> std::io::Result<HttpServer> {
    let server = Arc::new(
        tiny_http::Server::http(addr)
            .map_err(|e| std::io::Error::other(format!("bind {addr}: {e}")))?,
    );
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server has no ip addr"))?;
    let stop_flag = Arc::new(AtomicBool::new(false));
    let token = Arc::new(token);
    let mut threads = Vec::new();
    for i in 0..handler_threads.max(1) {
        let server = server.clone();
        let service = service.clone();
        let token = token.clone();
        let stop = stop_flag.clone();
        threads.push(
            std::thread::Builder::new()
                .name(format!("http-{i}"))
                .spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match server.recv() {
                            Ok(request) => handle(request, &service, token.as_deref()),
                            Err(_) => break,
                        }
                    }
                })?,
        );
    }
    log::info!("serving on http://{bound}");
    Ok(HttpServer { server, threads, stop_flag, addr: bound })
}

fn handle(mut request: tiny_http::Request, service: &Service, token: Option<&str>) {
    let method = request.method().clone();
    let url = request.url().to_string();
    let response = match (method, url.as_str()) {
        (tiny_http::Method::Post, "/v1/generate") => {
            if !authorized(&request, token) {
                error_body(&ServeError::Unauthorized)
            } else {
                let mut body = String::new();
                if request.as_reader().read_to_string(&mut body).is_err() {
                    error_body(&ServeError::Internal { detail: "unreadable body".into() })
                } else {
                    match serde_json::from_str::<GenerationRequest>(&body) {
                        Ok(req) => match service.handle_request(req) {
                            Ok(out) => (200, serde_json::json!({ "text": out.text }).to_string()),
                            Err(e) => error_body(&e),
                        },
                        Err(e) => (
                            400,
                            serde_json::json!({
                                "message": format!("bad request: {e}")
                            })
                            .to_string(),
                        ),
                    }
                }
            }
        }
        (tiny_http::Method::Get, "/v1/health") => {
            (200, serde_json::json!({"status": "ok"}).to_string())
        }
        (tiny_http::Method::Get, "/v1/stats") => (
            200,
            serde_json::to_string(&service.stats()).expect("stats serialize"),
        ),
        _ => (404, serde_json::json!({"message": "not found"}).to_string()),
    };
    respond_json(request, response.0, &response.1);
}

fn authorized(request: &tiny_http::Request, token: Option<&str>) -> bool {
    let Some(expected) = token else { return true };
    request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.as_str() == format!("Bearer {expected}"))
        .unwrap_or(false)
}

fn error_body(e: &ServeError) -> (u16, String) {
    (
        e.status_code(),
        serde_json::json!({
            "error": e,
            "message": e.to_string(),
        })
        .to_string(),
    )
}

fn respond_json(request: tiny_http::Request, status: u16, body: &str) {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    let response = tiny_http::Response::from_string(body)
        .with_status_code(tiny_http::StatusCode(status))
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::debug!("client went away: {e}");
    }
}

// === client ===

pub struct HttpClient {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl HttpClient {
    pub fn new(base: String, token: Option<String>) -> Self {
        let config = ureq::config::Config::builder()
            .timeout_global(Some(Duration::from_secs(330)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.new_agent(),
            base: base.trim_end_matches('/').to_string(),
            token,
        }
    }

    fn post(&self, path: &str, body: &impl serde::Serialize) -> Result<(u16, serde_json::Value), ServeError> {
        let url = format!("{}{}", self.base, path);
        let mut req = self.agent.post(&url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut res = req.send_json(body).map_err(map_transport_error)?;
        let status = res.status().as_u16();
        let value: serde_json::Value = res
            .body_mut()
            .read_json()
            .map_err(|e| ServeError::Connection { detail: format!("bad response body: {e}") })?;
        Ok((status, value))
    }

    fn get(&self, path: &str) -> Result<(u16, serde_json::Value), ServeError> {
        let url = format!("{}{}", self.base, path);
        let mut req = self.agent.get(&url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut res = req.call().map_err(map_transport_error)?;
        let status = res.status().as_u16();
        let value: serde_json::Value = res
            .body_mut()
            .read_json()
            .map_err(|e| ServeError::Connection { detail: format!("bad response body: {e}") })?;
        Ok((status, value))
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutput, ServeError> {
        let (status, value) = self.post("/v1/generate", request)?;
        if (200..300).contains(&status) {
            Ok(GenerationOutput {
                text: value.get("text").and_then(|t| t.as_str()).unwrap_or_default().to_string(),
            })
        } else {
            Err(decode_error(status, &value))
        }
    }

    pub fn stats(&self) -> Result<StatsSnapshot, ServeError> {
        let (status, value) = self.get("/v1/stats")?;
        if status == 200 {
            serde_json::from_value(value)
                .map_err(|e| ServeError::Connection { detail: format!("bad stats body: {e}") })
        } else {
            Err(decode_error(status, &value))
        }
    }

    pub fn health(&self) -> Result<(), ServeError> {
        let (status, _) = self.get("/v1/health")?;
        if status == 200 {
            Ok(())
        } else {
            Err(ServeError::Connection { detail: format!("health returned {status}") })
        }
    }
}

fn decode_error(status: u16, value: &serde_json::Value) -> ServeError {
    value
        .get("error")
        .cloned()
        .and_then(|e| serde_json::from_value::<ServeError>(e).ok())
        .unwrap_or(ServeError::Backend { detail: format!("http {status}") })
}

fn map_transport_error(e: ureq::Error) -> ServeError {
    match e {
        ureq::Error::Timeout(_) => ServeError::Timeout { seconds: 330.0 },
        other => ServeError::Connection { detail: other.to_string() },
    }
}

/// Forwards generation to a remote serving endpoint; used when the review
/// pipeline talks to a separately running server.
pub struct HttpBackend {
    client: HttpClient,
}

impl HttpBackend {
    pub fn new(url: String, token: Option<String>) -> Self {
        Self { client: HttpClient::new(url, token) }
    }
}

impl InferenceBackend for HttpBackend {
    fn label(&self) -> String {
        format!("http:{}", self.client.base)
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, ServeError> {
        self.client.generate(req).map(|o| o.text)
    }
}
