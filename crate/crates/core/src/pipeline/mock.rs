//! In-process mock of the scoring/completion backend, for tests and the
//! `serve-mock` subcommand.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use super::backend::{COMPLETE_PATH, SCORE_PATH};

pub type ScoreFn = Arc<dyn Fn(&str, &str) -> f64 + Send + Sync>;
pub type CompleteFn = Arc<dyn Fn(&str, u32) -> String + Send + Sync>;

/// Text after the last `Title:` label, up to the end of that line.
pub fn prompt_target_title(prompt: &str) -> &str {
    prompt
        .rfind("Title:")
        .map(|i| prompt[i + 6..].lines().next().unwrap_or("").trim())
        .unwrap_or("")
}

#[derive(Clone)]
pub struct MockBehavior {
    /// `(model, text) -> score`.
    pub score: ScoreFn,
    /// `(prompt, max_tokens) -> completion`.
    pub complete: CompleteFn,
    /// The first N requests are answered with HTTP 503.
    pub fail_first: usize,
    /// Replaces every successful response body verbatim.
    pub raw_body: Option<String>,
    /// Sleep before answering.
    pub delay: Option<Duration>,
}

impl Default for MockBehavior {
    fn default() -> Self {
        MockBehavior {
            score: Arc::new(|_, _| 0.5),
            complete: Arc::new(|prompt, _| prompt_target_title(prompt).to_string()),
            fail_first: 0,
            raw_body: None,
            delay: None,
        }
    }
}

impl MockBehavior {
    pub fn constant_score(score: f64) -> Self {
        MockBehavior {
            score: Arc::new(move |_, _| score),
            ..Default::default()
        }
    }

    /// Scores looked up by `(model, text)`, falling back to `default`.
    pub fn score_table(table: HashMap<(String, String), f64>, default: f64) -> Self {
        MockBehavior {
            score: Arc::new(move |m, t| table.get(&(m.to_string(), t.to_string())).copied().unwrap_or(default)),
            ..Default::default()
        }
    }

    pub fn with_completion(mut self, f: impl Fn(&str, u32) -> String + Send + Sync + 'static) -> Self {
        self.complete = Arc::new(f);
        self
    }
}

#[derive(Debug, Default)]
pub struct MockCounters {
    pub requests: AtomicUsize,
    pub score_calls: AtomicUsize,
    pub complete_calls: AtomicUsize,
    pub failures_sent: AtomicUsize,
}

/// A running mock server; stops when dropped.
pub struct MockServer {
    server: Arc<Server>,
    addr: SocketAddr,
    counters: Arc<MockCounters>,
    worker: Option<JoinHandle<()>>,
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body).with_status_code(status).with_header(header)
}

fn handle(mut req: Request, behavior: &MockBehavior, counters: &MockCounters) {
    let n = counters.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(d) = behavior.delay {
        std::thread::sleep(d);
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        let _ = req.respond(json_response(400, json!({"error": "unreadable body"}).to_string()));
        return;
    }
    if n < behavior.fail_first {
        counters.failures_sent.fetch_add(1, Ordering::SeqCst);
        let _ = req.respond(json_response(503, json!({"error": "warming up"}).to_string()));
        return;
    }
    let parsed: Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(e) => {
            let _ = req.respond(json_response(400, json!({"error": e.to_string()}).to_string()));
            return;
        }
    };
    let reply = match (req.method(), req.url()) {
        (Method::Post, SCORE_PATH) => {
            counters.score_calls.fetch_add(1, Ordering::SeqCst);
            let model = parsed["model"].as_str().unwrap_or_default();
            let text = parsed["text"].as_str().unwrap_or_default();
            (200, json!({"score": (behavior.score)(model, text)}).to_string())
        }
        (Method::Post, COMPLETE_PATH) => {
            counters.complete_calls.fetch_add(1, Ordering::SeqCst);
            let prompt = parsed["prompt"].as_str().unwrap_or_default();
            let max_tokens = parsed["max_tokens"].as_u64().unwrap_or(0) as u32;
            (200, json!({"text": (behavior.complete)(prompt, max_tokens)}).to_string())
        }
        _ => (404, json!({"error": "not found"}).to_string()),
    };
    let body = match (&behavior.raw_body, reply.0) {
        (Some(raw), 200) => raw.clone(),
        _ => reply.1,
    };
    let _ = req.respond(json_response(reply.0, body));
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves in the background.
    pub fn start_on(addr: &str, behavior: MockBehavior) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server bound to a non-IP address"))?;
        let counters = Arc::new(MockCounters::default());
        let worker = {
            let server = Arc::clone(&server);
            let counters = Arc::clone(&counters);
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    let behavior = behavior.clone();
                    let counters = Arc::clone(&counters);
                    std::thread::spawn(move || handle(req, &behavior, &counters));
                }
            })
        };
        Ok(MockServer {
            server,
            addr,
            counters,
            worker: Some(worker),
        })
    }

    pub fn start(behavior: MockBehavior) -> std::io::Result<Self> {
        Self::start_on("127.0.0.1:0", behavior)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn counters(&self) -> &MockCounters {
        &self.counters
    }

    /// Blocks until the server is stopped from elsewhere.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
