use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clickspoil::cascade::{predict_tag, BinaryScorer, CascadeConfig};
use clickspoil::corpus::SpoilerTag;
use clickspoil::pipeline::backend::{BackendClient, BackendError, BackendSettings, RemoteScorer};
use clickspoil::pipeline::mock::{prompt_target_title, MockBehavior, MockServer};
use clickspoil::spoiler::CompletionBackend;

fn client(server: &MockServer) -> BackendClient {
    client_with(&server.url(), |_| {})
}

fn client_with(url: &str, tweak: impl FnOnce(&mut BackendSettings)) -> BackendClient {
    let mut s = BackendSettings {
        base_url: url.to_string(),
        timeout_ms: 2_000,
        backoff_ms: 5,
        ..Default::default()
    };
    tweak(&mut s);
    BackendClient::new(s)
}

#[test]
fn returns_score() {
    let server = MockServer::start(MockBehavior::constant_score(0.9)).unwrap();
    let c = client(&server);
    assert_eq!(c.score("m", "some title").unwrap(), 0.9);
    assert_eq!(server.counters().score_calls.load(Ordering::SeqCst), 1);
}

#[test]
fn out_of_range_score_names_endpoint() {
    let server = MockServer::start(MockBehavior::constant_score(1.7)).unwrap();
    let err = client(&server).score("m", "t").unwrap_err();
    assert!(matches!(&err, BackendError::ScoreOutOfRange { score, .. } if *score == 1.7), "{err:?}");
    assert!(err.to_string().contains("/v1/score"), "{err}");
    assert!(!err.is_transient());
}

#[test]
fn retries_transient_failures() {
    let server = MockServer::start(MockBehavior {
        fail_first: 2,
        ..MockBehavior::constant_score(0.25)
    })
    .unwrap();
    let c = client(&server);
    assert_eq!(c.score("m", "t").unwrap(), 0.25);
    assert_eq!(c.retries_used(), 2);
    assert_eq!(server.counters().failures_sent.load(Ordering::SeqCst), 2);
}

#[test]
fn gives_up_after_retry_budget() {
    let server = MockServer::start(MockBehavior {
        fail_first: 10,
        ..Default::default()
    })
    .unwrap();
    let c = client_with(&server.url(), |s| s.retries = 1);
    let err = c.score("m", "t").unwrap_err();
    assert_eq!(
        err,
        BackendError::Status {
            endpoint: "/v1/score".into(),
            status: 503
        }
    );
    assert_eq!(server.counters().requests.load(Ordering::SeqCst), 2);
}

#[test]
fn times_out() {
    let server = MockServer::start(MockBehavior {
        delay: Some(Duration::from_millis(600)),
        ..Default::default()
    })
    .unwrap();
    let c = client_with(&server.url(), |s| {
        s.timeout_ms = 100;
        s.retries = 0;
    });
    let err = c.complete("prompt", 8).unwrap_err();
    assert!(matches!(err, BackendError::Timeout { .. }), "{err:?}");
    assert!(err.is_transient());
}

#[test]
fn connection_refused() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let c = client_with(&format!("http://127.0.0.1:{port}"), |s| s.retries = 1);
    let err = c.score("m", "t").unwrap_err();
    assert!(matches!(err, BackendError::ConnectionRefused { .. }), "{err:?}");
    assert_eq!(c.retries_used(), 1);
}

#[test]
fn malformed_body() {
    let server = MockServer::start(MockBehavior {
        raw_body: Some("{\"nope\": 1}".into()),
        ..Default::default()
    })
    .unwrap();
    let c = client(&server);
    assert!(matches!(c.score("m", "t"), Err(BackendError::Malformed { .. })));
    assert!(matches!(c.complete("p", 4), Err(BackendError::Malformed { .. })));
    assert_eq!(c.retries_used(), 0);
}

#[test]
fn not_found_is_not_retried() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let c = client_with(&format!("{}/wrong", server.url()), |_| {});
    let err = c.score("m", "t").unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 404, .. }), "{err:?}");
    assert_eq!(server.counters().requests.load(Ordering::SeqCst), 1);
}

#[test]
fn completion_round_trip() {
    let server = MockServer::start(MockBehavior::default().with_completion(|p, max| {
        format!("{} ({max})", prompt_target_title(p))
    }))
    .unwrap();
    let c = client(&server);
    let prompt = "Instr\n\nTitle: A\n\nArticle: x\n\nSpoiler: y\n\nTitle: Target here\n\nArticle: z\n\nSpoiler:";
    assert_eq!(CompletionBackend::complete(&c, prompt, 12).unwrap(), "Target here (12)");
}

#[test]
fn in_flight_requests_are_bounded() {
    let current = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (cur, pk) = (Arc::clone(&current), Arc::clone(&peak));
    let server = MockServer::start(MockBehavior {
        score: Arc::new(move |_, _| {
            let now = cur.fetch_add(1, Ordering::SeqCst) + 1;
            pk.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(30));
            cur.fetch_sub(1, Ordering::SeqCst);
            0.5
        }),
        ..Default::default()
    })
    .unwrap();
    let c = Arc::new(client_with(&server.url(), |s| s.max_in_flight = 2));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let c = Arc::clone(&c);
            std::thread::spawn(move || c.score("m", &format!("t{i}")).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(peak.load(Ordering::SeqCst) <= 2, "peak {}", peak.load(Ordering::SeqCst));
    assert_eq!(c.requests_sent(), 8);
}

#[test]
fn remote_scorers_drive_the_cascade() {
    let mut table = HashMap::new();
    table.insert(("multi-vs-rest".to_string(), "Ten ways".to_string()), 0.9);
    table.insert(("passage-vs-phrase".to_string(), "Why it broke".to_string()), 0.8);
    let server = MockServer::start(MockBehavior::score_table(table, 0.1)).unwrap();
    let c = Arc::new(client(&server));
    let m1 = RemoteScorer::new(Arc::clone(&c), "multi-vs-rest");
    let m2 = RemoteScorer::new(Arc::clone(&c), "passage-vs-phrase");
    let cfg = CascadeConfig::default();
    assert_eq!(predict_tag("Ten ways", &m1, &m2, &cfg).unwrap().tag, SpoilerTag::Multi);
    assert_eq!(predict_tag("Why it broke", &m1, &m2, &cfg).unwrap().tag, SpoilerTag::Passage);
    assert_eq!(predict_tag("Who won", &m1, &m2, &cfg).unwrap().tag, SpoilerTag::Phrase);
    // multi short-circuits: 1 + 2 + 2 calls
    assert_eq!(server.counters().score_calls.load(Ordering::SeqCst), 5);
    assert_eq!(m1.score("Ten ways").unwrap(), 0.9);
}
