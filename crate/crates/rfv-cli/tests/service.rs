//! HTTP service tests: endpoint behavior and byte-equivalence with
//! in-process retrieval.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use rfv_cli::service::{handle, serve_on, ServiceState};
use rfv_cli::ranked_to_json;
use rfv_core::config::RunConfig;
use rfv_core::retriever::{build_index, embed_text, mips_topk, EmbedderConfig};
use rfv_core::rng::Rng64;
use rfv_core::sim::{default_suite, synthesize_human_bank, SimConfig};
use tiny_http::{Method, Server};

fn test_state() -> ServiceState {
    let mut config = RunConfig::default();
    config.embedder = EmbedderConfig { dim: 32 };
    let sim = SimConfig::default();
    let suite = default_suite(&sim);
    let bank = synthesize_human_bank(&suite, 3, 17, &sim, &config.embedder).unwrap();
    let index = build_index(bank.filter_indoor().entries(), &config.embedder).unwrap();
    ServiceState { bank, index, config }
}

/// Minimal HTTP/1.1 client over a TcpStream; responses use Content-Length.
fn http_request(addr: &str, method: &str, path: &str, body: Option<&str>) -> (u32, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8_lossy(&raw);
    let status: u32 = text
        .lines()
        .next()
        .and_then(|line| line.split_whitespace().nth(1))
        .and_then(|code| code.parse().ok())
        .expect("status line");
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end") + 4;
    (status, raw[split..].to_vec())
}

fn spawn_service(state: ServiceState) -> String {
    let server = Server::http("127.0.0.1:0").unwrap();
    let addr = server.server_addr().to_string();
    std::thread::spawn(move || {
        let _ = serve_on(server, state, 3);
    });
    addr
}

#[test]
fn health_is_ok() {
    let addr = spawn_service(test_state());
    let (status, body) = http_request(&addr, "GET", "/v1/health", None);
    assert_eq!(status, 200);
    assert_eq!(body, b"ok");
}

#[test]
fn retrieve_matches_in_process_byte_for_byte() {
    let state = test_state();
    let embedder = state.config.embedder.clone();
    let index = state.index.clone();
    let mut expected_queries = Vec::new();
    let mut rng = Rng64::new(41);
    let verbs = ["touch", "put", "place", "push", "grab"];
    let colors = ["red", "green", "blue", "yellow", "purple", "orange", "cyan"];
    let nouns = ["marker", "cube", "ball", "block", "tray"];
    for _ in 0..100 {
        expected_queries.push(format!(
            "{} the {} {}",
            verbs[rng.below(verbs.len())],
            colors[rng.below(colors.len())],
            nouns[rng.below(nouns.len())]
        ));
    }

    let addr = spawn_service(state);
    for (i, query) in expected_queries.iter().enumerate() {
        let k = 1 + i % 5;
        let body = serde_json::json!({"query": query, "k": k}).to_string();
        let (status, payload) = http_request(&addr, "POST", "/v1/retrieve", Some(&body));
        assert_eq!(status, 200, "query {i}");
        let http_value: serde_json::Value = serde_json::from_slice(&payload).unwrap();

        let q = embed_text(query, &embedder).unwrap();
        let list = mips_topk(&index, &q, k).unwrap();
        let expected = serde_json::json!({ "results": ranked_to_json(&list) });

        // byte equivalence of the result arrays, not just value equality
        assert_eq!(
            serde_json::to_vec(&http_value["results"]).unwrap(),
            serde_json::to_vec(&expected["results"]).unwrap(),
            "query {i}"
        );
    }
}

#[test]
fn malformed_and_invalid_requests_return_400() {
    let addr = spawn_service(test_state());
    let (status, body) = http_request(&addr, "POST", "/v1/retrieve", Some("{not json"));
    assert_eq!(status, 400);
    let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert!(err["error"].is_string());

    let (status, _) = http_request(
        &addr,
        "POST",
        "/v1/retrieve",
        Some(&serde_json::json!({"query": "x", "k": 0}).to_string()),
    );
    assert_eq!(status, 400);

    let (status, _) = http_request(&addr, "POST", "/v1/retrieve", Some(r#"{"query": "   "}"#));
    assert_eq!(status, 400, "tokenless query is a user error");
}

#[test]
fn entries_endpoint_and_unknown_id() {
    let state = test_state();
    let known = state.bank.entries()[0].entry_id.clone();
    let addr = spawn_service(state);

    let (status, body) = http_request(&addr, "GET", &format!("/v1/entries/{known}"), None);
    assert_eq!(status, 200);
    let meta: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(meta["entry_id"].as_str().unwrap(), known);
    assert!(meta["clip"]["num_frames"].as_u64().unwrap() >= 2);
    assert!(meta.get("blobs").is_none());

    let (status, _) = http_request(&addr, "GET", "/v1/entries/nope", None);
    assert_eq!(status, 404);
}

#[test]
fn concurrent_requests_share_the_immutable_index() {
    let state = test_state();
    let query = state.bank.entries()[0].narration.text.clone();
    let addr: Arc<String> = Arc::new(spawn_service(state));
    let mut joins = Vec::new();
    for _ in 0..8 {
        let addr = Arc::clone(&addr);
        let query = query.clone();
        joins.push(std::thread::spawn(move || {
            let body = serde_json::json!({"query": query, "k": 2}).to_string();
            let (status, payload) = http_request(&addr, "POST", "/v1/retrieve", Some(&body));
            assert_eq!(status, 200);
            payload
        }));
    }
    let results: Vec<Vec<u8>> = joins.into_iter().map(|j| j.join().unwrap()).collect();
    for r in &results[1..] {
        assert_eq!(r, &results[0], "concurrent responses must agree");
    }
}

#[test]
fn handle_is_pure_over_method_and_path() {
    let state = test_state();
    let (status, _) = handle(&state, &Method::Get, "/v1/health", b"");
    assert_eq!(status, 200);
    let (status, _) = handle(&state, &Method::Get, "/nope", b"");
    assert_eq!(status, 404);
}
