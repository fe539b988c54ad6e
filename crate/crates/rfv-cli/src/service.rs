//! JSON-over-HTTP retrieval service over an immutable index.
//!
//! Endpoints:
//! - `POST /v1/retrieve` body `{"query": str, "k": int, "view": str?}`
//!   -> `{"results": [{"id", "score"}]}`
//! - `GET /v1/entries/{id}` -> entry metadata (no blobs)
//! - `GET /v1/health` -> `ok`
//!
//! The bank and index are loaded once and never mutated; worker threads
//! serve concurrent requests against shared state.

use std::sync::Arc;

use serde::Deserialize;
use tiny_http::{Header, Method, Response, Server};

use rfv_core::bank::Bank;
use rfv_core::config::RunConfig;
use rfv_core::error::{Error, Result};
use rfv_core::retriever::{embed_text, mips_topk, retrieve_per_view, RetrievalIndex};

use crate::ranked_to_json;

pub struct ServiceState {
    pub bank: Bank,
    pub index: RetrievalIndex,
    pub config: RunConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrieveRequest {
    query: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    view: Option<String>,
}

fn json_response(status: u32, body: &serde_json::Value) -> Response<std::io::Cursor<Vec<u8>>> {
    let payload = serde_json::to_vec(body).expect("serializable body");
    Response::from_data(payload)
        .with_status_code(status as u16)
        .with_header(Header::from_bytes("Content-Type", "application/json").unwrap())
}

/// Compute the response for one request; separated from transport for
/// equivalence testing.
pub fn handle(
    state: &ServiceState,
    method: &Method,
    url: &str,
    body: &[u8],
) -> (u32, serde_json::Value) {
    match (method, url) {
        (Method::Get, "/v1/health") => (200, serde_json::json!("ok")),
        (Method::Post, "/v1/retrieve") => {
            let request: RetrieveRequest = match serde_json::from_slice(body) {
                Ok(r) => r,
                Err(e) => return (400, serde_json::json!({"error": e.to_string()})),
            };
            let k = request.k.unwrap_or(rfv_core::retriever::DEFAULT_TOP_K);
            if k == 0 {
                return (400, serde_json::json!({"error": "k must be >= 1"}));
            }
            let outcome = match &request.view {
                Some(view) => retrieve_per_view(
                    &state.index,
                    &request.query,
                    std::slice::from_ref(view),
                    k,
                    &state.config.embedder,
                )
                .map(|mut m| m.remove(view).expect("requested view present")),
                None => embed_text(&request.query, &state.config.embedder)
                    .and_then(|q| mips_topk(&state.index, &q, k)),
            };
            match outcome {
                Ok(list) => (200, serde_json::json!({ "results": ranked_to_json(&list) })),
                Err(e @ Error::EmptyText) => (400, serde_json::json!({"error": e.to_string()})),
                Err(e) => (500, serde_json::json!({"error": e.to_string()})),
            }
        }
        (Method::Get, path) if path.starts_with("/v1/entries/") => {
            let id = &path["/v1/entries/".len()..];
            match state.bank.get_entry(id) {
                None => (404, serde_json::json!({"error": format!("unknown entry {id}")})),
                Some(entry) => (
                    200,
                    serde_json::json!({
                        "entry_id": entry.entry_id,
                        "narration": {
                            "text": entry.narration.text,
                            "indoor": entry.narration.indoor,
                        },
                        "clip": {
                            "fps": entry.clip.fps,
                            "view_id": entry.clip.view_id,
                            "width": entry.clip.width(),
                            "height": entry.clip.height(),
                            "num_frames": entry.clip.frames.len(),
                        },
                        "mask": {
                            "keyframe": entry.mask.keyframe_index,
                            "width": entry.mask.width,
                            "height": entry.mask.height,
                        },
                        "trajectory": {
                            "num_points": entry.trajectory.points.len(),
                            "smoothed": entry.trajectory.smoothed,
                        },
                        "has_embedding": entry.embedding.is_some(),
                        "has_features": entry.frame_features.is_some(),
                    }),
                ),
            }
        }
        _ => (404, serde_json::json!({"error": "not found"})),
    }
}

/// Serve until the process exits. Blocks the calling thread.
pub fn serve(state: ServiceState, port: u16, workers: usize) -> Result<()> {
    let server = Server::http(("0.0.0.0", port))
        .map_err(|e| Error::invariant("service-bind", e.to_string()))?;
    eprintln!("listening on 0.0.0.0:{port}");
    serve_on(server, state, workers)
}

pub fn serve_on(server: Server, state: ServiceState, workers: usize) -> Result<()> {
    let server = Arc::new(server);
    let state = Arc::new(state);
    let mut handles = Vec::new();
    for _ in 0..workers.max(1) {
        let server = Arc::clone(&server);
        let state = Arc::clone(&state);
        handles.push(std::thread::spawn(move || {
            for mut request in server.incoming_requests() {
                let mut body = Vec::new();
                let _ = request.as_reader().read_to_end(&mut body);
                let (status, payload) =
                    handle(&state, request.method(), request.url(), &body);
                let response = if status == 200 && request.url() == "/v1/health" {
                    Response::from_string("ok").boxed()
                } else {
                    json_response(status, &payload).boxed()
                };
                let _ = request.respond(response);
            }
        }));
    }
    for handle in handles {
        let _ = handle.join();
    }
    Ok(())
}
