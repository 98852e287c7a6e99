//! JSON scoring service over a loaded checkpoint and optional vector stores.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use lwr_core::corpus::{encode, tokenize, Vocabulary};
use lwr_core::masm::{predict, MasmParameters};
use lwr_core::serving::{FastScorer, VectorStore};

use crate::container::Checkpoint;
use crate::error::{LwrError, Result};

pub const DEFAULT_BATCH_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreRequest {
    Ids { query_id: String, product_id: String },
    Text { query: String, title: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorePath {
    Full,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
    pub path: ScorePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub fingerprint: String,
    pub h: usize,
    pub d: usize,
}

/// Everything a request handler reads. Immutable after construction.
#[derive(Debug)]
pub struct ServiceState {
    pub params: MasmParameters,
    pub vocab: Vocabulary,
    pub fingerprint: String,
    pub scorer: Option<FastScorer>,
    pub batch_limit: usize,
}

impl ServiceState {
    /// Checks that the vocabulary and both stores belong to the checkpoint.
    pub fn new(
        checkpoint: Checkpoint,
        vocab: Vocabulary,
        stores: Option<(VectorStore, VectorStore)>,
        batch_limit: usize,
    ) -> Result<Self> {
        checkpoint.check_vocab(vocab.content_hash())?;
        let scorer = match stores {
            Some((q, p)) => Some(FastScorer::new(&checkpoint.params, &checkpoint.fingerprint, &q, &p)?),
            None => None,
        };
        Ok(Self {
            params: checkpoint.params,
            vocab,
            fingerprint: checkpoint.fingerprint,
            scorer,
            batch_limit,
        })
    }

    pub fn health(&self) -> Health {
        Health {
            fingerprint: self.fingerprint.clone(),
            h: self.params.config.h,
            d: self.params.config.d,
        }
    }

    pub fn score(&self, req: &ScoreRequest) -> std::result::Result<ScoreResponse, ApiError> {
        match req {
            ScoreRequest::Text { query, title } => {
                let c = &self.params.config;
                let q = encode(&tokenize(query), &self.vocab, c.query_max_len);
                let t = encode(&tokenize(title), &self.vocab, c.title_max_len);
                let score = predict(&q, &t, &self.params).map_err(|e| ApiError::internal(e.to_string()))?;
                Ok(ScoreResponse {
                    score,
                    path: ScorePath::Full,
                })
            }
            ScoreRequest::Ids { query_id, product_id } => {
                let scorer = self.scorer.as_ref().ok_or_else(|| ApiError {
                    status: StatusCode::NOT_FOUND,
                    body: json!({"error": "no vector stores loaded", "id": query_id}),
                })?;
                match scorer.score_ids(query_id, product_id) {
                    Ok(score) => Ok(ScoreResponse {
                        score,
                        path: ScorePath::Precomputed,
                    }),
                    Err(lwr_core::Error::UnknownId { kind, id }) => Err(ApiError {
                        status: StatusCode::NOT_FOUND,
                        body: json!({"error": format!("unknown {kind} id"), "id": id}),
                    }),
                    Err(e) => Err(ApiError::internal(e.to_string())),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: serde_json::Value,
}

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": msg.into()}),
        }
    }

    fn internal(msg: String) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({"error": msg}),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<ServiceState>;

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

async fn healthz(State(state): State<Shared>) -> Json<Health> {
    Json(state.health())
}

async fn score(State(state): State<Shared>, body: Bytes) -> std::result::Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = parse(&body)?;
    state.score(&req).map(Json)
}

async fn score_batch(
    State(state): State<Shared>,
    body: Bytes,
) -> std::result::Result<Json<Vec<ScoreResponse>>, ApiError> {
    let reqs: Vec<serde_json::Value> = parse(&body)?;
    if reqs.len() > state.batch_limit {
        return Err(ApiError {
            status: StatusCode::PAYLOAD_TOO_LARGE,
            body: json!({"error": format!("batch of {} exceeds limit {}", reqs.len(), state.batch_limit)}),
        });
    }
    let mut out = Vec::with_capacity(reqs.len());
    for value in reqs {
        let req: ScoreRequest =
            serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
        out.push(state.score(&req)?);
    }
    Ok(Json(out))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/score", post(score))
        .route("/score_batch", post(score_batch))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| LwrError::Server(format!("bind {addr}: {e}")))?;
    info!("listening on {}", listener.local_addr().map_err(|e| LwrError::Server(e.to_string()))?);
    axum::serve(listener, router(state))
        .await
        .map_err(|e| LwrError::Server(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shapes_are_distinguished() {
        let ids: ScoreRequest = serde_json::from_str(r#"{"query_id":"q1","product_id":"p2"}"#).unwrap();
        assert!(matches!(ids, ScoreRequest::Ids { .. }));
        let text: ScoreRequest = serde_json::from_str(r#"{"query":"red dress","title":"red dress women"}"#).unwrap();
        assert!(matches!(text, ScoreRequest::Text { .. }));
        assert!(serde_json::from_str::<ScoreRequest>(r#"{"query":"x"}"#).is_err());
    }

    #[test]
    fn response_path_is_lowercase() {
        let r = ScoreResponse {
            score: 0.5,
            path: ScorePath::Precomputed,
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"score":0.5,"path":"precomputed"}"#);
    }
}
