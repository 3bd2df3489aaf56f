use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;

use tension_core::embed::{nearest_neighbors, DEFAULT_RELATED_K};
use tension_core::ingest::{Language, ParagraphId};
use tension_core::pipeline::{provider_index, unanswered};
use tension_core::store::{QueryFilter, QueryOrder};
use tension_core::topics::TopicExport;

use crate::error::ApiError;
use crate::state::{no_open_round, AnnotationRequest, AppState, TrainRequest};
use crate::views::{BatchItem, BatchView, MetricsView, ParagraphView, RelatedView, Renderer};

pub const DEFAULT_LIMIT: usize = 50;
pub const MAX_LIMIT: usize = 500;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/paragraphs", get(list_paragraphs))
        .route("/paragraphs/{id}", get(get_paragraph))
        .route("/paragraphs/{id}/related", get(related))
        .route("/topics", get(topics))
        .route("/active-learning/batch", get(batch))
        .route("/annotations", post(annotate))
        .route("/train", post(train))
        .route("/jobs/{id}", get(job))
        .route("/models/current/metrics", get(metrics))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn query_pairs(raw: Option<String>) -> Result<Vec<(String, String)>, ApiError> {
    serde_urlencoded::from_str(raw.as_deref().unwrap_or(""))
        .map_err(|e| ApiError::bad_request("invalid_query", e.to_string()))
}

fn parse_count(key: &str, value: &str, max: usize) -> Result<usize, ApiError> {
    let n: usize = value.parse().map_err(|_| {
        ApiError::bad_request(
            "invalid_parameter",
            format!("{key} must be a non-negative integer"),
        )
    })?;
    if n > max {
        return Err(ApiError::bad_request(
            "limit_exceeded",
            format!("{key} is {n}; the maximum is {max}"),
        ));
    }
    Ok(n)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn list_paragraphs(
    State(state): State<AppState>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Vec<ParagraphView>> {
    let mut filter = QueryFilter::default();
    let mut order = QueryOrder::Date;
    let mut limit = DEFAULT_LIMIT;
    for (key, value) in query_pairs(raw)? {
        match key.as_str() {
            "session" => filter.sessions.push(value),
            "actor" => filter.actors.push(value),
            "order" => {
                order = value
                    .parse()
                    .map_err(|e: String| ApiError::bad_request("invalid_parameter", e))?
            }
            "limit" => limit = parse_count("limit", &value, MAX_LIMIT)?,
            "language" => {
                filter.language = Some(match value.as_str() {
                    "en" => Language::En,
                    "fr" => Language::Fr,
                    "other" => Language::Other,
                    _ => {
                        return Err(ApiError::bad_request(
                            "invalid_parameter",
                            "language must be `en`, `fr` or `other`",
                        ))
                    }
                })
            }
            "labelled" => {
                filter.labelled = Some(value.parse().map_err(|_| {
                    ApiError::bad_request("invalid_parameter", "labelled must be true or false")
                })?)
            }
            other => {
                return Err(ApiError::bad_request(
                    "unknown_parameter",
                    format!("unknown query parameter `{other}`"),
                ))
            }
        }
    }
    let corpus = state.snapshot();
    let render = Renderer::new(&corpus);
    Ok(Json(
        corpus
            .query(&filter, order, limit)
            .into_iter()
            .map(|p| render.view(p))
            .collect(),
    ))
}

async fn get_paragraph(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<ParagraphView> {
    let corpus = state.snapshot();
    let p = corpus
        .paragraph(&ParagraphId::new(id.clone()))
        .ok_or_else(|| ApiError::not_found(format!("no paragraph {id}")))?;
    Ok(Json(Renderer::new(&corpus).view(p)))
}

async fn related(
    State(state): State<AppState>,
    Path(id): Path<String>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Vec<RelatedView>> {
    let mut k = DEFAULT_RELATED_K;
    for (key, value) in query_pairs(raw)? {
        match key.as_str() {
            "k" => k = parse_count("k", &value, MAX_LIMIT)?,
            other => {
                return Err(ApiError::bad_request(
                    "unknown_parameter",
                    format!("unknown query parameter `{other}`"),
                ))
            }
        }
    }
    let corpus = state.snapshot();
    let pid = ParagraphId::new(id.clone());
    if corpus.paragraph(&pid).is_none() {
        return Err(ApiError::not_found(format!("no paragraph {id}")));
    }
    let Some(query) = corpus.embeddings.get(&pid) else {
        return Err(ApiError::conflict(
            "not_embedded",
            format!("paragraph {id} has no embedding; run `tension embed` first"),
        ));
    };
    let pool = provider_index(&corpus, query.provider_id());
    let hits = nearest_neighbors(&pid, k, &pool).map_err(|e| ApiError::internal(e.to_string()))?;
    let render = Renderer::new(&corpus);
    let index = corpus.paragraph_index();
    Ok(Json(
        hits.into_iter()
            .filter_map(|(hit, similarity)| {
                index.get(&hit).map(|p| RelatedView {
                    similarity,
                    paragraph: render.view(p),
                })
            })
            .collect(),
    ))
}

async fn topics(State(state): State<AppState>) -> ApiResult<Vec<TopicExport>> {
    Ok(Json(
        state
            .snapshot()
            .topics
            .iter()
            .map(TopicExport::from)
            .collect(),
    ))
}

async fn batch(State(state): State<AppState>) -> ApiResult<BatchView> {
    let corpus = state.snapshot();
    let retraining = state.training_pending();
    let open = corpus
        .state
        .al
        .as_ref()
        .filter(|s| !s.pending_ids.is_empty());
    let Some(al) = open else {
        if retraining {
            return Ok(Json(BatchView {
                round: corpus.state.al.as_ref().map(|s| s.round),
                threshold: corpus.state.al.as_ref().map(|s| s.threshold),
                retraining,
                items: Vec::new(),
            }));
        }
        return Err(no_open_round());
    };
    let open_ids = unanswered(&corpus);
    let render = Renderer::new(&corpus);
    let items = al
        .pending_ids
        .iter()
        .filter_map(|id| corpus.paragraph(id))
        .map(|p| BatchItem {
            answered: !open_ids.contains(&p.id),
            paragraph: render.view(p),
        })
        .collect();
    Ok(Json(BatchView {
        round: Some(al.round),
        threshold: Some(al.threshold),
        retraining,
        items,
    }))
}

async fn annotate(State(state): State<AppState>, body: Bytes) -> impl IntoResponse {
    let request: AnnotationRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    match blocking(move || state.annotate(request)).await {
        Ok(receipt) => Json(receipt).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn train(State(state): State<AppState>, body: Bytes) -> impl IntoResponse {
    let request: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        match parse_body(&body) {
            Ok(r) => r,
            Err(e) => return e.into_response(),
        }
    };
    match blocking(move || state.start_training(&request)).await {
        Ok(id) => (
            StatusCode::ACCEPTED,
            Json(json!({"job_id": id, "status": "running"})),
        )
            .into_response(),
        Err(e) => e.into_response(),
    }
}

async fn job(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<crate::views::JobView> {
    state
        .job(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
}

async fn metrics(State(state): State<AppState>) -> ApiResult<MetricsView> {
    let corpus = state.snapshot();
    let record = corpus.state.current_model.as_ref().ok_or_else(|| {
        ApiError::not_found("no model has been trained yet; start one with POST /train")
    })?;
    Ok(Json(MetricsView::new(record)))
}
