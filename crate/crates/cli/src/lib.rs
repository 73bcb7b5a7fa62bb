//! HTTP/JSON service for interactive sessions, plus helpers shared by the
//! command-line subcommands.

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hitl_abc::design::DesignConfig;
use hitl_abc::session::QuantilePoint;
use hitl_abc::{
    DensitySummary, Error, Preset, SessionConfig, SessionState, SessionStatus, SessionStore,
    SessionSummary,
};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type AppState = Arc<SessionStore>;

/// Body of `POST /sessions`: either a preset with optional tweaks or a full
/// configuration.
#[derive(Debug, Default, Deserialize, Serialize)]
pub struct CreateRequest {
    pub preset: Option<Preset>,
    pub zeta: Option<f64>,
    pub seed: Option<u64>,
    pub n_sim: Option<usize>,
    pub delta: Option<f64>,
    pub config: Option<SessionConfig>,
}

impl CreateRequest {
    pub fn into_config(self) -> Result<SessionConfig, ApiError> {
        let mut config = match (self.config, self.preset) {
            (Some(c), None) => c,
            (None, Some(p)) => {
                SessionConfig::from_preset(p, self.zeta.unwrap_or(0.0), self.seed.unwrap_or(0))
            }
            _ => {
                return Err(ApiError::bad_request(
                    "give exactly one of \"preset\" and \"config\"",
                ))
            }
        };
        if let Some(n) = self.n_sim {
            config.n_sim = n;
        }
        if let Some(delta) = self.delta {
            config.design = DesignConfig {
                delta,
                ..config.design
            };
        }
        Ok(config)
    }
}

#[derive(Debug, Deserialize, Serialize)]
pub struct FeedbackRequest {
    pub iteration: usize,
    pub statistic: usize,
    pub include: bool,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct QueryResponse {
    pub session: SessionSummary,
    pub statistic: usize,
    pub name: String,
    pub utility: f64,
    pub observed: f64,
    pub simulated_quantiles: Vec<QuantilePoint>,
    pub densities: DensitySummary,
}

#[derive(Debug, Deserialize)]
pub struct PosteriorParams {
    pub format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: &str) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "invalid-request",
            message: message.to_string(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::SessionNotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            Error::WrongStatus { .. } => (StatusCode::CONFLICT, "wrong-status"),
            Error::StaleIteration { .. } => (StatusCode::CONFLICT, "stale-iteration"),
            Error::WrongCandidate { .. } => (StatusCode::CONFLICT, "wrong-candidate"),
            Error::AlreadyQueried(_) => (StatusCode::CONFLICT, "already-queried"),
            Error::InvalidArgument(_)
            | Error::InvalidBox { .. }
            | Error::DimensionMismatch { .. }
            | Error::UnknownStatistic { .. }
            | Error::Schema(_) => (StatusCode::BAD_REQUEST, "invalid-request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Runs a store operation off the async executor; session work is CPU bound.
async fn blocking<T: Send + 'static>(
    store: AppState,
    f: impl FnOnce(&SessionStore) -> hitl_abc::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

async fn create_session(
    State(store): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let config = req.into_config()?;
    let summary = blocking(store, move |s| s.create(config)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_session(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(blocking(store, move |s| s.summary(&id)).await?))
}

async fn get_query(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<QueryResponse>, ApiError> {
    let (session, q) = blocking(store, move |s| s.query_view(&id)).await?;
    Ok(Json(QueryResponse {
        session,
        statistic: q.statistic,
        name: q.name,
        utility: q.utility,
        observed: q.observed,
        simulated_quantiles: q.simulated_quantiles,
        densities: q.densities,
    }))
}

async fn post_feedback(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<FeedbackRequest>,
) -> Result<Json<SessionSummary>, ApiError> {
    let summary = blocking(store, move |s| {
        s.post_feedback(&id, req.iteration, req.statistic, req.include)
    })
    .await?;
    Ok(Json(summary))
}

async fn get_posterior(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<PosteriorParams>,
) -> Result<Response, ApiError> {
    let export = blocking(store, move |s| s.export(&id)).await?;
    match params.format.as_deref() {
        None | Some("json") => Ok(Json(export).into_response()),
        Some("csv") => {
            let csv = export.to_csv().map_err(ApiError::from)?;
            Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
        }
        Some(_) => Err(ApiError::bad_request("format must be json or csv")),
    }
}

async fn get_report(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let report = blocking(store, move |s| s.report(&id)).await?;
    Ok(Json(report).into_response())
}

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/posterior", get(get_posterior))
        .route("/sessions/{id}/report", get(get_report))
        .with_state(store)
}

/// Recomputes a saved session from its configuration and feedback log.
/// Fails if a finalized session does not reproduce its recorded selection.
pub fn replay_state(state: &SessionState) -> hitl_abc::Result<hitl_abc::Session> {
    let answers: Vec<(usize, bool)> = state
        .hitl
        .log
        .records()
        .iter()
        .map(|r| (r.statistic, r.feedback))
        .collect();
    let session =
        hitl_abc::Session::replay(state.id.clone(), state.config.clone(), None, &answers)?;
    if state.status == SessionStatus::Finalized {
        let (want, got) = (state.hitl.gamma_hat().bits(), session.summary().gamma_hat);
        if want != got {
            return Err(Error::InvalidArgument(format!(
                "replay selected {got}, session recorded {want}"
            )));
        }
    }
    Ok(session)
}
