//! HTTP JSON API under `/api/v1`.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use shadekit_core::service::{PredictRequest, Predictor, SuggestQuery};
use shadekit_core::{Error, Family};

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::UnknownFamily(_) | Error::UnknownOutput(_) | Error::Domain(_) | Error::Infeasible { .. } => {
            StatusCode::BAD_REQUEST
        }
        Error::MissingArtifact(_) => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.0.kind(), "message": self.0.to_string() });
        (status_for(&self.0), Json(body)).into_response()
    }
}

type Shared = Arc<Predictor>;
type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs artifact-touching work off the async executor.
async fn blocking<T, F>(predictor: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Predictor) -> shadekit_core::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&predictor)).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError(Error::Format(format!("worker failed: {e}")))),
    }
}

async fn health(State(p): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "artifacts": p.artifacts().root,
    }))
}

async fn schema(State(p): State<Shared>, Path(family): Path<String>) -> ApiResult<impl serde::Serialize> {
    blocking(p, move |p| p.schema(family.parse::<Family>()?)).await
}

async fn sensitivity(State(p): State<Shared>, Path(family): Path<String>) -> ApiResult<impl serde::Serialize> {
    blocking(p, move |p| {
        let family: Family = family.parse()?;
        p.report(family)?
            .map(|r| (*r).clone())
            .ok_or_else(|| Error::MissingArtifact(p.artifacts().report(family)))
    })
    .await
}

async fn predict(State(p): State<Shared>, Json(req): Json<PredictRequest>) -> ApiResult<impl serde::Serialize> {
    blocking(p, move |p| p.predict(&req)).await
}

async fn suggest(State(p): State<Shared>, Json(q): Json<SuggestQuery>) -> ApiResult<impl serde::Serialize> {
    blocking(p, move |p| p.suggest(&q)).await
}

pub fn router(predictor: Shared) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/schema/:family", get(schema))
        .route("/api/v1/sensitivity/:family", get(sensitivity))
        .route("/api/v1/predict", post(predict))
        .route("/api/v1/suggest", post(suggest))
        .with_state(predictor)
}

/// Serves until ctrl-c.
pub async fn serve(predictor: Shared, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("{}", json!({ "listening": listener.local_addr()?.to_string() }));
    axum::serve(listener, router(predictor))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
