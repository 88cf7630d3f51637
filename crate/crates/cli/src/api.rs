//! `/v1` HTTP routes over a [`Gateway`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cgs_ledger::crypto::{Address, ContentId, Signature};
use cgs_ledger::node::ActionRequest;
use cgs_ledger::service::{ErrorBody, Gateway, GatewayError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

struct ApiError(GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_err(e: impl std::fmt::Display) -> ApiError {
    ApiError(GatewayError::ParseError(e.to_string()))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(parse_err)
}

fn token(headers: &HeaderMap) -> Result<&str, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ApiError(GatewayError::InvalidToken))
}

/// First call: `{address}` returns a challenge. Second call: `{address,
/// signature}` over the challenge bytes returns a session.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginBody {
    address: Address,
    #[serde(default)]
    signature: Option<Signature>,
}

#[derive(Serialize)]
struct Challenge {
    challenge: String,
}

async fn login(State(gw): State<Arc<Gateway>>, bytes: Bytes) -> Result<Response, ApiError> {
    let req: LoginBody = body(&bytes)?;
    Ok(match req.signature {
        None => Json(Challenge { challenge: gw.challenge(&req.address).to_hex() }).into_response(),
        Some(sig) => Json(gw.login(&req.address, &sig)?).into_response(),
    })
}

async fn tasks(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult<cgs_ledger::service::TaskView> {
    Ok(Json(gw.tasks(token(&headers)?)?))
}

async fn action(
    State(gw): State<Arc<Gateway>>,
    Path(case_id): Path<String>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<cgs_ledger::service::Decision> {
    let req: ActionRequest = body(&bytes)?;
    let token = token(&headers)?.to_string();
    // Submission runs consensus rounds synchronously.
    let decision = tokio::task::spawn_blocking(move || gw.submit_decision(&token, &case_id, &req))
        .await
        .map_err(|e| ApiError(GatewayError::Rejected { code: "Internal".into(), reason: e.to_string() }))??;
    Ok(Json(decision))
}

async fn case(
    State(gw): State<Arc<Gateway>>,
    Path(case_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<cgs_ledger::contracts::GuaranteeCase> {
    Ok(Json(gw.case(token(&headers)?, &case_id)?))
}

#[derive(Deserialize)]
struct Range {
    from: Option<u64>,
    to: Option<u64>,
}

async fn blocks(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    range: Result<Query<Range>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Vec<cgs_ledger::ledger::Block>> {
    let Query(r) = range.map_err(parse_err)?;
    Ok(Json(gw.blocks(token(&headers)?, r.from, r.to)?))
}

async fn history(
    State(gw): State<Arc<Gateway>>,
    Path(addr): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Vec<cgs_ledger::service::HistoryItem>> {
    let addr: Address = addr.parse().map_err(parse_err)?;
    Ok(Json(gw.history(token(&headers)?, &addr)?))
}

#[derive(Deserialize)]
struct Cursor {
    #[serde(default)]
    cursor: u64,
}

async fn events(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    cursor: Result<Query<Cursor>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<cgs_ledger::service::EventPage> {
    let Query(c) = cursor.map_err(parse_err)?;
    Ok(Json(gw.events(token(&headers)?, c.cursor)?))
}

async fn document(
    State(gw): State<Arc<Gateway>>,
    Path(cid): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let cid: ContentId = cid.parse().map_err(parse_err)?;
    let bytes = gw.document(token(&headers)?, &cid)?;
    let kind = if serde_json::from_slice::<serde_json::Value>(&bytes).is_ok() {
        "application/json"
    } else {
        "application/octet-stream"
    };
    Ok(([(header::CONTENT_TYPE, kind)], bytes).into_response())
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/login", post(login))
        .route("/v1/tasks", get(tasks))
        .route("/v1/cases/{id}/actions", post(action))
        .route("/v1/cases/{id}", get(case))
        .route("/v1/ledger/blocks", get(blocks))
        .route("/v1/accounts/{addr}/history", get(history))
        .route("/v1/events", get(events))
        .route("/v1/docs/{cid}", get(document))
        .with_state(gateway)
}
