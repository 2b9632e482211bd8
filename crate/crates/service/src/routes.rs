use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use epigraph::epi::{CompartmentState, AGE_GROUPS, STATES};
use epigraph::scenario::{encode_spatial, run_scenario, sample_init, INPUT_DAYS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;

use crate::api::{Engine, InitialSpec, ScenarioRequest, ScenarioResponse, SCHEMA_VERSION};
use crate::error::ApiError;
use crate::state::AppState;

pub const SCHEMA: &str = include_str!("../schema/scenario.schema.json");
pub const BINARY: &str = "application/octet-stream";

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/graph", get(graph))
        .route("/v1/schema", get(schema))
        .route("/v1/model", get(model))
        .route("/v1/model/load", post(load_model))
        .route("/v1/run", post(run))
        .layer(CorsLayer::permissive())
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.model() {
        Some(m) => Json(json!({
            "status": "ok",
            "graph_id": state.graph_id,
            "horizon": m.checkpoint.spec.horizon,
        }))
        .into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"status": "no_model", "graph_id": state.graph_id}))).into_response(),
    }
}

async fn graph(State(state): State<Arc<AppState>>) -> Response {
    let mut body = serde_json::to_value(state.graph.summary()).expect("summary serializes");
    body["graph_id"] = json!(state.graph_id);
    Json(body).into_response()
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/schema+json")], SCHEMA).into_response()
}

async fn model(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let m = state.model().ok_or_else(ApiError::no_model)?;
    Ok(Json(m.info()).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadRequest {
    path: PathBuf,
}

async fn load_model(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let req: LoadRequest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::invalid((path != ".").then_some(path), e.into_inner().to_string())
    })?;
    let worker = state.clone();
    let loaded = tokio::task::spawn_blocking(move || worker.load_model(&req.path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(loaded.info()).into_response())
}

fn wants_binary(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim().starts_with(BINARY)))
}

fn initial_states(state: &AppState, spec: &InitialSpec) -> Result<Vec<CompartmentState>, ApiError> {
    match spec {
        InitialSpec::Sampled { regime, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            state
                .graph
                .nodes()
                .iter()
                .map(|p| sample_init(&mut rng, *regime, p))
                .collect::<Result<_, _>>()
                .map_err(|e| ApiError::invalid(Some("initial".into()), e.to_string()))
        }
        InitialSpec::States { states } => {
            Ok(states.iter().map(|s| CompartmentState::from_slice(s).expect("lengths validated")).collect())
        }
    }
}

async fn run(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let started = Instant::now();
    let req = ScenarioRequest::parse(&body)?;
    if let Some(id) = &req.graph_id {
        if *id != state.graph_id {
            return Err(ApiError::conflict("graph_mismatch", format!("request targets graph {id}, the service runs {}", state.graph_id)));
        }
    }
    let policy = req.validate(&state.model_config.policy, state.graph.n())?;
    let initial = initial_states(&state, &req.initial)?;
    let horizon = req.horizon as usize;
    let model = match req.engine {
        Engine::Mechanistic => None,
        Engine::Surrogate => {
            let m = state.model().ok_or_else(ApiError::no_model)?;
            if m.checkpoint.spec.horizon != horizon {
                return Err(ApiError::conflict(
                    "horizon_mismatch",
                    format!("loaded checkpoint predicts {} days, request asks for {horizon}", m.checkpoint.spec.horizon),
                ));
            }
            Some(m)
        }
    };
    let permit = state.workers.clone().acquire_owned().await.map_err(|e| ApiError::internal(e.to_string()))?;
    let worker = state.clone();
    let days = match model {
        None => req.simulated_days(),
        Some(_) => INPUT_DAYS as u32 - 1,
    };
    let change_points = policy.change_points().to_vec();
    let values = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let run = run_scenario(Some(&worker.graph), &initial, &worker.model_config, change_points, days, false)
            .map_err(|e| ApiError::simulation(e.to_string()))?;
        match model {
            None => Ok(run.labels(horizon)),
            Some(m) => {
                let features = encode_spatial(&run.inputs(), &run.policy).map_err(|e| ApiError::internal(e.to_string()))?;
                m.network.predict(&features).map_err(|e| ApiError::internal(e.to_string()))
            }
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    let shape = [horizon, state.graph.n(), AGE_GROUPS, STATES];
    if wants_binary(&headers) {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in &values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let shape_text = shape.map(|s| s.to_string()).join(",");
        let mut response = bytes.into_response();
        let h = response.headers_mut();
        h.insert(header::CONTENT_TYPE, HeaderValue::from_static(BINARY));
        h.insert("x-epigraph-shape", HeaderValue::from_str(&shape_text).expect("ascii"));
        h.insert("x-epigraph-start-day", HeaderValue::from(INPUT_DAYS));
        h.insert("x-epigraph-latency-ms", HeaderValue::from_str(&format!("{latency_ms:.3}")).expect("ascii"));
        h.insert("x-epigraph-schema-version", HeaderValue::from(SCHEMA_VERSION));
        return Ok(response);
    }
    Ok(Json(ScenarioResponse {
        schema_version: SCHEMA_VERSION,
        engine: req.engine,
        horizon: req.horizon,
        nodes: state.graph.n(),
        start_day: INPUT_DAYS as u32,
        shape,
        values,
        latency_ms,
        request: req,
    })
    .into_response())
}
