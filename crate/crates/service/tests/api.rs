use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, HeaderMap, Request, StatusCode};
use axum::Router;
use epigraph::epi::io::ModelConfig;
use epigraph::epi::ContactChangePoint;
use epigraph::metapop::MetapopGraph;
use epigraph::scenario::{run_scenario, sample_init, Regime, SPATIAL_WIDTH};
use epigraph::surrogate::{Checkpoint, ModelSpec, Preset, Surrogate, TrainingMeta};
use epigraph_service::{router, AppState, ScenarioResponse, ServiceConfig, SCHEMA};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_graph() -> MetapopGraph {
    MetapopGraph::synthetic(8, 0.5, 3).unwrap()
}

fn app() -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(small_graph(), ModelConfig::default(), 2));
    (router(state.clone()), state)
}

fn write_checkpoint(dir: &Path, graph: &MetapopGraph, horizon: usize) -> PathBuf {
    let spec = ModelSpec::new(Preset::Desk.hidden(), SPATIAL_WIDTH, horizon, graph.n(), true).unwrap();
    let net = Surrogate::init(spec, Some(graph.adjacency().clone()), horizon as u64).unwrap();
    let path = dir.join(format!("h{horizon}-n{}.egc", graph.n()));
    Checkpoint::from_network(&net, TrainingMeta::untrained(0)).save(&path).unwrap();
    path
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, accept: Option<&str>) -> (StatusCode, HeaderMap, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(a) = accept {
        req = req.header(header::ACCEPT, a);
    }
    let body = match body {
        Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn send_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, _, bytes) = send(app, method, uri, body, None).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn load(app: &Router, path: &Path) -> (StatusCode, Value) {
    send_json(app, "POST", "/v1/model/load", Some(json!({"path": path}))).await
}

fn request(engine: &str, horizon: u32) -> Value {
    json!({
        "engine": engine,
        "initial": {"regime": "outbreak", "seed": 5},
        "change_points": [{"day": 4.0, "reduction": 0.3}, {"day": 12.5, "reduction": 0.6}],
        "horizon": horizon,
    })
}

fn validator(def: &str) -> jsonschema::Validator {
    let mut schema: Value = serde_json::from_str(SCHEMA).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    jsonschema::validator_for(&schema).unwrap()
}

#[tokio::test]
async fn health_is_unavailable_until_a_model_loads() {
    let (app, state) = app();
    let (status, body) = send_json(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "no_model");
    let (status, _) = send_json(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let dir = tempfile::tempdir().unwrap();
    let (status, info) = load(&app, &write_checkpoint(dir.path(), &state.graph, 30)).await;
    assert_eq!(status, StatusCode::OK, "{info}");
    assert_eq!(info["horizon"], 30);
    let (status, body) = send_json(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    let (status, body) = send_json(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["nodes"], 8);
    assert!(body["param_count"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn four_change_points_are_rejected_naming_the_field() {
    let (app, _) = app();
    let mut req = request("mechanistic", 30);
    req["change_points"] = json!([
        {"day": 2, "reduction": 0.1},
        {"day": 5, "reduction": 0.2},
        {"day": 9, "reduction": 0.3},
        {"day": 14, "reduction": 0.4},
    ]);
    assert!(!validator("ScenarioRequest").is_valid(&req));
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_request");
    assert_eq!(body["field"], "change_points");
    assert!(validator("Error").is_valid(&body));
}

#[tokio::test]
async fn invalid_fields_are_reported_by_path() {
    let (app, _) = app();
    let cases = [
        (json!({"change_points": [{"day": 40.0, "reduction": 0.2}]}), "change_points[0].day"),
        (json!({"change_points": [{"day": 3.0, "reduction": 1.0}]}), "change_points[0].reduction"),
        (json!({"change_points": [{"day": 3.0, "reduction": 0.1, "extra": 1}]}), "change_points[0]"),
        (json!({"horizon": 45}), "horizon"),
        (json!({"engine": "oracle"}), "engine"),
    ];
    for (patch, field) in cases {
        let mut req = request("mechanistic", 30);
        for (k, v) in patch.as_object().unwrap() {
            req[k] = v.clone();
        }
        assert!(!validator("ScenarioRequest").is_valid(&req), "{req}");
        let (status, body) = send_json(&app, "POST", "/v1/run", Some(req)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(body["field"].as_str().unwrap().starts_with(field), "{body} vs {field}");
    }

    let mut req = request("mechanistic", 30);
    req["initial"] = json!({"states": vec![vec![0.0; 48]]});
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "initial.states");

    let mut states = vec![vec![10.0; 48]; 8];
    states[3].truncate(47);
    let mut req = request("mechanistic", 30);
    req["initial"] = json!({"states": states});
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "initial.states[3]");

    let (status, _, _) = send(&app, "POST", "/v1/run", None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn surrogate_requests_need_a_matching_model() {
    let (app, state) = app();
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(request("surrogate", 30))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "no_model");

    let dir = tempfile::tempdir().unwrap();
    load(&app, &write_checkpoint(dir.path(), &state.graph, 30)).await;
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(request("surrogate", 60))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "horizon_mismatch");

    let mut req = request("surrogate", 30);
    req["graph_id"] = json!("0000000000000000");
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(req)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "graph_mismatch");
}

#[tokio::test]
async fn checkpoints_for_other_graphs_are_refused() {
    let (app, _) = app();
    let dir = tempfile::tempdir().unwrap();
    let other = MetapopGraph::synthetic(8, 0.5, 99).unwrap();
    assert_ne!(other.adjacency(), small_graph().adjacency());
    let (status, body) = load(&app, &write_checkpoint(dir.path(), &other, 30)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "graph_mismatch");

    let bigger = MetapopGraph::synthetic(10, 0.5, 3).unwrap();
    let (status, _) = load(&app, &write_checkpoint(dir.path(), &bigger, 30)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = load(&app, &dir.path().join("missing.egc")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "path");
}

#[tokio::test]
async fn responses_match_the_published_schema() {
    let (app, state) = app();
    let dir = tempfile::tempdir().unwrap();
    let check = validator("ScenarioResponse");
    for horizon in [30u32, 60, 90] {
        load(&app, &write_checkpoint(dir.path(), &state.graph, horizon as usize)).await;
        for engine in ["mechanistic", "surrogate"] {
            let req = request(engine, horizon);
            assert!(validator("ScenarioRequest").is_valid(&req));
            let (status, body) = send_json(&app, "POST", "/v1/run", Some(req)).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            let errors: Vec<String> = check.iter_errors(&body).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{engine} {horizon}: {errors:?}");
            let resp: ScenarioResponse = serde_json::from_value(body).unwrap();
            assert_eq!(resp.shape, [horizon as usize, 8, 6, 8]);
            assert_eq!(resp.values.len(), horizon as usize * 8 * 48);
        }
    }
}

#[tokio::test]
async fn mechanistic_runs_match_the_core_simulator() {
    let (app, state) = app();
    let (status, body) = send_json(&app, "POST", "/v1/run", Some(request("mechanistic", 30))).await;
    assert_eq!(status, StatusCode::OK);
    let resp: ScenarioResponse = serde_json::from_value(body).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let initial: Vec<_> = state.graph.nodes().iter().map(|p| sample_init(&mut rng, Regime::Outbreak, p).unwrap()).collect();
    let cps = vec![ContactChangePoint::new(4.0, 0.3), ContactChangePoint::new(12.5, 0.6)];
    let run = run_scenario(Some(&state.graph), &initial, &ModelConfig::default(), cps, 34, false).unwrap();
    assert_eq!(resp.values, run.labels(30));
    assert_eq!(resp.start_day, 5);

    let mut explicit = request("mechanistic", 30);
    let states: Vec<Vec<f64>> = initial.iter().map(|s| s.as_slice().to_vec()).collect();
    explicit["initial"] = json!({"states": states});
    let (_, body) = send_json(&app, "POST", "/v1/run", Some(explicit)).await;
    let again: ScenarioResponse = serde_json::from_value(body).unwrap();
    assert_eq!(again.values, resp.values);
}

#[tokio::test]
async fn surrogate_runs_are_deterministic_and_binary_matches_json() {
    let (app, state) = app();
    let dir = tempfile::tempdir().unwrap();
    let path = write_checkpoint(dir.path(), &state.graph, 30);
    load(&app, &path).await;
    let (_, a) = send_json(&app, "POST", "/v1/run", Some(request("surrogate", 30))).await;
    let (_, b) = send_json(&app, "POST", "/v1/run", Some(request("surrogate", 30))).await;
    assert_eq!(a["values"], b["values"]);

    let (status, headers, bytes) = send(&app, "POST", "/v1/run", Some(request("surrogate", 30)), Some("application/octet-stream")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "application/octet-stream");
    assert_eq!(headers["x-epigraph-shape"], "30,8,6,8");
    assert_eq!(headers["x-epigraph-schema-version"], "1");
    assert_eq!(headers["x-epigraph-start-day"], "5");
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let json_values: Vec<f32> = serde_json::from_value(a["values"].clone()).unwrap();
    assert_eq!(values, json_values);
}

#[tokio::test]
async fn graph_and_schema_endpoints() {
    let (app, state) = app();
    let (status, body) = send_json(&app, "GET", "/v1/graph", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["n"], 8);
    assert_eq!(body["graph_id"], state.graph_id.as_str());
    assert!(body["symmetric"].as_bool().unwrap());

    let mut req = request("mechanistic", 30);
    req["graph_id"] = json!(state.graph_id);
    let (status, _) = send_json(&app, "POST", "/v1/run", Some(req)).await;
    assert_eq!(status, StatusCode::OK);

    let (status, headers, bytes) = send(&app, "GET", "/v1/schema", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "application/schema+json");
    let schema: Value = serde_json::from_slice(&bytes).unwrap();
    assert!(jsonschema::meta::is_valid(&schema));
    assert!(schema["$defs"]["ScenarioRequest"].is_object());
}

#[test]
fn graph_id_depends_only_on_the_adjacency() {
    let a = epigraph_service::graph_id(&small_graph());
    assert_eq!(a, epigraph_service::graph_id(&small_graph()));
    assert_eq!(a.len(), 16);
    assert_ne!(a, epigraph_service::graph_id(&MetapopGraph::synthetic(8, 0.5, 99).unwrap()));
}

#[test]
fn config_reads_toml_and_env_overrides() {
    let config = ServiceConfig::from_toml(
        r#"
        port = 9000
        workers = 3
        [synthetic_graph]
        n = 12
        density = 0.3
        seed = 4
        "#,
    )
    .unwrap();
    assert_eq!(config.port, 9000);
    assert_eq!(config.synthetic_graph.n, 12);
    assert_eq!(config.host, "127.0.0.1");

    let env = |k: &str| match k {
        "EPIGRAPH_PORT" => Some("9100".to_string()),
        "EPIGRAPH_HOST" => Some("0.0.0.0".to_string()),
        "EPIGRAPH_CHECKPOINT" => Some("/tmp/m.egc".to_string()),
        _ => None,
    };
    let config = config.with_env(env).unwrap();
    assert_eq!(config.port, 9100);
    assert_eq!(config.host, "0.0.0.0");
    assert_eq!(config.checkpoint, Some(PathBuf::from("/tmp/m.egc")));
    assert_eq!(config.worker_count(), 3);

    assert!(ServiceConfig::from_toml("colour = 1").is_err());
    assert!(ServiceConfig::default().with_env(|k| (k == "EPIGRAPH_PORT").then(|| "x".to_string())).is_err());
}

#[test]
fn state_from_config_loads_graph_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph();
    let graph_path = dir.path().join("graph.json");
    std::fs::write(&graph_path, serde_json::to_vec(&graph).unwrap()).unwrap();
    let config = ServiceConfig {
        graph: Some(graph_path),
        checkpoint: Some(write_checkpoint(dir.path(), &graph, 60)),
        workers: 1,
        ..ServiceConfig::default()
    };
    let state = AppState::from_config(&config).unwrap();
    assert_eq!(state.graph.n(), 8);
    assert_eq!(state.model().unwrap().checkpoint.spec.horizon, 60);

    let bad = ServiceConfig { checkpoint: Some(dir.path().join("none.egc")), ..config };
    assert!(AppState::from_config(&bad).is_err());
}

#[tokio::test]
async fn graph_density_matches_the_generator_target() {
    let config = ServiceConfig {
        synthetic_graph: epigraph::scenario::GraphSpec { n: 40, density: 0.25, seed: 2 },
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(AppState::from_config(&config).unwrap()));
    let (_, body) = send_json(&app, "GET", "/v1/graph", None).await;
    let pairs = 40.0 * 39.0 / 2.0;
    let density = body["density"].as_f64().unwrap();
    assert!((density - 0.25).abs() <= 0.5 / pairs, "density {density}");
    assert_eq!(body["n"], 40);
}

#[tokio::test]
async fn both_engines_answer_the_same_request_comparably() {
    let (app, state) = app();
    let dir = tempfile::tempdir().unwrap();
    load(&app, &write_checkpoint(dir.path(), &state.graph, 90)).await;
    let mut req = request("surrogate", 90);
    req["change_points"] = json!([
        {"day": 3, "reduction": 0.2},
        {"day": 11, "reduction": 0.5},
        {"day": 24, "reduction": 0.1},
    ]);
    let (status, sur) = send_json(&app, "POST", "/v1/run", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK);
    req["engine"] = json!("mechanistic");
    let (status, mech) = send_json(&app, "POST", "/v1/run", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    let sur: ScenarioResponse = serde_json::from_value(sur).unwrap();
    let mech: ScenarioResponse = serde_json::from_value(mech).unwrap();
    assert_eq!(sur.shape, mech.shape);
    assert_eq!(sur.values.len(), 90 * 8 * 48);
    assert_eq!(sur.request.change_points, mech.request.change_points);
    let gap = epigraph::eval::mape(&sur.values, &mech.values);
    assert!(gap.participating > 0);
    assert!(gap.mape.unwrap().is_finite());
}
