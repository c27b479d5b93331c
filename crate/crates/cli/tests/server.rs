mod common;

use std::collections::BTreeSet;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use drugnet::{pipeline, ArtifactStore, GraphKind, Resolution};
use drugnet_cli::server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    app: Router,
    config: drugnet::PipelineConfig,
    corpus: drugnet::SyntheticCorpus,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let (config, corpus) = common::built_store(dir.path(), 11);
    let state = AppState::load(&ArtifactStore::open(&config.output).unwrap()).unwrap();
    Fixture {
        _dir: dir,
        app: router(state),
        config,
        corpus,
    }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    assert_eq!(resp.headers()["content-type"], "application/json");
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

async fn get_ok(app: &Router, uri: &str, schema: &str) -> Value {
    let (status, body) = get(app, uri).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {body}");
    common::assert_schema(schema, &body);
    body
}

async fn post_query(app: &Router, body: &str) -> (StatusCode, Value) {
    let req = Request::post("/query")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = call(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn get_err(app: &Router, uri: &str, status: StatusCode, code: &str) {
    let (got, body) = get(app, uri).await;
    assert_eq!(got, status, "{uri}: {body}");
    common::assert_schema("error", &body);
    assert_eq!(body["error"]["code"], code, "{uri}");
}

#[tokio::test]
async fn every_endpoint_matches_its_schema() {
    let f = fixture();
    let app = &f.app;
    let terms = get_ok(app, "/terms", "terms").await;
    assert_eq!(terms["resolutions"], json!(["day", "week", "month"]));
    assert_eq!(terms["default_resolution"], "week");
    assert!(terms["terms"].as_array().unwrap().len() > 20);

    for res in ["day", "week", "month"] {
        let net = get_ok(app, &format!("/network/{res}"), "network").await;
        assert_eq!(net["kind"], "direct");
        assert_eq!(net["support_threshold"], 10);
        let closed = get_ok(app, &format!("/network/{res}/closed?min_weight=0.01"), "network").await;
        assert_eq!(closed["kind"], "closed");
        get_ok(app, &format!("/pca/{res}?component=2&tau=0.3"), "pca").await;
    }
    let direct = get_ok(app, "/pairs/direct?k=5&filter=drug:symptom", "pairs_direct").await;
    assert_eq!(direct["pairs"].as_array().unwrap().len(), 5);
    assert_eq!(direct["filter"], "drug:symptom");
    let semi = get_ok(app, "/pairs/semimetric?resolution=month&k=50", "pairs_semimetric").await;
    assert_eq!(semi["scoring"], json!({ "mode": "tiered" }));
    let semi = get_ok(app, "/pairs/semimetric?k=50&absent_distance=500", "pairs_semimetric").await;
    assert!(semi["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["tier"] != "indirect"));

    get_ok(app, "/users/u00003/timeline", "timeline").await;
    get_ok(app, "/posts/search?term=drug000", "search").await;

    let request = json!({ "terms": ["drug000", "symptom000"], "phi": "avg", "alpha": 0.0, "graph": "closed" });
    common::assert_schema("query_request", &request);
    let (status, answer) = post_query(app, &request.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    common::assert_schema("answer_set", &answer);
    assert_eq!(answer["graph_meta"]["kind"], "closed");
}

#[tokio::test]
async fn repeated_gets_are_byte_identical() {
    let f = fixture();
    for uri in [
        "/terms",
        "/network/week?min_weight=0.05",
        "/network/day/closed",
        "/pairs/direct",
        "/pairs/semimetric",
        "/pca/week",
        "/users/u00010/timeline",
        "/posts/search?term=drug001,symptom001&resolution=month",
    ] {
        let (_, a) = call(&f.app, Request::get(uri).body(Body::empty()).unwrap()).await;
        let (_, b) = call(&f.app, Request::get(uri).body(Body::empty()).unwrap()).await;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn network_min_weight_keeps_exactly_the_heavier_edges() {
    let f = fixture();
    let store = ArtifactStore::for_config(&f.config).unwrap();
    let graph = pipeline::load_proximity(&store, Resolution::Week).unwrap();
    let terms = graph.terms();
    let expected: BTreeSet<(String, String)> = graph
        .edges()
        .filter(|e| e.weight >= 0.05)
        .map(|e| (terms[e.i].name.clone(), terms[e.j].name.clone()))
        .collect();
    assert!(expected.len() < graph.edge_count(), "threshold removes nothing");

    let net = get_ok(&f.app, "/network/week?min_weight=0.05", "network").await;
    let got: BTreeSet<(String, String)> = net["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["term_i"].as_str().unwrap().into(),
                e["term_j"].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(got, expected);
    assert_eq!(net["nodes"].as_array().unwrap().len(), graph.len());
    for e in net["edges"].as_array().unwrap() {
        let p = e["p"].as_f64().unwrap();
        let s = &e["support"];
        let exact = s["cooccurrences"].as_f64().unwrap() / s["union"].as_f64().unwrap();
        assert_eq!(p, exact);
    }
}

#[tokio::test]
async fn timeline_spans_equal_the_tagger() {
    let f = fixture();
    let lexicon = pipeline::load_lexicon(&f.config).unwrap();
    for tl in f.corpus.timelines.iter().take(15) {
        let body = get_ok(&f.app, &format!("/users/{}/timeline", tl.user_id), "timeline").await;
        let posts = body["posts"].as_array().unwrap();
        assert_eq!(posts.len(), tl.len());
        for (view, post) in posts.iter().zip(&tl.posts) {
            assert_eq!(view["post_id"], post.post_id.as_str());
            let expected = serde_json::to_value(lexicon.tag_post(&post.text, &post.caption_tags)).unwrap();
            assert_eq!(view["matches"], expected);
            let normalized: Vec<char> = view["normalized_text"].as_str().unwrap().chars().collect();
            for m in view["matches"].as_array().unwrap() {
                let (s, e) = (
                    m["start"].as_u64().unwrap() as usize,
                    m["end"].as_u64().unwrap() as usize,
                );
                assert!(s < e && e <= normalized.len());
            }
        }
        let total: u64 = body["daily_counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d["count"].as_u64().unwrap())
            .sum();
        assert_eq!(total as usize, tl.len());
    }
}

#[tokio::test]
async fn pair_search_lists_the_planted_windows() {
    let f = fixture();
    let pair = &f.corpus.pair_posts[0];
    let spec = common::small_spec(11);
    let (a, b) = (&spec.planted_pairs[0].a, &spec.planted_pairs[0].b);
    let joint: BTreeSet<&str> = pair.iter().map(String::as_str).collect();
    let mut planted = BTreeSet::new();
    for tl in &f.corpus.timelines {
        for p in &tl.posts {
            if joint.contains(p.post_id.as_str()) {
                planted.insert((tl.user_id.clone(), Resolution::Week.period_id(&p.timestamp)));
            }
        }
    }

    let body = get_ok(&f.app, &format!("/posts/search?term={a},{b}&limit=10000"), "search").await;
    let got: BTreeSet<(String, String)> = body["windows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| {
            (
                w["user_id"].as_str().unwrap().into(),
                w["window"].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(got, planted);
    assert_eq!(body["total_windows"].as_u64().unwrap() as usize, planted.len());

    let limited = get_ok(&f.app, &format!("/posts/search?term={a},{b}&limit=3"), "search").await;
    assert_eq!(limited["windows"].as_array().unwrap().len(), 3);
    assert_eq!(limited["total_windows"], body["total_windows"]);
}

#[tokio::test]
async fn chain_endpoint_surfaces_only_on_the_closed_graph() {
    let f = fixture();
    let chain = &common::small_spec(11).planted_chains[0];
    for (graph, expect) in [("direct", false), ("closed", true)] {
        let req = json!({ "terms": [chain.a], "phi": "min", "alpha": 0.05, "graph": graph });
        let (status, answer) = post_query(&f.app, &req.to_string()).await;
        assert_eq!(status, StatusCode::OK);
        let names: Vec<&str> = answer["answers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["term"].as_str().unwrap())
            .collect();
        assert_eq!(names.contains(&chain.c.as_str()), expect, "{graph}: {names:?}");
    }
}

#[tokio::test]
async fn query_endpoint_agrees_with_the_library() {
    let f = fixture();
    let store = ArtifactStore::for_config(&f.config).unwrap();
    let graph = pipeline::load_closed_proximity(&store, Resolution::Day).unwrap();
    let spec = drugnet::QuerySpec::new(["drug000", "herb000"], drugnet::Aggregate::Max, 0.01).on(GraphKind::Closed);
    let expected = serde_json::to_value(drugnet::run_query(&graph, &spec).unwrap()).unwrap();
    let req =
        json!({ "terms": ["drug000", "herb000"], "phi": "max", "alpha": 0.01, "graph": "closed", "resolution": "day" });
    let (status, got) = post_query(&f.app, &req.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, expected);
}

#[tokio::test]
async fn invalid_requests_get_error_payloads() {
    let f = fixture();
    let app = &f.app;
    for (body, status) in [
        (r#"{"terms": []}"#, StatusCode::BAD_REQUEST),
        (r#"{"terms": ["drug000"], "alpha": 1.5}"#, StatusCode::BAD_REQUEST),
        (r#"{"terms": ["drug000"], "phi": "median"}"#, StatusCode::BAD_REQUEST),
        (r#"{"terms": ["drug000"], "colour": "red"}"#, StatusCode::BAD_REQUEST),
        ("not json", StatusCode::BAD_REQUEST),
        (r#"{"terms": ["nosuchterm"]}"#, StatusCode::NOT_FOUND),
        (r#"{"terms": ["drug000"], "resolution": "year"}"#, StatusCode::NOT_FOUND),
    ] {
        let (got, payload) = post_query(app, body).await;
        assert_eq!(got, status, "{body}: {payload}");
        common::assert_schema("error", &payload);
    }
    let (_, payload) = post_query(app, r#"{"terms": ["nosuchterm"]}"#).await;
    assert_eq!(payload["error"]["code"], "unknown_term");

    get_err(app, "/network/year", StatusCode::NOT_FOUND, "unknown_resolution").await;
    get_err(
        app,
        "/network/week?min_weight=2",
        StatusCode::BAD_REQUEST,
        "bad_request",
    )
    .await;
    get_err(
        app,
        "/network/week?min_weight=abc",
        StatusCode::BAD_REQUEST,
        "bad_request",
    )
    .await;
    get_err(app, "/pca/decade", StatusCode::NOT_FOUND, "unknown_resolution").await;
    get_err(app, "/pca/week?component=0", StatusCode::BAD_REQUEST, "bad_request").await;
    get_err(app, "/pairs/direct?k=0", StatusCode::BAD_REQUEST, "bad_request").await;
    get_err(
        app,
        "/pairs/direct?filter=drug:planet",
        StatusCode::BAD_REQUEST,
        "bad_request",
    )
    .await;
    get_err(
        app,
        "/pairs/semimetric?absent_distance=-1",
        StatusCode::BAD_REQUEST,
        "bad_request",
    )
    .await;
    get_err(app, "/users/nobody/timeline", StatusCode::NOT_FOUND, "unknown_user").await;
    get_err(app, "/posts/search", StatusCode::BAD_REQUEST, "bad_request").await;
    get_err(
        app,
        "/posts/search?term=nosuchterm",
        StatusCode::NOT_FOUND,
        "unknown_term",
    )
    .await;
    get_err(app, "/nowhere", StatusCode::NOT_FOUND, "not_found").await;
}

#[tokio::test]
async fn partially_built_store_serves_what_exists() {
    let dir = tempfile::tempdir().unwrap();
    let (config_path, _) = common::write_inputs(dir.path(), &common::small_spec(5));
    let config = drugnet::PipelineConfig::load(config_path).unwrap();
    let mut store = ArtifactStore::for_config(&config).unwrap();
    pipeline::ingest(&config, &mut store).unwrap();
    pipeline::tag(&config, &mut store).unwrap();
    assert!(AppState::load(&ArtifactStore::open(&config.output).unwrap()).is_err());

    pipeline::build(&config, &mut store).unwrap();
    let app = router(AppState::load(&ArtifactStore::open(&config.output).unwrap()).unwrap());
    get_ok(&app, "/network/day", "network").await;
    get_err(&app, "/network/day/closed", StatusCode::NOT_FOUND, "not_built").await;
    get_err(&app, "/pairs/semimetric", StatusCode::NOT_FOUND, "not_built").await;
    get_err(&app, "/pca/week", StatusCode::NOT_FOUND, "not_built").await;
    let (status, _) = post_query(&app, r#"{"terms": ["drug000"], "graph": "closed"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
