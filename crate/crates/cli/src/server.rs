//! Read-only JSON service over a built store.
//!
//! Everything is loaded into memory at startup; handlers never touch disk.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::SecondsFormat;
use drugnet::closure::{rank_semimetric_pairs, top_direct_pairs};
use drugnet::lexicon::{normalized_text, TaggedTimeline, TermMatch};
use drugnet::netgraph::proximity_to_distance;
use drugnet::pipeline;
use drugnet::query::DEFAULT_ALPHA;
use drugnet::{
    distance_from_proximity, proximity_closure, run_query, Aggregate, ArtifactStore, ClassFilter, ClosedDistanceGraph,
    DistanceGraph, Error, GraphKind, PcaReport, ProximityGraph, QuerySpec, Resolution, SemimetricScoring, TermClass,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_K: usize = 25;
pub const MAX_K: usize = 10_000;
pub const DEFAULT_SEARCH_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownTerm(_) => ApiError::not_found("unknown_term", e.to_string()),
            Error::MissingArtifact { .. } => ApiError::not_found("not_built", e.to_string()),
            Error::Query(_) | Error::Pca(_) | Error::Config(_) => ApiError::bad_request(e.to_string()),
            e => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                code: "internal",
                message: e.to_string(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, json_body(&body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_body<T: Serialize>(value: &T) -> ([(header::HeaderName, &'static str); 1], Vec<u8>) {
    let bytes = serde_json::to_vec(value).expect("payloads serialize");
    ([(header::CONTENT_TYPE, "application/json")], bytes)
}

fn respond<T: Serialize>(result: ApiResult<T>) -> Response {
    match result {
        Ok(value) => (StatusCode::OK, json_body(&value)).into_response(),
        Err(e) => e.into_response(),
    }
}

struct Network {
    direct: ProximityGraph,
    distance: DistanceGraph,
    closure: Option<(ClosedDistanceGraph, ProximityGraph)>,
    pca: Option<PcaReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermCount {
    pub term: String,
    pub class: TermClass,
    pub count: u64,
}

pub struct AppState {
    networks: BTreeMap<Resolution, Network>,
    default_resolution: Resolution,
    terms: Vec<TermCount>,
    timelines: Vec<TaggedTimeline>,
    users: HashMap<String, usize>,
    /// term -> users whose timelines mention it
    term_users: HashMap<String, BTreeSet<usize>>,
}

fn optional<T>(r: drugnet::Result<T>) -> drugnet::Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::MissingArtifact { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

impl AppState {
    /// Loads every verified artifact. Needs at least one built resolution.
    pub fn load(store: &ArtifactStore) -> drugnet::Result<Self> {
        let built = store.built_resolutions();
        let default_resolution = if built.contains(&Resolution::Week) {
            Resolution::Week
        } else {
            *built.first().ok_or(Error::MissingArtifact {
                stage: "build",
                artifact: "any resolution".into(),
            })?
        };
        let mut networks = BTreeMap::new();
        for res in built {
            let direct = pipeline::load_proximity(store, res)?;
            let closure = optional(pipeline::load_closure(store, res))?.map(|c| {
                let p = proximity_closure(&c);
                (c, p)
            });
            networks.insert(
                res,
                Network {
                    distance: distance_from_proximity(&direct),
                    direct,
                    closure,
                    pca: optional(pipeline::load_pca(store, res))?,
                },
            );
        }
        let tagged = pipeline::load_tagged(store)?;
        let terms = tagged
            .frequencies()
            .into_iter()
            .map(|f| TermCount {
                term: f.term,
                class: f.class,
                count: f.count,
            })
            .collect();
        let mut users = HashMap::new();
        let mut term_users: HashMap<String, BTreeSet<usize>> = HashMap::new();
        for (u, tl) in tagged.timelines.iter().enumerate() {
            users.insert(tl.timeline.user_id.clone(), u);
            for m in tl.matches.iter().flatten() {
                term_users.entry(m.canonical_term.clone()).or_default().insert(u);
            }
        }
        Ok(AppState {
            networks,
            default_resolution,
            terms,
            timelines: tagged.timelines,
            users,
            term_users,
        })
    }

    fn resolutions(&self) -> Vec<Resolution> {
        self.networks.keys().copied().collect()
    }

    fn network(&self, res: &str) -> ApiResult<(Resolution, &Network)> {
        let r: Resolution = res
            .parse()
            .map_err(|_| ApiError::not_found("unknown_resolution", format!("unknown resolution {res:?}")))?;
        self.networks
            .get(&r)
            .map(|n| (r, n))
            .ok_or_else(|| ApiError::not_found("unknown_resolution", format!("resolution {r} has not been built")))
    }

    fn network_or_default(&self, res: Option<&String>) -> ApiResult<(Resolution, &Network)> {
        match res {
            Some(r) => self.network(r),
            None => self.network(self.default_resolution.as_str()),
        }
    }
}

type Params = BTreeMap<String, String>;

fn param<T: FromStr>(params: &Params, key: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    params
        .get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| ApiError::bad_request(format!("invalid {key} {v:?}: {e}")))
        })
        .transpose()
}

fn k_param(params: &Params) -> ApiResult<usize> {
    let k = param::<usize>(params, "k")?.unwrap_or(DEFAULT_K);
    if k == 0 || k > MAX_K {
        return Err(ApiError::bad_request(format!("k must be in 1..={MAX_K}")));
    }
    Ok(k)
}

fn min_weight_param(params: &Params) -> ApiResult<f64> {
    let w = param::<f64>(params, "min_weight")?.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&w) {
        return Err(ApiError::bad_request(format!("min_weight {w} outside [0, 1]")));
    }
    Ok(w)
}

// --- payloads ------------------------------------------------------------

#[derive(Debug, Serialize)]
struct TermsPayload<'a> {
    resolutions: Vec<Resolution>,
    default_resolution: Resolution,
    terms: &'a [TermCount],
}

#[derive(Debug, Serialize)]
struct NodeView<'a> {
    term: &'a str,
    class: TermClass,
}

#[derive(Debug, Serialize)]
struct SupportView {
    cooccurrences: u64,
    union: u64,
}

#[derive(Debug, Serialize)]
struct EdgeView<'a> {
    term_i: &'a str,
    term_j: &'a str,
    p: f64,
    d: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    support: Option<SupportView>,
}

#[derive(Debug, Serialize)]
struct NetworkPayload<'a> {
    resolution: Resolution,
    kind: GraphKind,
    support_threshold: u64,
    min_weight: f64,
    nodes: Vec<NodeView<'a>>,
    edges: Vec<EdgeView<'a>>,
}

fn network_payload(graph: &ProximityGraph, min_weight: f64) -> NetworkPayload<'_> {
    let terms = graph.terms();
    NetworkPayload {
        resolution: graph.resolution(),
        kind: graph.kind(),
        support_threshold: graph.support_threshold(),
        min_weight,
        nodes: terms
            .iter()
            .map(|t| NodeView {
                term: &t.name,
                class: t.class,
            })
            .collect(),
        edges: graph
            .edges()
            .filter(|e| e.weight >= min_weight)
            .map(|e| EdgeView {
                term_i: &terms[e.i].name,
                term_j: &terms[e.j].name,
                p: e.weight,
                d: proximity_to_distance(e.weight),
                support: e.support.map(|s| SupportView {
                    cooccurrences: s.cooccurrences,
                    union: s.union,
                }),
            })
            .collect(),
    }
}

#[derive(Debug, Serialize)]
struct DirectPairView {
    term_i: String,
    term_j: String,
    class_i: TermClass,
    class_j: TermClass,
    p: f64,
}

#[derive(Debug, Serialize)]
struct SemimetricPairView {
    term_i: String,
    term_j: String,
    class_i: TermClass,
    class_j: TermClass,
    d_direct: Option<f64>,
    d_closed: f64,
    /// null for the indirect tier and for infinite ratios
    ratio: Option<f64>,
    p_closed: f64,
    tier: &'static str,
}

#[derive(Debug, Serialize)]
struct PairsPayload<T> {
    resolution: Resolution,
    filter: String,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    scoring: Option<SemimetricScoring>,
    pairs: Vec<T>,
}

#[derive(Debug, Serialize)]
struct PostView<'a> {
    post_id: &'a str,
    user_id: &'a str,
    timestamp: String,
    text: &'a str,
    tags: &'a [String],
    normalized_text: String,
    matches: &'a [TermMatch],
}

fn post_view(tl: &TaggedTimeline, idx: usize) -> PostView<'_> {
    let post = &tl.timeline.posts[idx];
    PostView {
        post_id: &post.post_id,
        user_id: &post.user_id,
        timestamp: post.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
        text: &post.text,
        tags: &post.caption_tags,
        normalized_text: normalized_text(&post.text, &post.caption_tags),
        matches: &tl.matches[idx],
    }
}

#[derive(Debug, Serialize)]
struct DayCount {
    date: String,
    count: usize,
}

#[derive(Debug, Serialize)]
struct TimelinePayload<'a> {
    user_id: &'a str,
    posts: Vec<PostView<'a>>,
    daily_counts: Vec<DayCount>,
}

#[derive(Debug, Serialize)]
struct WindowView<'a> {
    user_id: &'a str,
    window: String,
    posts: Vec<PostView<'a>>,
}

#[derive(Debug, Serialize)]
struct SearchPayload<'a> {
    terms: Vec<String>,
    resolution: Resolution,
    total_windows: usize,
    windows: Vec<WindowView<'a>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    terms: Vec<String>,
    #[serde(default = "default_phi")]
    phi: Aggregate,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_graph")]
    graph: GraphKind,
    #[serde(default)]
    resolution: Option<String>,
}

fn default_phi() -> Aggregate {
    Aggregate::Min
}

fn default_graph() -> GraphKind {
    GraphKind::Direct
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

// --- handlers ------------------------------------------------------------

type Shared = State<Arc<AppState>>;

async fn terms(State(s): Shared) -> Response {
    respond(Ok(TermsPayload {
        resolutions: s.resolutions(),
        default_resolution: s.default_resolution,
        terms: &s.terms,
    }))
}

async fn network(State(s): Shared, Path(res): Path<String>, Query(params): Query<Params>) -> Response {
    respond((|| {
        let (_, net) = s.network(&res)?;
        Ok(network_payload(&net.direct, min_weight_param(&params)?))
    })())
}

async fn closed_network(State(s): Shared, Path(res): Path<String>, Query(params): Query<Params>) -> Response {
    respond((|| {
        let (r, net) = s.network(&res)?;
        let (_, closed) = net.closure.as_ref().ok_or_else(|| not_closed(r))?;
        Ok(network_payload(closed, min_weight_param(&params)?))
    })())
}

fn not_closed(r: Resolution) -> ApiError {
    ApiError::not_found(
        "not_built",
        format!("closure for {r} has not been computed (run `closure`)"),
    )
}

fn filter_param(params: &Params) -> ApiResult<ClassFilter> {
    Ok(param::<ClassFilter>(params, "filter")?.unwrap_or_else(ClassFilter::any))
}

async fn direct_pairs(State(s): Shared, Query(params): Query<Params>) -> Response {
    respond((|| {
        let (r, net) = s.network_or_default(params.get("resolution"))?;
        let k = k_param(&params)?;
        let filter = filter_param(&params)?;
        let pairs = top_direct_pairs(&net.direct, &filter, k)
            .into_iter()
            .map(|p| DirectPairView {
                term_i: p.term_i,
                term_j: p.term_j,
                class_i: p.class_i,
                class_j: p.class_j,
                p: p.proximity,
            })
            .collect();
        Ok(PairsPayload {
            resolution: r,
            filter: filter.to_string(),
            k,
            scoring: None,
            pairs,
        })
    })())
}

async fn semimetric_pairs(State(s): Shared, Query(params): Query<Params>) -> Response {
    respond((|| {
        let (r, net) = s.network_or_default(params.get("resolution"))?;
        let k = k_param(&params)?;
        let filter = filter_param(&params)?;
        let scoring = match param::<f64>(&params, "absent_distance")? {
            Some(d) if d > 0.0 && d.is_finite() => SemimetricScoring::AbsentAs(d),
            Some(d) => return Err(ApiError::bad_request(format!("absent_distance {d} must be positive"))),
            None => SemimetricScoring::Tiered,
        };
        let (closed, _) = net.closure.as_ref().ok_or_else(|| not_closed(r))?;
        let pairs = rank_semimetric_pairs(&net.distance, closed, &filter, k, scoring)?
            .into_iter()
            .map(|p| {
                let tier = match p.ratio {
                    None => "indirect",
                    Some(x) if x.is_infinite() => "infinite",
                    Some(_) => "finite",
                };
                SemimetricPairView {
                    term_i: p.term_i,
                    term_j: p.term_j,
                    class_i: p.class_i,
                    class_j: p.class_j,
                    d_direct: p.d_direct,
                    d_closed: p.d_closed,
                    ratio: p.ratio.filter(|x| x.is_finite()),
                    p_closed: p.p_closed,
                    tier,
                }
            })
            .collect();
        Ok(PairsPayload {
            resolution: r,
            filter: filter.to_string(),
            k,
            scoring: Some(scoring),
            pairs,
        })
    })())
}

async fn pca(State(s): Shared, Path(res): Path<String>, Query(params): Query<Params>) -> Response {
    respond((|| {
        let (r, net) = s.network(&res)?;
        let report = net.pca.as_ref().ok_or_else(|| {
            ApiError::not_found("not_built", format!("PCA for {r} has not been computed (run `pca`)"))
        })?;
        let mut body = serde_json::to_value(report).expect("report serializes");
        body["resolution"] = json!(r);
        if let Some(c) = param::<usize>(&params, "component")? {
            let tau = param::<f64>(&params, "tau")?.unwrap_or(drugnet::spectra::DEFAULT_CORRELATION_THRESHOLD);
            let idx = c
                .checked_sub(1)
                .ok_or_else(|| ApiError::bad_request("components are numbered from 1"))?;
            let (positive, negative) = report.component_terms(idx, tau)?;
            body["component"] = json!({ "index": c, "tau": tau, "positive": positive, "negative": negative });
        }
        Ok(body)
    })())
}

async fn query(State(s): Shared, body: Bytes) -> Response {
    respond((|| {
        let req: QueryRequest =
            serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid query body: {e}")))?;
        let (r, net) = s.network_or_default(req.resolution.as_ref())?;
        let graph = match req.graph {
            GraphKind::Direct => &net.direct,
            GraphKind::Closed => &net.closure.as_ref().ok_or_else(|| not_closed(r))?.1,
        };
        let spec = QuerySpec::new(req.terms, req.phi, req.alpha).on(req.graph);
        Ok(run_query(graph, &spec)?)
    })())
}

async fn timeline(State(s): Shared, Path(user): Path<String>) -> Response {
    respond((|| {
        let &u = s
            .users
            .get(&user)
            .ok_or_else(|| ApiError::not_found("unknown_user", format!("unknown user {user:?}")))?;
        let tl = &s.timelines[u];
        let mut days: BTreeMap<String, usize> = BTreeMap::new();
        for p in &tl.timeline.posts {
            *days.entry(p.timestamp.format("%Y-%m-%d").to_string()).or_default() += 1;
        }
        Ok(TimelinePayload {
            user_id: &tl.timeline.user_id,
            posts: (0..tl.timeline.len()).map(|i| post_view(tl, i)).collect(),
            daily_counts: days.into_iter().map(|(date, count)| DayCount { date, count }).collect(),
        })
    })())
}

async fn search(State(s): Shared, Query(params): Query<Params>) -> Response {
    respond((|| {
        let raw = params
            .get("term")
            .ok_or_else(|| ApiError::bad_request("missing term parameter"))?;
        let mut terms: Vec<String> = raw
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        terms.sort();
        terms.dedup();
        if terms.is_empty() {
            return Err(ApiError::bad_request("term parameter is empty"));
        }
        let (res, _) = s.network_or_default(params.get("resolution"))?;
        let limit = param::<usize>(&params, "limit")?.unwrap_or(DEFAULT_SEARCH_LIMIT);
        if limit == 0 || limit > MAX_K {
            return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_K}")));
        }
        let mut candidates: Option<BTreeSet<usize>> = None;
        for t in &terms {
            if !s.terms.iter().any(|c| &c.term == t) {
                return Err(ApiError::not_found("unknown_term", format!("unknown term {t:?}")));
            }
            let users = s.term_users.get(t).cloned().unwrap_or_default();
            candidates = Some(match candidates {
                Some(c) => c.intersection(&users).copied().collect(),
                None => users,
            });
        }

        // windows of one user where every query term is mentioned
        let mut windows = Vec::new();
        for u in candidates.unwrap_or_default() {
            let tl = &s.timelines[u];
            let mut by_window: BTreeMap<String, (BTreeSet<&str>, Vec<usize>)> = BTreeMap::new();
            for (i, (post, matches)) in tl.timeline.posts.iter().zip(&tl.matches).enumerate() {
                let hits: Vec<&str> = matches
                    .iter()
                    .map(|m| m.canonical_term.as_str())
                    .filter(|t| terms.iter().any(|q| q == t))
                    .collect();
                if hits.is_empty() {
                    continue;
                }
                let entry = by_window.entry(res.period_id(&post.timestamp)).or_default();
                entry.0.extend(hits);
                entry.1.push(i);
            }
            for (window, (seen, posts)) in by_window {
                if seen.len() == terms.len() {
                    windows.push((u, window, posts));
                }
            }
        }
        windows.sort_by(|a, b| {
            (&s.timelines[a.0].timeline.user_id, &a.1).cmp(&(&s.timelines[b.0].timeline.user_id, &b.1))
        });
        let total_windows = windows.len();
        windows.truncate(limit);
        Ok(SearchPayload {
            terms,
            resolution: res,
            total_windows,
            windows: windows
                .into_iter()
                .map(|(u, window, posts)| {
                    let tl = &s.timelines[u];
                    WindowView {
                        user_id: &tl.timeline.user_id,
                        window,
                        posts: posts.into_iter().map(|i| post_view(tl, i)).collect(),
                    }
                })
                .collect(),
        })
    })())
}

async fn not_found() -> Response {
    ApiError::not_found("not_found", "no such endpoint").into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/terms", get(terms))
        .route("/network/{resolution}", get(network))
        .route("/network/{resolution}/closed", get(closed_network))
        .route("/pairs/direct", get(direct_pairs))
        .route("/pairs/semimetric", get(semimetric_pairs))
        .route("/pca/{resolution}", get(pca))
        .route("/query", post(query))
        .route("/users/{user_id}/timeline", get(timeline))
        .route("/posts/search", get(search))
        .fallback(not_found)
        .with_state(Arc::new(state))
}

pub async fn serve(state: AppState, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
