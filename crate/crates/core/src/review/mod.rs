//! HTTP back end for adjudicating duplicate clusters. Serves a small
//! single-page UI plus a JSON API; the only thing it writes is the decisions
//! log.

use std::collections::HashMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{StatusCode, header};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::bench::{
    BenchError, Decision, DecisionRecord, DedupCluster, append_decision, read_decisions, resolve_decisions,
};

pub const THUMB_MAX_SIDE: u32 = 320;
pub const DEFAULT_PAGE_SIZE: usize = 50;

const INDEX_HTML: &str = include_str!("index.html");

pub struct ReviewState {
    clusters: Vec<DedupCluster>,
    decisions_path: PathBuf,
    images: HashMap<String, PathBuf>,
    thumbs: Mutex<HashMap<String, Arc<Vec<u8>>>>,
    write_lock: tokio::sync::Mutex<()>,
}

impl ReviewState {
    /// Indexes every member screenshot by content hash.
    pub fn new(mut clusters: Vec<DedupCluster>, decisions_path: impl Into<PathBuf>) -> Result<Self, BenchError> {
        clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
        let mut images = HashMap::new();
        for d in clusters.iter().flat_map(|c| &c.member_details) {
            for img in [&d.s_t, &d.s_t1] {
                if let Ok(h) = img.content_hash() {
                    images.insert(h, img.path().to_path_buf());
                }
            }
        }
        Ok(Self {
            clusters,
            decisions_path: decisions_path.into(),
            images,
            thumbs: Mutex::new(HashMap::new()),
            write_lock: tokio::sync::Mutex::new(()),
        })
    }

    fn hash_of(&self, path: &std::path::Path) -> Option<&str> {
        self.images
            .iter()
            .find(|(_, p)| p.as_path() == path)
            .map(|(h, _)| h.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFilter {
    #[default]
    Pending,
    All,
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct ListQuery {
    #[serde(default)]
    pub filter: ClusterFilter,
    #[serde(default)]
    pub page: usize,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberView {
    pub transition_id: String,
    pub s_t_thumb: Option<String>,
    pub s_t_full: Option<String>,
    pub s_t1_thumb: Option<String>,
    pub s_t1_full: Option<String>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub edges: usize,
    pub min_sim_st: Option<f64>,
    pub min_sim_st1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub cluster_id: String,
    pub app: String,
    pub signature: String,
    pub members: Vec<MemberView>,
    pub evidence: EvidenceSummary,
    pub decision: Decision,
    pub representative: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPage {
    pub clusters: Vec<ClusterView>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
    #[serde(default)]
    pub representative: Option<String>,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub written: bool,
    pub record: DecisionRecord,
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: String,
    kind: &'static str,
}

fn api_error(status: StatusCode, kind: &'static str, e: impl ToString) -> Response {
    (status, Json(ApiError { error: e.to_string(), kind })).into_response()
}

fn bench_error(e: BenchError) -> Response {
    match e {
        BenchError::UnknownCluster(_) => api_error(StatusCode::NOT_FOUND, "unknown_cluster", e),
        BenchError::InvalidRepresentative { .. } => {
            api_error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_representative", e)
        }
        _ => api_error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e),
    }
}

fn view(state: &ReviewState, c: &DedupCluster, effective: Option<&DecisionRecord>) -> ClusterView {
    let urls = |p: &std::path::Path| match state.hash_of(p) {
        Some(h) => (Some(format!("/api/images/{h}?thumb=1")), Some(format!("/api/images/{h}"))),
        None => (None, None),
    };
    let members = c
        .member_transition_ids
        .iter()
        .map(|id| {
            let detail = c.member_details.iter().find(|d| &d.transition_id == id);
            let (a_thumb, a_full) = detail.map_or((None, None), |d| urls(d.s_t.path()));
            let (b_thumb, b_full) = detail.map_or((None, None), |d| urls(d.s_t1.path()));
            MemberView {
                transition_id: id.clone(),
                s_t_thumb: a_thumb,
                s_t_full: a_full,
                s_t1_thumb: b_thumb,
                s_t1_full: b_full,
                action: detail.map(|d| d.action.clone()).unwrap_or_default(),
            }
        })
        .collect();
    let fold_min = |f: fn(&crate::bench::PairEvidence) -> f64| {
        c.pairwise_evidence.iter().map(f).reduce(f64::min)
    };
    let (decision, representative) = match effective {
        Some(r) => (r.decision, r.representative.clone()),
        None => (c.decision, c.representative_id.clone()),
    };
    ClusterView {
        cluster_id: c.cluster_id.clone(),
        app: c.group_key.app.clone(),
        signature: c.group_key.signature.clone(),
        members,
        evidence: EvidenceSummary {
            edges: c.pairwise_evidence.len(),
            min_sim_st: fold_min(|e| e.sim_st),
            min_sim_st1: fold_min(|e| e.sim_st1),
        },
        decision,
        representative,
    }
}

/// Views in cluster-id order; `Pending` hides clusters with a decision.
pub fn list_clusters(state: &ReviewState, q: &ListQuery) -> Result<ClusterPage, BenchError> {
    let effective = resolve_decisions(&read_decisions(&state.decisions_path)?);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE).max(1);
    let visible: Vec<ClusterView> = state
        .clusters
        .iter()
        .map(|c| view(state, c, effective.get(&c.cluster_id)))
        .filter(|v| q.filter == ClusterFilter::All || v.decision == Decision::Pending)
        .collect();
    let total = visible.len();
    let clusters = visible.into_iter().skip(q.page * page_size).take(page_size).collect();
    Ok(ClusterPage {
        clusters,
        total,
        page: q.page,
        page_size,
    })
}

/// Appends a decision unless it repeats the current one. A duplicates
/// decision without a representative keeps the lowest member id.
pub async fn post_decision(state: &ReviewState, cluster_id: &str, body: DecisionBody) -> Result<DecisionAck, BenchError> {
    let cluster = state
        .clusters
        .iter()
        .find(|c| c.cluster_id == cluster_id)
        .ok_or_else(|| BenchError::UnknownCluster(cluster_id.to_owned()))?;
    let representative = match body.decision {
        Decision::Duplicates => Some(
            body.representative
                .unwrap_or_else(|| cluster.default_representative().to_owned()),
        ),
        _ => body.representative,
    };
    let record = DecisionRecord::new(
        cluster_id,
        body.decision,
        representative,
        body.annotator.unwrap_or_else(|| "reviewer".into()),
    );
    let _guard = state.write_lock.lock().await;
    let written = append_decision(&state.decisions_path, &state.clusters, &record)?;
    Ok(DecisionAck { written, record })
}

async fn list_handler(State(state): State<Arc<ReviewState>>, Query(q): Query<ListQuery>) -> Response {
    match list_clusters(&state, &q) {
        Ok(p) => Json(p).into_response(),
        Err(e) => bench_error(e),
    }
}

async fn decision_handler(
    State(state): State<Arc<ReviewState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<DecisionBody>,
) -> Response {
    match post_decision(&state, &id, body).await {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => bench_error(e),
    }
}

#[derive(Debug, Deserialize)]
struct ImageQuery {
    #[serde(default)]
    thumb: Option<u8>,
}

fn thumbnail(bytes: &[u8]) -> Option<Vec<u8>> {
    let img = image::load_from_memory(bytes).ok()?;
    let small = img.thumbnail(THUMB_MAX_SIDE, THUMB_MAX_SIDE);
    let mut out = Vec::new();
    small.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).ok()?;
    Some(out)
}

async fn image_handler(
    State(state): State<Arc<ReviewState>>,
    UrlPath(hash): UrlPath<String>,
    Query(q): Query<ImageQuery>,
) -> Response {
    let Some(path) = state.images.get(&hash) else {
        return api_error(StatusCode::NOT_FOUND, "unknown_image", format!("no image {hash}"));
    };
    let bytes = match tokio::fs::read(path).await {
        Ok(b) => b,
        Err(e) => return api_error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e),
    };
    let body = if q.thumb.unwrap_or(0) != 0 {
        let cached = state.thumbs.lock().expect("poisoned").get(&hash).cloned();
        match cached {
            Some(t) => t.as_ref().clone(),
            None => {
                let Some(t) = tokio::task::spawn_blocking(move || thumbnail(&bytes))
                    .await
                    .ok()
                    .flatten()
                else {
                    return api_error(StatusCode::UNPROCESSABLE_ENTITY, "undecodable", "image does not decode");
                };
                state
                    .thumbs
                    .lock()
                    .expect("poisoned")
                    .insert(hash.clone(), Arc::new(t.clone()));
                t
            }
        }
    } else {
        bytes
    };
    let ct = if body.starts_with(&[0xFF, 0xD8]) { "image/jpeg" } else { "image/png" };
    ([(header::CONTENT_TYPE, ct), (header::CACHE_CONTROL, "max-age=3600")], body).into_response()
}

pub fn router(state: Arc<ReviewState>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/api/clusters", get(list_handler))
        .route("/api/clusters/{id}/decision", post(decision_handler))
        .route("/api/images/{hash}", get(image_handler))
        .with_state(state)
}

/// Binds `addr` and returns the bound address plus the server future.
pub async fn bind(
    state: Arc<ReviewState>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl Future<Output = std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, async move { axum::serve(listener, router(state)).await }))
}
