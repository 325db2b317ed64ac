//! Benchmark construction: near-duplicate clustering, adjudication and
//! split sampling.

mod decisions;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::StreamExt;
use petgraph::unionfind::UnionFind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::scalar::cosine;
use crate::trajectory::{CanonicalAction, GRID_MAX, GridPoint, StateImage, Transition, action_prompt_text};

pub use decisions::{
    Decision, DecisionRecord, append_decision, read_decisions, resolve_decisions, validate_decision,
};

/// Cells per axis when quantizing action coordinates for grouping.
pub const SIGNATURE_GRID: u16 = 20;
pub const DEFAULT_TAU: f64 = 0.997;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown cluster `{0}`")]
    UnknownCluster(String),
    #[error("representative `{representative}` is not a member of cluster `{cluster}`")]
    InvalidRepresentative { cluster: String, representative: String },
    #[error("requested {requested} samples but only {available} are available")]
    NotEnoughSamples { requested: usize, available: usize },
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Provider(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn cell(v: u16) -> u16 {
    (v / (GRID_MAX / SIGNATURE_GRID)).min(SIGNATURE_GRID - 1)
}

fn cell_of(p: GridPoint) -> String {
    format!("{},{}", cell(p.x), cell(p.y))
}

/// Grouping key for an action: kind, direction, whether text is present, and
/// coordinates snapped to a 20x20 grid.
pub fn action_signature(a: &CanonicalAction) -> String {
    let mut s = a.kind.as_str().to_owned();
    if let Some(d) = a.direction {
        s.push(':');
        s.push_str(d.as_str());
    }
    if let Some(p) = a.point {
        s.push('@');
        s.push_str(&cell_of(p));
    }
    if let Some(p) = a.end_point {
        s.push_str("->");
        s.push_str(&cell_of(p));
    }
    if a.text.as_deref().is_some_and(|t| !t.is_empty()) {
        s.push_str("+text");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub app: String,
    pub signature: String,
}

impl GroupKey {
    pub fn of(t: &Transition) -> Self {
        Self {
            app: t.app.to_string(),
            signature: action_signature(&t.action),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvidence {
    pub id_a: String,
    pub id_b: String,
    pub sim_st: f64,
    pub sim_st1: f64,
}

/// What a reviewer needs to see for one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDetail {
    pub transition_id: String,
    pub s_t: StateImage,
    pub s_t1: StateImage,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupCluster {
    pub cluster_id: String,
    pub member_transition_ids: Vec<String>,
    pub group_key: GroupKey,
    pub pairwise_evidence: Vec<PairEvidence>,
    #[serde(default)]
    pub decision: Decision,
    #[serde(default)]
    pub representative_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub member_details: Vec<MemberDetail>,
}

impl DedupCluster {
    pub fn default_representative(&self) -> &str {
        self.member_transition_ids
            .iter()
            .min()
            .expect("clusters have members")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub threshold: f64,
    pub provider: String,
    pub max_in_flight: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_TAU,
            provider: "fallback".into(),
            max_in_flight: 8,
        }
    }
}

/// Order-independent id: hash of the sorted member ids.
pub fn cluster_id_for(members: &[String]) -> String {
    let mut sorted: Vec<&str> = members.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for m in sorted {
        h.update(m.as_bytes());
        h.update([0]);
    }
    format!("c-{}", &hex::encode(h.finalize())[..12])
}

/// Clusters `transitions` given a similarity oracle over index pairs that
/// returns `(sim(S_t), sim(S_{t+1}))`.
pub fn clusters_with<F>(transitions: &[Transition], tau: f64, mut sim: F) -> Vec<DedupCluster>
where
    F: FnMut(usize, usize) -> (f64, f64),
{
    let mut groups: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, t) in transitions.iter().enumerate() {
        groups.entry(GroupKey::of(t)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (key, idx) in groups {
        if idx.len() < 2 {
            continue;
        }
        let mut uf = UnionFind::<usize>::new(idx.len());
        let mut edges = Vec::new();
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                let (s0, s1) = sim(idx[a], idx[b]);
                if s0 > tau && s1 > tau {
                    uf.union(a, b);
                    edges.push((a, b, s0, s1));
                }
            }
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for a in 0..idx.len() {
            comps.entry(uf.find(a)).or_default().push(a);
        }
        for members in comps.into_values().filter(|m| m.len() >= 2) {
            let root = uf.find(members[0]);
            let mut ids: Vec<String> = members.iter().map(|&m| transitions[idx[m]].id.clone()).collect();
            ids.sort();
            let mut evidence: Vec<PairEvidence> = edges
                .iter()
                .filter(|(a, _, _, _)| uf.find(*a) == root)
                .map(|&(a, b, s0, s1)| {
                    let (ia, ib) = (&transitions[idx[a]].id, &transitions[idx[b]].id);
                    let (id_a, id_b) = if ia <= ib { (ia, ib) } else { (ib, ia) };
                    PairEvidence {
                        id_a: id_a.clone(),
                        id_b: id_b.clone(),
                        sim_st: s0,
                        sim_st1: s1,
                    }
                })
                .collect();
            evidence.sort_by(|x, y| (&x.id_a, &x.id_b).cmp(&(&y.id_a, &y.id_b)));
            let mut details: Vec<MemberDetail> = members
                .iter()
                .map(|&m| {
                    let t = &transitions[idx[m]];
                    MemberDetail {
                        transition_id: t.id.clone(),
                        s_t: t.s_t.clone(),
                        s_t1: t.s_t1.clone(),
                        action: action_prompt_text(&t.action),
                    }
                })
                .collect();
            details.sort_by(|x, y| x.transition_id.cmp(&y.transition_id));
            out.push(DedupCluster {
                cluster_id: cluster_id_for(&ids),
                member_transition_ids: ids,
                group_key: key.clone(),
                pairwise_evidence: evidence,
                decision: Decision::Pending,
                representative_id: None,
                member_details: details,
            });
        }
    }
    out.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    out
}

/// Embeds every image that shares a group with another transition, then
/// clusters with strict `> tau` edges on both states.
pub async fn find_duplicate_clusters(
    gw: &Gateway,
    transitions: &[Transition],
    cfg: &DedupConfig,
) -> Result<Vec<DedupCluster>, BenchError> {
    if !(cfg.threshold > 0.0 && cfg.threshold <= 1.0) {
        return Err(BenchError::InvalidThreshold(cfg.threshold));
    }
    let mut group_size: HashMap<GroupKey, usize> = HashMap::new();
    for t in transitions {
        *group_size.entry(GroupKey::of(t)).or_default() += 1;
    }
    let needed: Vec<(usize, &Transition)> = transitions
        .iter()
        .enumerate()
        .filter(|(_, t)| group_size[&GroupKey::of(t)] >= 2)
        .collect();
    let embedded: Vec<(usize, Arc<[f64]>, Arc<[f64]>)> = futures::stream::iter(needed)
        .map(|(i, t)| async move {
            let (a, b) = futures::try_join!(gw.embed(&cfg.provider, &t.s_t), gw.embed(&cfg.provider, &t.s_t1))?;
            Ok::<_, GatewayError>((i, a, b))
        })
        .buffer_unordered(cfg.max_in_flight.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect::<Result<_, _>>()?;
    let emb: HashMap<usize, (Arc<[f64]>, Arc<[f64]>)> =
        embedded.into_iter().map(|(i, a, b)| (i, (a, b))).collect();
    Ok(clusters_with(transitions, cfg.threshold, |i, j| {
        let (a, b) = (&emb[&i], &emb[&j]);
        (
            cosine(&a.0, &b.0).unwrap_or(0.0),
            cosine(&a.1, &b.1).unwrap_or(0.0),
        )
    }))
}

/// Ids removed by the effective decisions: every member of a confirmed
/// cluster except its representative.
pub fn dropped_ids(clusters: &[DedupCluster], decisions: &[DecisionRecord]) -> Result<BTreeSet<String>, BenchError> {
    for rec in decisions {
        validate_decision(clusters, rec)?;
    }
    let effective = resolve_decisions(decisions);
    let mut dropped = BTreeSet::new();
    for c in clusters {
        let (decision, rep) = match effective.get(&c.cluster_id) {
            Some(r) => (r.decision, r.representative.clone().or_else(|| c.representative_id.clone())),
            None => (c.decision, c.representative_id.clone()),
        };
        if decision != Decision::Duplicates {
            continue;
        }
        let rep = rep.unwrap_or_else(|| c.default_representative().to_owned());
        if !c.member_transition_ids.contains(&rep) {
            return Err(BenchError::InvalidRepresentative {
                cluster: c.cluster_id.clone(),
                representative: rep,
            });
        }
        dropped.extend(c.member_transition_ids.iter().filter(|m| **m != rep).cloned());
    }
    Ok(dropped)
}

/// Input order is preserved.
pub fn apply_adjudication(
    transitions: &[Transition],
    clusters: &[DedupCluster],
    decisions: &[DecisionRecord],
) -> Result<Vec<Transition>, BenchError> {
    let dropped = dropped_ids(clusters, decisions)?;
    Ok(transitions
        .iter()
        .filter(|t| !dropped.contains(&t.id))
        .cloned()
        .collect())
}

/// Uniform sample without replacement, deterministic per seed, in input
/// order.
pub fn sample_split<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>, BenchError> {
    if n > items.len() {
        return Err(BenchError::NotEnoughSamples {
            requested: n,
            available: items.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| items[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub threshold: f64,
    pub provider: String,
    pub signature_grid: u16,
    pub transitions: usize,
    pub groups: usize,
    pub clusters: usize,
    pub clustered_transitions: usize,
    /// Size after confirming every cluster.
    pub min_size_after_adjudication: usize,
}

impl DedupReport {
    pub fn new(cfg: &DedupConfig, transitions: &[Transition], clusters: &[DedupCluster]) -> Self {
        let groups: BTreeSet<GroupKey> = transitions.iter().map(GroupKey::of).collect();
        let clustered: usize = clusters.iter().map(|c| c.member_transition_ids.len()).sum();
        Self {
            threshold: cfg.threshold,
            provider: cfg.provider.clone(),
            signature_grid: SIGNATURE_GRID,
            transitions: transitions.len(),
            groups: groups.len(),
            clusters: clusters.len(),
            clustered_transitions: clustered,
            min_size_after_adjudication: transitions.len() - clustered + clusters.len(),
        }
    }
}

pub fn read_clusters(path: &Path) -> Result<Vec<DedupCluster>, BenchError> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_clusters(path: &Path, clusters: &[DedupCluster]) -> Result<(), BenchError> {
    let f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for c in clusters {
        serde_json::to_writer(&mut w, c).map_err(|e| BenchError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| BenchError::io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}
