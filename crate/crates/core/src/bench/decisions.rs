use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BenchError, DedupCluster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    #[default]
    Pending,
    Duplicates,
    Distinct,
}

/// One line of the append-only decisions log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub cluster_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub representative: Option<String>,
    #[serde(default)]
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
}

impl DecisionRecord {
    pub fn new(cluster_id: impl Into<String>, decision: Decision, representative: Option<String>, annotator: impl Into<String>) -> Self {
        Self {
            cluster_id: cluster_id.into(),
            decision,
            representative,
            annotator: annotator.into(),
            timestamp: Utc::now(),
        }
    }

    /// Same verdict, ignoring who made it and when.
    pub fn same_verdict(&self, other: &DecisionRecord) -> bool {
        self.cluster_id == other.cluster_id
            && self.decision == other.decision
            && self.representative == other.representative
    }
}

/// Effective decision per cluster: latest timestamp wins, later records win
/// ties.
pub fn resolve_decisions(records: &[DecisionRecord]) -> BTreeMap<String, DecisionRecord> {
    let mut order: Vec<(usize, &DecisionRecord)> = records.iter().enumerate().collect();
    order.sort_by(|a, b| a.1.timestamp.cmp(&b.1.timestamp).then(a.0.cmp(&b.0)));
    order
        .into_iter()
        .map(|(_, r)| (r.cluster_id.clone(), r.clone()))
        .collect()
}

/// Checks `rec` against the clusters it refers to.
pub fn validate_decision(clusters: &[DedupCluster], rec: &DecisionRecord) -> Result<(), BenchError> {
    let c = clusters
        .iter()
        .find(|c| c.cluster_id == rec.cluster_id)
        .ok_or_else(|| BenchError::UnknownCluster(rec.cluster_id.clone()))?;
    if let Some(r) = &rec.representative {
        if !c.member_transition_ids.contains(r) {
            return Err(BenchError::InvalidRepresentative {
                cluster: c.cluster_id.clone(),
                representative: r.clone(),
            });
        }
    }
    Ok(())
}

pub fn read_decisions(path: &Path) -> Result<Vec<DecisionRecord>, BenchError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(BenchError::io(path, e)),
    };
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

/// Validates and appends `rec` unless it repeats the cluster's effective
/// verdict. Returns whether a line was written.
pub fn append_decision(path: &Path, clusters: &[DedupCluster], rec: &DecisionRecord) -> Result<bool, BenchError> {
    validate_decision(clusters, rec)?;
    let existing = read_decisions(path)?;
    if resolve_decisions(&existing)
        .get(&rec.cluster_id)
        .is_some_and(|cur| cur.same_verdict(rec))
    {
        return Ok(false);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| BenchError::io(path, e))?;
    let mut line = serde_json::to_string(rec).expect("record serializes");
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| BenchError::io(path, e))?;
    f.sync_data().map_err(|e| BenchError::io(path, e))?;
    Ok(true)
}
