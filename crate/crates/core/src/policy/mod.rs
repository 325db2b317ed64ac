//! Single-step policy evaluation: oracle candidate selection and value-based
//! selection with or without world-model rollouts.

use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use futures::StreamExt;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::eval::predict_next_state;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::jsonx::{escape_raw_controls, extract_object, get_ci};
use crate::prompts;
use crate::render::PageCapture;
use crate::trajectory::{ActionKind, CanonicalAction, StateImage, Transition};

/// Grid distance at or below which a suggested point repeats the ground truth.
pub const DUPLICATE_RADIUS: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub id: String,
    pub s_t: StateImage,
    pub gt_action: CanonicalAction,
    pub goal: String,
    #[serde(default)]
    pub history: Vec<String>,
}

impl PolicySample {
    pub fn from_transition(t: &Transition, history: Vec<String>) -> Self {
        Self {
            id: t.id.clone(),
            s_t: t.s_t.clone(),
            gt_action: t.action.clone(),
            goal: t.goal.as_deref().unwrap_or_default().to_owned(),
            history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: CanonicalAction,
    #[serde(default)]
    pub reason: Option<String>,
}

/// Candidate 1 is always the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(gt: &CanonicalAction, alternatives: Vec<Candidate>) -> Self {
        let mut candidates = vec![Candidate {
            action: gt.clone(),
            reason: None,
        }];
        candidates.extend(alternatives);
        Self { candidates }
    }

    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    fn prompt_pairs(&self, order: &[usize]) -> Vec<(CanonicalAction, Option<String>)> {
        order
            .iter()
            .map(|&i| (self.candidates[i].action.clone(), self.candidates[i].reason.clone()))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("expected {expected} alternatives, parsed {found}")]
    ParseCount { expected: usize, found: usize },
    #[error("no `Best: <n>` line in selection output")]
    SelectParse,
    #[error("selected index {index} outside 1..={k}")]
    IndexOutOfRange { index: i64, k: usize },
    #[error("suggested alternative repeats the ground-truth action")]
    DuplicateOfGroundTruth,
    #[error("K must be at least 2, got {0}")]
    InvalidK(usize),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("configuration: {0}")]
    Config(String),
}

static ACTION_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"(?i)"?\baction"?\s*:\s*\{"#).unwrap());
static REASON_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"(?i)"?\breason"?\s*:"#).unwrap());
static BEST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)best\s*\**\s*:\s*\**\s*(-?\d+)").unwrap());

fn action_from_value(v: &Value) -> Option<CanonicalAction> {
    CanonicalAction::from_any_record(v).ok()
}

fn strict_alternatives(raw: &str) -> Option<Vec<Candidate>> {
    let obj = extract_object(raw)?;
    let mut items: Vec<(u64, &Value)> = obj
        .iter()
        .filter_map(|(k, v)| Some((k.trim().parse::<u64>().ok()?, v)))
        .collect();
    if items.is_empty() {
        return None;
    }
    items.sort_by_key(|(n, _)| *n);
    let mut out = Vec::new();
    for (_, v) in items {
        let m = v.as_object()?;
        let action = action_from_value(get_ci(m, "action")?)?;
        let reason = get_ci(m, "reason").and_then(|r| r.as_str()).map(str::to_owned);
        out.push(Candidate { action, reason });
    }
    Some(out)
}

fn lenient_alternatives(raw: &str) -> Vec<Candidate> {
    let text = escape_raw_controls(raw);
    let mut out = Vec::new();
    let mut cursor = 0;
    while let Some(m) = ACTION_KEY.find_at(&text, cursor) {
        let brace = m.end() - 1;
        let mut stream = serde_json::Deserializer::from_str(&text[brace..]).into_iter::<Value>();
        let Some(Ok(v)) = stream.next() else {
            cursor = m.end();
            continue;
        };
        let end = brace + stream.byte_offset();
        if let Some(action) = action_from_value(&v) {
            let before = &text[cursor..m.start()];
            let reason = REASON_KEY.find_iter(before).last().map(|r| {
                before[r.end()..]
                    .trim()
                    .trim_end_matches(',')
                    .trim()
                    .trim_matches('"')
                    .trim()
                    .to_owned()
            });
            out.push(Candidate {
                action,
                reason: reason.filter(|r| !r.is_empty()),
            });
        }
        cursor = end;
    }
    out
}

/// Reads the numbered `{1: {Reason: ..., Action: {...}}, ...}` map. Strict
/// JSON is tried first, then a scan for `Action: {...}` objects.
pub fn parse_alternatives(raw: &str) -> Vec<Candidate> {
    strict_alternatives(raw)
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| lenient_alternatives(raw))
}

/// Same kind and, for located actions, every point within
/// [`DUPLICATE_RADIUS`]; otherwise the remaining fields must match.
pub fn duplicates_ground_truth(candidate: &CanonicalAction, gt: &CanonicalAction) -> bool {
    if candidate.kind != gt.kind {
        return false;
    }
    let near = |a: Option<_>, b: Option<_>| match (a, b) {
        (Some(p), Some(q)) => crate::trajectory::GridPoint::distance(p, q) <= DUPLICATE_RADIUS,
        (None, None) => true,
        _ => false,
    };
    match candidate.kind {
        ActionKind::Click | ActionKind::LongPress | ActionKind::SetText | ActionKind::Swipe => {
            near(candidate.point, gt.point) && near(candidate.end_point, gt.end_point)
        }
        _ => {
            candidate.direction == gt.direction
                && candidate.text == gt.text
                && candidate.app_name == gt.app_name
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub policy: String,
    pub wm: Option<String>,
    pub k: usize,
    pub mode: PolicyMode,
    /// Seed for shuffling candidates shown to the selector; `None` keeps the
    /// ground truth first.
    pub shuffle: Option<u64>,
    pub retry_temperature: f64,
    pub max_in_flight: usize,
    pub work_dir: PathBuf,
}

impl PolicyConfig {
    pub fn new(policy: impl Into<String>, mode: PolicyMode, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            policy: policy.into(),
            wm: None,
            k: 3,
            mode,
            shuffle: None,
            retry_temperature: 0.2,
            max_in_flight: 4,
            work_dir: work_dir.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Oracle,
    ValueNoWm,
    ValueWithWm,
}

impl PolicyMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(Self::Oracle),
            "value_no_wm" => Some(Self::ValueNoWm),
            "value_with_wm" => Some(Self::ValueWithWm),
            _ => None,
        }
    }
}

pub async fn gen_alternatives(
    gw: &Gateway,
    policy: &str,
    sample: &PolicySample,
    k: usize,
    retry_temperature: f64,
) -> Result<Vec<Candidate>, PolicyError> {
    if k < 2 {
        return Err(PolicyError::InvalidK(k));
    }
    let want = k - 1;
    let base = ChatRequest::new()
        .text(prompts::alternatives(&sample.goal, &sample.history, &sample.gt_action, want))
        .image(&sample.s_t);
    for temperature in [0.0, retry_temperature] {
        let raw = gw.chat(policy, &ChatRequest { temperature, ..base.clone() }).await?;
        let mut alts = parse_alternatives(&raw);
        if alts.len() < want {
            return Err(PolicyError::ParseCount {
                expected: want,
                found: alts.len(),
            });
        }
        alts.truncate(want);
        if !alts.iter().any(|c| duplicates_ground_truth(&c.action, &sample.gt_action)) {
            return Ok(alts);
        }
    }
    Err(PolicyError::DuplicateOfGroundTruth)
}

/// 1-based index from the last `Best: n` line.
pub fn parse_best(raw: &str, k: usize) -> Result<usize, PolicyError> {
    let n: i64 = BEST
        .captures_iter(raw)
        .last()
        .and_then(|c| c[1].parse().ok())
        .ok_or(PolicyError::SelectParse)?;
    if n < 1 || n as usize > k {
        return Err(PolicyError::IndexOutOfRange { index: n, k });
    }
    Ok(n as usize)
}

/// Asks the policy to pick among `candidates` shown in `order` (indices into
/// the set). Returns the 0-based index into the set.
pub async fn select_action(
    gw: &Gateway,
    policy: &str,
    sample: &PolicySample,
    candidates: &CandidateSet,
    order: &[usize],
) -> Result<usize, PolicyError> {
    let req = ChatRequest::new()
        .text(prompts::select(&sample.goal, &sample.history, &candidates.prompt_pairs(order)))
        .image(&sample.s_t);
    let raw = gw.chat(policy, &req).await?;
    let shown = parse_best(&raw, order.len())?;
    Ok(order[shown - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgement {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVerdict {
    pub judgement: Judgement,
    pub confidence: f64,
    pub reason: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

impl ValueVerdict {
    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            judgement: Judgement::Invalid,
            confidence: 0.0,
            reason: reason.into(),
            flagged: true,
        }
    }
}

pub fn parse_value_output(raw: &str) -> ValueVerdict {
    let Some(obj) = extract_object(raw) else {
        return ValueVerdict::failed(raw.trim());
    };
    let reason = get_ci(&obj, "reason")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_owned();
    let judgement = match get_ci(&obj, "judgement")
        .or_else(|| get_ci(&obj, "judgment"))
        .and_then(|v| v.as_str())
        .map(|s| s.trim().to_ascii_lowercase())
        .as_deref()
    {
        Some("valid") => Judgement::Valid,
        Some("invalid") => Judgement::Invalid,
        _ => return ValueVerdict::failed(reason),
    };
    let confidence = match get_ci(&obj, "confidence") {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    let Some(c) = confidence.filter(|c| c.is_finite()) else {
        return ValueVerdict::failed(reason);
    };
    let clamped = c.clamp(0.0, 1.0);
    ValueVerdict {
        judgement,
        confidence: clamped,
        reason,
        flagged: clamped != c,
    }
}

pub async fn estimate_value(
    gw: &Gateway,
    policy: &str,
    sample: &PolicySample,
    candidate: &Candidate,
    pred_shot: Option<&StateImage>,
) -> Result<ValueVerdict, PolicyError> {
    let reason = candidate.reason.as_deref().unwrap_or_default();
    let mut req = ChatRequest::new()
        .text(prompts::value(
            &sample.goal,
            &sample.history,
            &candidate.action,
            reason,
            pred_shot.is_some(),
        ))
        .image(&sample.s_t);
    if let Some(p) = pred_shot {
        req = req.image(p);
    }
    Ok(parse_value_output(&gw.chat(policy, &req).await?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Policy,
    ArgmaxValid,
    ArgmaxAllInvalid,
}

/// Highest confidence among valid verdicts, else highest overall; ties go to
/// the lowest index.
pub fn select_by_value(verdicts: &[ValueVerdict]) -> Option<(usize, SelectionRule)> {
    let argmax = |valid_only: bool| {
        let mut best: Option<usize> = None;
        for (i, v) in verdicts.iter().enumerate() {
            if valid_only && v.judgement != Judgement::Valid {
                continue;
            }
            if best.is_none_or(|b| v.confidence > verdicts[b].confidence) {
                best = Some(i);
            }
        }
        best
    };
    argmax(true)
        .map(|i| (i, SelectionRule::ArgmaxValid))
        .or_else(|| argmax(false).map(|i| (i, SelectionRule::ArgmaxAllInvalid)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyLogRow {
    pub sample_id: String,
    pub mode: PolicyMode,
    pub candidates: Vec<Candidate>,
    /// Presentation order shown to the selector, 1-based, when shuffled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shown_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<ValueVerdict>,
    /// 1-based index into `candidates`.
    pub selected: Option<usize>,
    pub rule: Option<SelectionRule>,
    pub correct: bool,
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub mode: PolicyMode,
    pub k: usize,
    pub samples: usize,
    pub correct: usize,
    pub accuracy_pct: f64,
    pub flagged: usize,
    pub errors: usize,
    pub rows: Vec<PolicyLogRow>,
}

fn presentation_order(k: usize, seed: Option<u64>, sample_id: &str) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    if let Some(seed) = seed {
        let mix = sample_id
            .bytes()
            .fold(seed ^ 0x9E37_79B9_7F4A_7C15, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3));
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    }
    order
}

async fn rollout_shot(
    gw: &Gateway,
    wm: &str,
    capture: &dyn PageCapture,
    sample: &PolicySample,
    idx: usize,
    candidate: &Candidate,
    dir: &Path,
) -> Result<Option<StateImage>, String> {
    let t = Transition {
        id: format!("{}-c{}", sample.id, idx + 1),
        app: Arc::from(""),
        goal: None,
        lang: Arc::from("en"),
        episode_id: Arc::from(sample.id.as_str()),
        step_index: 0,
        s_t: sample.s_t.clone(),
        action: candidate.action.clone(),
        s_t1: sample.s_t.clone(),
    };
    let out = dir.join(format!("{}.png", t.id));
    let pred = predict_next_state(gw, wm, capture, &t, &out)
        .await
        .map_err(|e| e.to_string())?;
    Ok(pred.screenshot().filter(|_| !pred.render_failed).cloned())
}

async fn score(
    gw: &Gateway,
    capture: Option<&dyn PageCapture>,
    cfg: &PolicyConfig,
    sample: &PolicySample,
    idx: usize,
    candidate: &Candidate,
) -> Result<ValueVerdict, PolicyError> {
    let shot = match (cfg.mode, &cfg.wm, capture) {
        (PolicyMode::ValueWithWm, Some(wm), Some(capture)) => {
            match rollout_shot(gw, wm, capture, sample, idx, candidate, &cfg.work_dir.join("rollouts")).await {
                Ok(Some(s)) => Some(s),
                Ok(None) => return Ok(ValueVerdict::failed("predicted next state failed to render")),
                Err(e) => return Ok(ValueVerdict::failed(format!("rollout failed: {e}"))),
            }
        }
        _ => None,
    };
    estimate_value(gw, &cfg.policy, sample, candidate, shot.as_ref()).await
}

async fn evaluate_one(
    gw: &Gateway,
    capture: Option<&dyn PageCapture>,
    cfg: &PolicyConfig,
    sample: &PolicySample,
) -> PolicyLogRow {
    let mut row = PolicyLogRow {
        sample_id: sample.id.clone(),
        mode: cfg.mode,
        candidates: Vec::new(),
        shown_order: None,
        verdicts: Vec::new(),
        selected: None,
        rule: None,
        correct: false,
        flagged: false,
        error: None,
    };
    let alts = match gen_alternatives(gw, &cfg.policy, sample, cfg.k, cfg.retry_temperature).await {
        Ok(a) => a,
        Err(e) => {
            row.error = Some(e.to_string());
            row.flagged = true;
            return row;
        }
    };
    let set = CandidateSet::new(&sample.gt_action, alts);
    row.candidates = set.candidates.clone();
    let picked = match cfg.mode {
        PolicyMode::Oracle => {
            let order = presentation_order(set.k(), cfg.shuffle, &sample.id);
            if cfg.shuffle.is_some() {
                row.shown_order = Some(order.iter().map(|i| i + 1).collect());
            }
            select_action(gw, &cfg.policy, sample, &set, &order)
                .await
                .map(|i| (i, SelectionRule::Policy))
        }
        PolicyMode::ValueNoWm | PolicyMode::ValueWithWm => {
            let scored = futures::future::join_all(
                set.candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| score(gw, capture, cfg, sample, i, c)),
            )
            .await;
            let mut verdicts = Vec::with_capacity(scored.len());
            for s in scored {
                verdicts.push(s.unwrap_or_else(|e| ValueVerdict::failed(format!("value call failed: {e}"))));
            }
            row.flagged |= verdicts.iter().any(|v| v.flagged);
            let pick = select_by_value(&verdicts).ok_or(PolicyError::InvalidK(0));
            row.verdicts = verdicts;
            pick
        }
    };
    match picked {
        Ok((i, rule)) => {
            row.selected = Some(i + 1);
            row.rule = Some(rule);
            row.correct = i == 0;
        }
        Err(e) => {
            row.error = Some(e.to_string());
            row.flagged = true;
        }
    }
    row
}

/// Runs every sample; failures count as incorrect selections and are
/// flagged in the log.
pub async fn run_policy_eval(
    gw: &Gateway,
    capture: Option<&dyn PageCapture>,
    samples: &[PolicySample],
    cfg: &PolicyConfig,
) -> Result<PolicyReport, PolicyError> {
    if cfg.k < 2 {
        return Err(PolicyError::InvalidK(cfg.k));
    }
    gw.endpoint(&cfg.policy).map_err(|e| PolicyError::Config(e.to_string()))?;
    if cfg.mode == PolicyMode::ValueWithWm {
        let wm = cfg
            .wm
            .as_deref()
            .ok_or_else(|| PolicyError::Config("value_with_wm needs a world model".into()))?;
        gw.endpoint(wm).map_err(|e| PolicyError::Config(e.to_string()))?;
        if capture.is_none() {
            return Err(PolicyError::Config("value_with_wm needs a renderer".into()));
        }
    }
    let mut rows: Vec<(usize, PolicyLogRow)> = futures::stream::iter(samples.iter().enumerate())
        .map(|(i, s)| async move { (i, evaluate_one(gw, capture, cfg, s).await) })
        .buffer_unordered(cfg.max_in_flight.max(1))
        .collect()
        .await;
    rows.sort_by_key(|(i, _)| *i);
    let rows: Vec<PolicyLogRow> = rows.into_iter().map(|(_, r)| r).collect();
    let correct = rows.iter().filter(|r| r.correct).count();
    Ok(PolicyReport {
        mode: cfg.mode,
        k: cfg.k,
        samples: rows.len(),
        correct,
        accuracy_pct: if rows.is_empty() {
            0.0
        } else {
            100.0 * correct as f64 / rows.len() as f64
        },
        flagged: rows.iter().filter(|r| r.flagged).count(),
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(j: Judgement, c: f64) -> ValueVerdict {
        ValueVerdict {
            judgement: j,
            confidence: c,
            reason: String::new(),
            flagged: false,
        }
    }

    #[test]
    fn lenient_numbered_map() {
        let raw = r#"{1: {Reason: open the menu, Action: {"action_type": "TAP", "x": 100, "y": 200}}, 2: {Reason: "go back", Action: {"action_type":"BACK"}}}"#;
        let alts = parse_alternatives(raw);
        assert_eq!(alts.len(), 2);
        assert_eq!(alts[0].action, CanonicalAction::click(100, 200));
        assert_eq!(alts[0].reason.as_deref(), Some("open the menu"));
        assert_eq!(alts[1].action, CanonicalAction::bare(ActionKind::SystemBack));
        assert_eq!(alts[1].reason.as_deref(), Some("go back"));
    }

    #[test]
    fn strict_numbered_map() {
        let raw = r#"{"2": {"Reason": "b", "Action": {"action_type": "HOME"}}, "1": {"Reason": "a", "Action": {"action_type": "SCROLL", "direction": "down"}}}"#;
        let alts = parse_alternatives(raw);
        assert_eq!(alts[0].reason.as_deref(), Some("a"));
        assert_eq!(alts[1].action.kind, ActionKind::SystemHome);
    }

    #[test]
    fn duplicate_detection() {
        let gt = CanonicalAction::click(500, 300);
        assert!(duplicates_ground_truth(&CanonicalAction::click(501, 300), &gt));
        assert!(duplicates_ground_truth(&CanonicalAction::click(515, 320), &gt));
        assert!(!duplicates_ground_truth(&CanonicalAction::click(530, 300), &gt));
        assert!(!duplicates_ground_truth(&CanonicalAction::long_press(500, 300), &gt));
    }

    #[test]
    fn best_line() {
        assert_eq!(parse_best("Reason: x\nBest: 2", 3).unwrap(), 2);
        assert_eq!(parse_best("**Best:** 3", 3).unwrap(), 3);
        assert!(matches!(parse_best("Best: 0", 3), Err(PolicyError::IndexOutOfRange { index: 0, k: 3 })));
        assert!(matches!(parse_best("no idea", 3), Err(PolicyError::SelectParse)));
    }

    #[test]
    fn value_parsing() {
        let ok = parse_value_output(r#"{"Reason":"r","Judgement":"valid","Confidence":0.8}"#);
        assert_eq!((ok.judgement, ok.confidence, ok.flagged), (Judgement::Valid, 0.8, false));
        let hi = parse_value_output(r#"{"Reason":"r","Judgement":"VALID","Confidence":1.7}"#);
        assert_eq!((hi.confidence, hi.flagged), (1.0, true));
        let bad = parse_value_output("hmm");
        assert_eq!((bad.judgement, bad.confidence, bad.flagged), (Judgement::Invalid, 0.0, true));
    }

    #[test]
    fn selection_rules() {
        use Judgement::*;
        let a = [v(Valid, 0.7), v(Invalid, 0.9), v(Valid, 0.6)];
        assert_eq!(select_by_value(&a), Some((0, SelectionRule::ArgmaxValid)));
        let b = [v(Invalid, 0.2), v(Invalid, 0.5), v(Invalid, 0.1)];
        assert_eq!(select_by_value(&b), Some((1, SelectionRule::ArgmaxAllInvalid)));
        let tie = [v(Valid, 0.5), v(Valid, 0.5)];
        assert_eq!(select_by_value(&tie), Some((0, SelectionRule::ArgmaxValid)));
        assert_eq!(select_by_value(&[]), None);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut o = presentation_order(5, Some(7), "s1");
        assert_eq!(o, presentation_order(5, Some(7), "s1"));
        o.sort_unstable();
        assert_eq!(o, vec![0, 1, 2, 3, 4]);
        assert_eq!(presentation_order(3, None, "s"), vec![0, 1, 2]);
    }
}
