//! Turns policy trajectories into world-model SFT samples: the next-state
//! screenshot is relabeled as HTML by a frontier model, a look-ahead
//! reasoning trace is synthesized from the annotated current state, and both
//! are assembled into a chat sample.

mod annotate;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{format_wm_output, has_line_initial_html, parse_wm_output};
use crate::gateway::{ChatRequest, Gateway, GatewayError, MAX_OUTPUT_TOKENS};
use crate::jsonx::{extract_object, get_ci};
use crate::prompts;
use crate::render::{StaticFail, StaticVerdict, renderability_check};
use crate::trajectory::{Episode, StateImage, Transition, to_transitions};

pub use annotate::{
    BLUE, GREEN, Mark, RED, YELLOW, annotate_action, annotate_image, click_radius, mark_for,
};

/// Phrases that betray the annotation legend or the privileged next state.
pub const BLOCKLIST: &[&str] = &[
    "red circle",
    "crosshair",
    "cross-hair",
    "yellow dot",
    "yellow center",
    "center dot",
    "blue line",
    "green start",
    "green dot",
    "green point",
    "red end",
    "red dot",
    "end point marker",
    "annotation",
    "annotated",
    "ground truth",
    "ground-truth",
    "second image",
    "second screenshot",
    "next state image",
    "provided next state",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeState {
    pub reasoning: String,
    pub html: String,
    pub source_transition_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub text: String,
    pub source_transition_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Image { image: PathBuf },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub dataset: String,
    pub transition_id: String,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftSample {
    pub messages: Vec<Message>,
    pub meta: SampleMeta,
}

impl SftSample {
    pub fn assistant_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == "assistant")?
            .content
            .iter()
            .find_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
    }

    pub fn user_images(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.role == "user")
            .flat_map(|m| &m.content)
            .filter(|p| matches!(p, ContentPart::Image { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Relabel the true next state and reason with look-ahead.
    #[default]
    Ours,
    /// Next-state code predicted from the current state alone.
    NaiveState,
    /// Reasoning produced without seeing the next state.
    NaiveReasoning,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ours" => Some(Self::Ours),
            "naive-state" => Some(Self::NaiveState),
            "naive-reasoning" => Some(Self::NaiveReasoning),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("unparseable relabel response")]
    Parse { raw: String },
    #[error("html fails renderability check: {0:?}")]
    Renderability(StaticFail),
    #[error("reasoning trace is empty")]
    EmptyReasoning,
    #[error("reasoning trace mentions `{0}`")]
    Blocklist(String),
    #[error("reasoning trace contains a line-initial HTML: delimiter")]
    Delimiter,
    #[error("assistant turn does not round-trip through the output parser")]
    RoundTrip,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("image: {0}")]
    Image(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl DatagenError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse_error",
            Self::Renderability(_) => "renderability_reject",
            Self::EmptyReasoning | Self::Blocklist(_) => "blocklist_reject",
            Self::Delimiter => "delimiter_collision",
            Self::RoundTrip => "round_trip",
            Self::Gateway(_) => "endpoint_error",
            Self::Image(_) => "image_error",
            Self::Config(_) => "config_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub transition_id: String,
    pub stage: String,
    pub reason: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_key: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DatagenConfig {
    pub frontier: String,
    pub strategy: Strategy,
    pub dataset: String,
    /// Annotated screenshots are written under `<work_dir>/annotated/`.
    pub work_dir: PathBuf,
    pub max_in_flight: usize,
    pub temperature: f64,
    pub retry_temperature: f64,
    pub resample_retries: u32,
    pub max_output_tokens: u32,
}

impl DatagenConfig {
    pub fn new(frontier: impl Into<String>, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            frontier: frontier.into(),
            strategy: Strategy::Ours,
            dataset: "dataset".into(),
            work_dir: work_dir.into(),
            max_in_flight: 8,
            temperature: 0.0,
            retry_temperature: 0.2,
            resample_retries: 1,
            max_output_tokens: MAX_OUTPUT_TOKENS,
        }
    }
}

fn request(cfg: &DatagenConfig, temperature: f64) -> ChatRequest {
    ChatRequest {
        temperature,
        max_output_tokens: cfg.max_output_tokens,
        ..ChatRequest::new()
    }
}

fn parse_code_response(raw: &str) -> Option<(String, String)> {
    let m = extract_object(raw)?;
    let html = get_ci(&m, "html")?.as_str()?.trim().to_owned();
    let reasoning = get_ci(&m, "reasoning")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .trim()
        .to_owned();
    Some((reasoning, html))
}

/// Sends `req` at the configured temperatures until `parse` yields
/// renderable HTML.
async fn sample_code<F>(
    gw: &Gateway,
    cfg: &DatagenConfig,
    base: ChatRequest,
    transition_id: &str,
    parse: F,
) -> Result<CodeState, DatagenError>
where
    F: Fn(&str) -> Option<(String, String)>,
{
    let temps =
        std::iter::once(cfg.temperature).chain((0..cfg.resample_retries).map(|_| cfg.retry_temperature));
    let mut last = None;
    for t in temps {
        let raw = gw
            .chat(&cfg.frontier, &ChatRequest { temperature: t, ..base.clone() })
            .await?;
        match parse(&raw) {
            None => last = Some(DatagenError::Parse { raw }),
            Some((reasoning, html)) => match renderability_check(&html) {
                StaticVerdict::Pass => {
                    return Ok(CodeState {
                        reasoning,
                        html,
                        source_transition_id: transition_id.to_owned(),
                    });
                }
                StaticVerdict::Fail(f) => last = Some(DatagenError::Renderability(f)),
            },
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Cross-modal relabeling of a screenshot into web code.
pub async fn relabel_state(
    gw: &Gateway,
    cfg: &DatagenConfig,
    image: &StateImage,
    transition_id: &str,
) -> Result<CodeState, DatagenError> {
    let base = request(cfg, cfg.temperature).text(prompts::img_to_code()).image(image);
    sample_code(gw, cfg, base, transition_id, parse_code_response).await
}

/// Next-state code predicted without the true next state.
pub async fn naive_state(gw: &Gateway, cfg: &DatagenConfig, t: &Transition) -> Result<CodeState, DatagenError> {
    let base = request(cfg, cfg.temperature)
        .image(&t.s_t)
        .text(prompts::world_model(&t.action));
    sample_code(gw, cfg, base, &t.id, |raw| parse_wm_output(raw).ok()).await
}

/// Rejects empty traces and traces that leak the legend or next state.
pub fn check_reasoning(text: &str) -> Result<(), DatagenError> {
    if text.trim().is_empty() {
        return Err(DatagenError::EmptyReasoning);
    }
    let lower = text.to_lowercase();
    if let Some(p) = BLOCKLIST.iter().find(|p| lower.contains(*p)) {
        return Err(DatagenError::Blocklist((*p).to_owned()));
    }
    Ok(())
}

/// Reasoning for `t` from its annotated current state, with the true next
/// state attached when `look_ahead` is set.
pub async fn synthesize_reasoning(
    gw: &Gateway,
    cfg: &DatagenConfig,
    t: &Transition,
    annotated: &StateImage,
    look_ahead: bool,
) -> Result<ReasoningTrace, DatagenError> {
    let req = if look_ahead {
        request(cfg, cfg.temperature)
            .text(prompts::look_ahead(&t.action))
            .image(annotated)
            .image(&t.s_t1)
    } else {
        request(cfg, cfg.temperature)
            .text(prompts::no_look_ahead(&t.action))
            .image(annotated)
    };
    let raw = gw.chat(&cfg.frontier, &req).await?;
    let text = raw.trim().to_owned();
    check_reasoning(&text)?;
    Ok(ReasoningTrace {
        text,
        source_transition_id: t.id.to_string(),
    })
}

pub fn build_sft_sample(
    t: &Transition,
    r: &ReasoningTrace,
    c: &CodeState,
    dataset: &str,
    strategy: Strategy,
) -> Result<SftSample, DatagenError> {
    if has_line_initial_html(&r.text) {
        return Err(DatagenError::Delimiter);
    }
    let assistant = format_wm_output(&r.text, &c.html);
    match parse_wm_output(&assistant) {
        Ok((pr, ph)) if pr == r.text && ph == c.html => {}
        _ => return Err(DatagenError::RoundTrip),
    }
    Ok(SftSample {
        messages: vec![
            Message {
                role: "user".into(),
                content: vec![
                    ContentPart::Image {
                        image: t.s_t.path().to_path_buf(),
                    },
                    ContentPart::Text {
                        text: prompts::world_model(&t.action),
                    },
                ],
            },
            Message {
                role: "assistant".into(),
                content: vec![ContentPart::Text { text: assistant }],
            },
        ],
        meta: SampleMeta {
            dataset: dataset.to_owned(),
            transition_id: t.id.to_string(),
            strategy,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenReport {
    pub strategy: Strategy,
    pub transitions: usize,
    pub samples: usize,
    pub rejected: usize,
    pub rejections_by_reason: BTreeMap<String, usize>,
    /// Share of code-stage responses whose HTML passed the static gate.
    pub renderable_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DatagenOutcome {
    pub samples: Vec<SftSample>,
    pub rejections: Vec<Rejection>,
    pub report: DatagenReport,
}

enum Outcome {
    Sample(Box<SftSample>),
    Rejected(Rejection, Option<bool>),
}

fn rejection(t: &Transition, stage: &str, e: &DatagenError) -> Rejection {
    let (raw, request_key) = match e {
        DatagenError::Parse { raw } => (Some(raw.clone()), None),
        DatagenError::Gateway(g) => (None, g.request_key().map(str::to_owned)),
        _ => (None, None),
    };
    Rejection {
        transition_id: t.id.to_string(),
        stage: stage.to_owned(),
        reason: e.kind().to_owned(),
        detail: e.to_string(),
        raw,
        request_key,
    }
}

async fn process(gw: &Gateway, cfg: &DatagenConfig, t: Transition) -> Outcome {
    let out = cfg.work_dir.join("annotated").join(format!("{}.png", t.id));
    let (s_t, action) = (t.s_t.clone(), t.action.clone());
    let annotated = match tokio::task::spawn_blocking(move || annotate_action(&s_t, &action, &out)).await {
        Ok(Ok(img)) => img,
        Ok(Err(e)) => return Outcome::Rejected(rejection(&t, "annotate", &DatagenError::Image(e.to_string())), None),
        Err(e) => return Outcome::Rejected(rejection(&t, "annotate", &DatagenError::Image(e.to_string())), None),
    };
    let code = async {
        match cfg.strategy {
            Strategy::NaiveState => naive_state(gw, cfg, &t).await,
            _ => relabel_state(gw, cfg, &t.s_t1, &t.id).await,
        }
    };
    let reasoning = synthesize_reasoning(gw, cfg, &t, &annotated, cfg.strategy != Strategy::NaiveReasoning);
    let (code, reasoning) = futures::join!(code, reasoning);
    let renderable = match &code {
        Ok(_) => Some(true),
        Err(DatagenError::Parse { .. } | DatagenError::Renderability(_)) => Some(false),
        Err(_) => None,
    };
    let code = match code {
        Ok(c) => c,
        Err(e) => return Outcome::Rejected(rejection(&t, "relabel", &e), renderable),
    };
    let reasoning = match reasoning {
        Ok(r) => r,
        Err(e) => return Outcome::Rejected(rejection(&t, "reasoning", &e), renderable),
    };
    match build_sft_sample(&t, &reasoning, &code, &cfg.dataset, cfg.strategy) {
        Ok(s) => Outcome::Sample(Box::new(s)),
        Err(e) => Outcome::Rejected(rejection(&t, "assemble", &e), renderable),
    }
}

/// Runs the full pipeline over every transition of `episodes`. Per-sample
/// failures become rejections; only configuration problems abort.
pub async fn generate_dataset(
    gw: &Gateway,
    episodes: &[Episode],
    cfg: &DatagenConfig,
) -> Result<DatagenOutcome, DatagenError> {
    gw.endpoint(&cfg.frontier)
        .map_err(|e| DatagenError::Config(e.to_string()))?;
    let transitions: Vec<Transition> = episodes.iter().flat_map(to_transitions).collect();
    let total = transitions.len();
    let mut results: Vec<Outcome> = futures::stream::iter(transitions)
        .map(|t| process(gw, cfg, t))
        .buffer_unordered(cfg.max_in_flight.max(1))
        .collect()
        .await;
    let mut samples = Vec::new();
    let mut rejections = Vec::new();
    let (mut renderable, mut code_answers) = (0usize, 0usize);
    for r in results.drain(..) {
        match r {
            Outcome::Sample(s) => {
                renderable += 1;
                code_answers += 1;
                samples.push(*s);
            }
            Outcome::Rejected(rej, flag) => {
                if let Some(ok) = flag {
                    code_answers += 1;
                    renderable += usize::from(ok);
                }
                rejections.push(rej);
            }
        }
    }
    samples.sort_by(|a, b| a.meta.transition_id.cmp(&b.meta.transition_id));
    rejections.sort_by(|a, b| a.transition_id.cmp(&b.transition_id));
    let mut by_reason = BTreeMap::new();
    for r in &rejections {
        *by_reason.entry(r.reason.clone()).or_insert(0) += 1;
    }
    let report = DatagenReport {
        strategy: cfg.strategy,
        transitions: total,
        samples: samples.len(),
        rejected: rejections.len(),
        rejections_by_reason: by_reason,
        renderable_rate: (code_answers > 0).then(|| renderable as f64 / code_answers as f64),
    };
    Ok(DatagenOutcome {
        samples,
        rejections,
        report,
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
