//! Render-and-judge evaluation of next-state predictions.

mod parse;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, MAX_OUTPUT_TOKENS};
use crate::jsonx::{extract_object, get_ci};
use crate::prompts;
use crate::render::{PageCapture, RenderError, RenderResult, RenderVerdict, Viewport, render_html};
use crate::trajectory::{StateImage, Transition};

pub use parse::{
    HTML_MARKER, ParseFail, REASONING_MARKER, format_wm_output, has_line_initial_html, parse_wm_output,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sample {sample}: {source}")]
    Endpoint {
        sample: String,
        #[source]
        source: GatewayError,
    },
    #[error("sample {sample}: {source}")]
    Render {
        sample: String,
        #[source]
        source: RenderError,
    },
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WMOutput {
    pub raw: String,
    pub reasoning: String,
    pub html: String,
    pub render: Option<RenderResult>,
    pub render_failed: bool,
}

impl WMOutput {
    pub fn screenshot(&self) -> Option<&StateImage> {
        self.render.as_ref()?.screenshot.as_ref()
    }
}

/// Queries `wm` for the next state of `t`, then renders the prediction at
/// the ground-truth screenshot size into `out`.
pub async fn predict_next_state(
    gw: &Gateway,
    wm: &str,
    capture: &dyn PageCapture,
    t: &Transition,
    out: &Path,
) -> Result<WMOutput, EvalError> {
    let req = ChatRequest {
        max_output_tokens: MAX_OUTPUT_TOKENS,
        ..ChatRequest::new()
    }
    .image(&t.s_t)
    .text(prompts::world_model(&t.action));
    let raw = gw.chat(wm, &req).await.map_err(|source| EvalError::Endpoint {
        sample: t.id.clone(),
        source,
    })?;
    let Ok((reasoning, html)) = parse_wm_output(&raw) else {
        return Ok(WMOutput {
            raw,
            reasoning: String::new(),
            html: String::new(),
            render: None,
            render_failed: true,
        });
    };
    let render = render_html(capture, &html, Viewport::for_image(&t.s_t1), out)
        .await
        .map_err(|source| EvalError::Render {
            sample: t.id.clone(),
            source,
        })?;
    Ok(WMOutput {
        render_failed: render.verdict != RenderVerdict::Ok,
        raw,
        reasoning,
        html,
        render: Some(render),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub status: JudgeStatus,
    pub thoughts: String,
    /// Output could not be parsed or the call failed; counted as failure.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

/// Parses a judge reply. Anything without a recognizable status becomes a
/// flagged failure.
pub fn parse_judge_output(raw: &str) -> JudgeVerdict {
    let flagged_failure = |thoughts: String| JudgeVerdict {
        status: JudgeStatus::Failure,
        thoughts,
        flagged: true,
    };
    let Some(obj) = extract_object(raw) else {
        return flagged_failure(raw.trim().to_owned());
    };
    let thoughts = get_ci(&obj, "thoughts")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_owned();
    let status = get_ci(&obj, "status")
        .and_then(|v| v.as_str())
        .map(|s| s.trim().to_ascii_lowercase());
    match status.as_deref() {
        Some("success") => JudgeVerdict {
            status: JudgeStatus::Success,
            thoughts,
            flagged: false,
        },
        Some("failure") => JudgeVerdict {
            status: JudgeStatus::Failure,
            thoughts,
            flagged: false,
        },
        _ => flagged_failure(thoughts),
    }
}

pub async fn judge_once(
    gw: &Gateway,
    judge: &str,
    t: &Transition,
    current: &StateImage,
    pred_shot: &StateImage,
) -> Result<JudgeVerdict, GatewayError> {
    let req = ChatRequest::new()
        .text(prompts::iacc(&t.action))
        .image(current)
        .image(pred_shot);
    Ok(parse_judge_output(&gw.chat(judge, &req).await?))
}

/// Mean of the success indicators, or zero for a render failure.
pub fn aggregate_iacc(panel: &[JudgeStatus], render_failed: bool) -> f64 {
    if render_failed || panel.is_empty() {
        return 0.0;
    }
    let ok = panel.iter().filter(|s| **s == JudgeStatus::Success).count();
    ok as f64 / panel.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgePanelResult {
    pub per_judge: BTreeMap<String, JudgeVerdict>,
    pub iacc_contrib: f64,
}

impl JudgePanelResult {
    pub fn render_failed() -> Self {
        Self {
            per_judge: BTreeMap::new(),
            iacc_contrib: 0.0,
        }
    }

    pub fn from_verdicts(per_judge: BTreeMap<String, JudgeVerdict>) -> Self {
        let statuses: Vec<JudgeStatus> = per_judge.values().map(|v| v.status).collect();
        Self {
            iacc_contrib: aggregate_iacc(&statuses, false),
            per_judge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub per_provider: BTreeMap<String, f64>,
    pub mean: f64,
}

pub async fn similarity(
    gw: &Gateway,
    a: &StateImage,
    b: &StateImage,
    providers: &[String],
) -> Result<SimilarityScore, GatewayError> {
    let scores =
        futures::future::try_join_all(providers.iter().map(|p| gw.similarity(p, a, b))).await?;
    let per_provider: BTreeMap<String, f64> = providers.iter().cloned().zip(scores).collect();
    let mean = if per_provider.is_empty() {
        0.0
    } else {
        per_provider.values().sum::<f64>() / per_provider.len() as f64
    };
    Ok(SimilarityScore { per_provider, mean })
}

/// Downscales `image` so its longer side is at most `max_side`, caching the
/// result under `dir`. Smaller images are returned as is.
pub fn limit_side(image: &StateImage, max_side: u32, dir: &Path) -> Result<StateImage, crate::trajectory::ImageError> {
    let long = image.width_px.max(image.height_px);
    if long <= max_side || max_side == 0 {
        return Ok(image.clone());
    }
    let scale = f64::from(max_side) / f64::from(long);
    let w = ((f64::from(image.width_px) * scale).round() as u32).max(1);
    let h = ((f64::from(image.height_px) * scale).round() as u32).max(1);
    let hash = image.content_hash()?;
    let out = dir.join(format!("{}-{w}x{h}.png", &hash[..16]));
    if !out.exists() {
        let img = image.decode()?.resize_exact(w, h, image::imageops::FilterType::Lanczos3);
        std::fs::create_dir_all(dir).map_err(|source| crate::trajectory::ImageError::Read {
            path: dir.to_path_buf(),
            source,
        })?;
        let tmp = out.with_extension(format!("{}.tmp", std::process::id()));
        img.save_with_format(&tmp, image::ImageFormat::Png)
            .map_err(|source| crate::trajectory::ImageError::Decode {
                path: tmp.clone(),
                source,
            })?;
        std::fs::rename(&tmp, &out).map_err(|source| crate::trajectory::ImageError::Read {
            path: out.clone(),
            source,
        })?;
    }
    Ok(StateImage::new(out, w, h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub benchmark: String,
    pub wm: String,
    pub judges: Vec<String>,
    pub providers: Vec<String>,
    #[serde(skip)]
    pub work_dir: PathBuf,
    #[serde(skip)]
    pub max_in_flight: usize,
    /// Longest side of images sent to judges; `None` sends originals.
    pub judge_max_side: Option<u32>,
}

impl EvalConfig {
    pub fn new(wm: impl Into<String>, judges: Vec<String>, providers: Vec<String>, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            benchmark: "bench".into(),
            wm: wm.into(),
            judges,
            providers,
            work_dir: work_dir.into(),
            max_in_flight: 4,
            judge_max_side: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub transition_id: String,
    pub app: String,
    pub viewport: [u32; 2],
    pub render_verdict: Option<RenderVerdict>,
    pub render_failed: bool,
    pub panel: JudgePanelResult,
    pub similarity: Option<SimilarityScore>,
    /// `sim(S_t, S_{t+1})`, the score of simply copying the input.
    pub baseline_similarity: Option<SimilarityScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleRow {
    pub fn evaluated(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub benchmark: String,
    pub config: EvalConfig,
    pub samples: usize,
    pub evaluated: usize,
    pub iacc_pct: f64,
    pub render_fail_pct: f64,
    /// Mean over rendered samples; `None` when nothing rendered.
    pub similarity_pct: Option<f64>,
    pub similarity_by_provider: BTreeMap<String, f64>,
    pub per_judge_success_pct: BTreeMap<String, f64>,
    pub flagged_judgements: usize,
    pub rows: Vec<SampleRow>,
    pub generated_at: Option<String>,
}

impl BenchmarkReport {
    pub fn from_rows(config: EvalConfig, rows: Vec<SampleRow>) -> Self {
        let done: Vec<&SampleRow> = rows.iter().filter(|r| r.evaluated()).collect();
        let n = done.len();
        let pct = |x: f64, d: usize| if d == 0 { 0.0 } else { 100.0 * x / d as f64 };
        let iacc: f64 = done.iter().map(|r| r.panel.iacc_contrib).sum();
        let fails = done.iter().filter(|r| r.render_failed).count();
        let sims: Vec<&SimilarityScore> = done.iter().filter_map(|r| r.similarity.as_ref()).collect();
        let similarity_pct =
            (!sims.is_empty()).then(|| pct(sims.iter().map(|s| s.mean).sum(), sims.len()));
        let similarity_by_provider = config
            .providers
            .iter()
            .map(|p| {
                let v: f64 = sims.iter().filter_map(|s| s.per_provider.get(p)).sum();
                (p.clone(), pct(v, sims.len()))
            })
            .collect();
        let judged: Vec<&SampleRow> = done.iter().copied().filter(|r| !r.render_failed).collect();
        let per_judge_success_pct = config
            .judges
            .iter()
            .map(|j| {
                let ok = judged
                    .iter()
                    .filter(|r| r.panel.per_judge.get(j).is_some_and(|v| v.status == JudgeStatus::Success))
                    .count();
                (j.clone(), pct(ok as f64, judged.len()))
            })
            .collect();
        let flagged_judgements = done
            .iter()
            .flat_map(|r| r.panel.per_judge.values())
            .filter(|v| v.flagged)
            .count();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            benchmark: config.benchmark.clone(),
            samples: rows.len(),
            evaluated: n,
            iacc_pct: pct(iacc, n),
            render_fail_pct: pct(fails as f64, n),
            similarity_pct,
            similarity_by_provider,
            per_judge_success_pct,
            flagged_judgements,
            config,
            rows,
            generated_at: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn pred_path(cfg: &EvalConfig, id: &str) -> PathBuf {
    let tag: String = hex::encode(&Sha256::digest(cfg.wm.as_bytes())[..6]);
    cfg.work_dir.join("pred").join(tag).join(format!("{id}.png"))
}

async fn evaluate_sample(
    gw: &Gateway,
    capture: &dyn PageCapture,
    cfg: &EvalConfig,
    t: &Transition,
) -> Result<SampleRow, EvalError> {
    let mut row = SampleRow {
        transition_id: t.id.clone(),
        app: t.app.to_string(),
        viewport: [t.s_t1.width_px, t.s_t1.height_px],
        render_verdict: None,
        render_failed: true,
        panel: JudgePanelResult::render_failed(),
        similarity: None,
        baseline_similarity: None,
        error: None,
    };
    let pred = match predict_next_state(gw, &cfg.wm, capture, t, &pred_path(cfg, &t.id)).await {
        Ok(p) => p,
        Err(e @ EvalError::Render { .. }) => return Err(e),
        Err(e) => {
            row.error = Some(e.to_string());
            return Ok(row);
        }
    };
    row.render_verdict = pred.render.as_ref().map(|r| r.verdict);
    row.render_failed = pred.render_failed;
    let Some(shot) = pred.screenshot().filter(|_| !pred.render_failed) else {
        return Ok(row);
    };
    let judge_images = async {
        match cfg.judge_max_side {
            None => Ok::<_, crate::trajectory::ImageError>((t.s_t.clone(), shot.clone())),
            Some(side) => {
                let dir = cfg.work_dir.join("judge-inputs");
                let (a, b) = (t.s_t.clone(), shot.clone());
                tokio::task::spawn_blocking(move || Ok((limit_side(&a, side, &dir)?, limit_side(&b, side, &dir)?)))
                    .await
                    .expect("resize task panicked")
            }
        }
    };
    let panel = async {
        let (current, predicted) = match judge_images.await {
            Ok(v) => v,
            Err(e) => return Err(e.to_string()),
        };
        let verdicts = futures::future::join_all(cfg.judges.iter().map(|j| {
            let (current, predicted) = (&current, &predicted);
            async move {
                let v = judge_once(gw, j, t, current, predicted)
                    .await
                    .unwrap_or_else(|e| JudgeVerdict {
                        status: JudgeStatus::Failure,
                        thoughts: format!("judge call failed: {e}"),
                        flagged: true,
                    });
                (j.clone(), v)
            }
        }))
        .await;
        Ok(JudgePanelResult::from_verdicts(verdicts.into_iter().collect()))
    };
    let sim = similarity(gw, shot, &t.s_t1, &cfg.providers);
    let base = similarity(gw, &t.s_t, &t.s_t1, &cfg.providers);
    let (panel, sim, base) = futures::join!(panel, sim, base);
    match panel {
        Ok(p) => row.panel = p,
        Err(e) => row.error = Some(e),
    }
    match sim {
        Ok(s) => row.similarity = Some(s),
        Err(e) => row.error = Some(e.to_string()),
    }
    match base {
        Ok(s) => row.baseline_similarity = Some(s),
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

/// Evaluates `bench` end to end. Per-sample endpoint failures end up in the
/// affected row; configuration problems and a missing browser abort.
pub async fn run_benchmark(
    gw: &Gateway,
    capture: &dyn PageCapture,
    bench: &[Transition],
    cfg: &EvalConfig,
) -> Result<BenchmarkReport, EvalError> {
    if cfg.judges.is_empty() {
        return Err(EvalError::Config("at least one judge is required".into()));
    }
    for id in std::iter::once(&cfg.wm).chain(&cfg.judges) {
        gw.endpoint(id).map_err(|e| EvalError::Config(e.to_string()))?;
    }
    if let Some(p) = cfg.providers.iter().find(|p| !gw.has_embedder(p)) {
        return Err(EvalError::Config(format!("unknown embedding provider `{p}`")));
    }
    let mut rows: Vec<(usize, SampleRow)> = futures::stream::iter(bench.iter().enumerate())
        .map(|(i, t)| async move { evaluate_sample(gw, capture, cfg, t).await.map(|r| (i, r)) })
        .buffer_unordered(cfg.max_in_flight.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect::<Result<_, _>>()?;
    rows.sort_by_key(|(i, _)| *i);
    Ok(BenchmarkReport::from_rows(
        cfg.clone(),
        rows.into_iter().map(|(_, r)| r).collect(),
    ))
}

/// Text table with one row per model and IAcc / Similarity / Render Fail
/// columns per benchmark, plus averages.
pub fn format_table(models: &[(&str, Vec<&BenchmarkReport>)]) -> String {
    let mut benches: Vec<&str> = Vec::new();
    for (_, reports) in models {
        for r in reports {
            if !benches.contains(&r.benchmark.as_str()) {
                benches.push(&r.benchmark);
            }
        }
    }
    let name_w = models.iter().map(|(m, _)| m.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "Model");
    for b in benches.iter().copied().chain(["Average"]) {
        let _ = write!(out, " | {:^26}", b);
    }
    out.push('\n');
    let _ = write!(out, "{:<name_w$}", "");
    for _ in 0..=benches.len() {
        let _ = write!(out, " | {:>7} {:>7} {:>10}", "IAcc", "Sim", "RndrFail");
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + 29 * (benches.len() + 1)));
    out.push('\n');
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.1}"));
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    for (model, reports) in models {
        let _ = write!(out, "{model:<name_w$}");
        let mut acc = (Vec::new(), Vec::new(), Vec::new());
        for b in &benches {
            match reports.iter().find(|r| r.benchmark == *b) {
                Some(r) => {
                    acc.0.push(r.iacc_pct);
                    acc.2.push(r.render_fail_pct);
                    if let Some(s) = r.similarity_pct {
                        acc.1.push(s);
                    }
                    let _ = write!(
                        out,
                        " | {:>7} {:>7} {:>10}",
                        cell(Some(r.iacc_pct)),
                        cell(r.similarity_pct),
                        cell(Some(r.render_fail_pct))
                    );
                }
                None => {
                    let _ = write!(out, " | {:>7} {:>7} {:>10}", "-", "-", "-");
                }
            }
        }
        let _ = write!(
            out,
            " | {:>7} {:>7} {:>10}",
            cell(mean(acc.0)),
            cell(mean(acc.1)),
            cell(mean(acc.2))
        );
        out.push('\n');
    }
    out
}
