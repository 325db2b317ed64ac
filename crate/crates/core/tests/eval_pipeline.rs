mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use codeworld::eval::{
    BenchmarkReport, EvalConfig, EvalError, JudgeStatus, JudgeVerdict, aggregate_iacc, format_table,
    parse_judge_output, run_benchmark,
};
use codeworld::gateway::{PreparedRequest, ProviderError};
use codeworld::render::{RenderVerdict, SyntheticCapture};
use codeworld::trajectory::{CanonicalAction, Transition};
use proptest::prelude::*;

const WM_OK: &str = "Next State Reasoning: ok.\n\nHTML: <html><body><h2>Next</h2></body></html>";

fn bench(dir: &std::path::Path, n: usize) -> Vec<Transition> {
    (0..n)
        .map(|i| Transition {
            id: format!("b{i}"),
            app: Arc::from("clock"),
            goal: None,
            lang: Arc::from("en"),
            episode_id: Arc::from("e"),
            step_index: i as u32,
            s_t: common::screen(dir, &format!("s{i}"), 120, 200, i as u64 + 1),
            action: CanonicalAction::click(100 + 10 * i as u16, 300),
            s_t1: common::screen(dir, &format!("n{i}"), 120, 200, i as u64 + 50),
        })
        .collect()
}

fn judge(status: &'static str) -> Arc<dyn codeworld::gateway::ChatProvider> {
    common::provider(move |_| Ok(format!("{{\"Thoughts\": \"t\", \"Status\": \"{status}\"}}")))
}

#[tokio::test]
async fn endpoint_errors_stay_in_their_row() {
    let dir = tempfile::tempdir().unwrap();
    let ts = bench(dir.path(), 3);
    let gw = common::gateway(vec![
        (
            "wm",
            common::provider(|r: &PreparedRequest| {
                if r.prompt_text().contains("\"x\":110") {
                    Err(ProviderError::Fatal("boom".into()))
                } else {
                    Ok(WM_OK.into())
                }
            }),
        ),
        ("good", judge("success")),
        ("down", common::provider(|_| Err(ProviderError::Fatal("judge down".into())))),
    ]);
    let cfg = EvalConfig::new("wm", vec!["good".into(), "down".into()], vec!["fallback".into()], dir.path());
    let r = run_benchmark(&gw, &SyntheticCapture, &ts, &cfg).await.unwrap();
    assert_eq!((r.samples, r.evaluated), (3, 2));
    assert!(r.rows[1].error.as_deref().unwrap().contains("boom"));
    // Judge failures count as flagged failures.
    assert_eq!(r.flagged_judgements, 2);
    assert!((r.iacc_pct - 50.0).abs() < 1e-12);
    assert_eq!(r.per_judge_success_pct["good"], 100.0);
    assert_eq!(r.per_judge_success_pct["down"], 0.0);
    let row = &r.rows[0];
    assert_eq!(row.render_verdict, Some(RenderVerdict::Ok));
    assert_eq!(row.viewport, [120, 200]);
    let sim = row.similarity.as_ref().unwrap();
    assert!(sim.mean > -1.0 && sim.mean <= 1.0);
    assert!(row.baseline_similarity.is_some());
    assert!(r.similarity_pct.is_some());
}

#[tokio::test]
async fn configuration_problems_abort() {
    let dir = tempfile::tempdir().unwrap();
    let ts = bench(dir.path(), 1);
    let gw = common::gateway(vec![("wm", common::provider(|_| Ok(WM_OK.into()))), ("j", judge("success"))]);
    let no_judges = EvalConfig::new("wm", vec![], vec![], dir.path());
    assert!(matches!(run_benchmark(&gw, &SyntheticCapture, &ts, &no_judges).await, Err(EvalError::Config(_))));
    let bad_judge = EvalConfig::new("wm", vec!["nope".into()], vec![], dir.path());
    assert!(matches!(run_benchmark(&gw, &SyntheticCapture, &ts, &bad_judge).await, Err(EvalError::Config(_))));
    let bad_embedder = EvalConfig::new("wm", vec!["j".into()], vec!["clip".into()], dir.path());
    assert!(matches!(run_benchmark(&gw, &SyntheticCapture, &ts, &bad_embedder).await, Err(EvalError::Config(_))));
}

#[tokio::test]
async fn judge_images_are_downscaled_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let ts = bench(dir.path(), 1);
    let sizes = Arc::new(std::sync::Mutex::new(Vec::new()));
    let log = sizes.clone();
    let gw = common::gateway(vec![
        ("wm", common::provider(|_| Ok(WM_OK.into()))),
        (
            "j",
            common::provider(move |r: &PreparedRequest| {
                for p in &r.parts {
                    if let codeworld::gateway::PreparedPart::Image { bytes, .. } = p {
                        let img = image::load_from_memory(bytes).unwrap();
                        log.lock().unwrap().push((img.width(), img.height()));
                    }
                }
                Ok("{\"Thoughts\": \"\", \"Status\": \"success\"}".into())
            }),
        ),
    ]);
    let mut cfg = EvalConfig::new("wm", vec!["j".into()], vec![], dir.path());
    cfg.judge_max_side = Some(100);
    let r = run_benchmark(&gw, &SyntheticCapture, &ts, &cfg).await.unwrap();
    assert_eq!(r.iacc_pct, 100.0);
    assert_eq!(*sizes.lock().unwrap(), vec![(60, 100), (60, 100)]);
}

#[test]
fn judge_output_parsing() {
    let ok = parse_judge_output("```json\n{\"Thoughts\": \"fine\", \"Status\": \"Success\"}\n```");
    assert_eq!((ok.status, ok.flagged), (JudgeStatus::Success, false));
    let odd = parse_judge_output("{\"Thoughts\": \"x\", \"Status\": \"maybe\"}");
    assert_eq!((odd.status, odd.flagged), (JudgeStatus::Failure, true));
    let prose = parse_judge_output("looks right to me");
    assert_eq!((prose.status, prose.flagged), (JudgeStatus::Failure, true));
}

#[test]
fn table_has_a_row_per_model() {
    let cfg = EvalConfig::new("wm", vec!["j".into()], vec![], "/tmp");
    let mut a = BenchmarkReport::from_rows(cfg.clone(), vec![]);
    a.benchmark = "KApps".into();
    a.iacc_pct = 41.5;
    let mut b = a.clone();
    b.benchmark = "AitW".into();
    b.iacc_pct = 60.0;
    let t = format_table(&[("model-a", vec![&a, &b]), ("model-b", vec![&b])]);
    assert!(t.contains("KApps") && t.contains("AitW") && t.contains("Average"));
    assert!(t.lines().any(|l| l.starts_with("model-a") && l.contains("41.5") && l.contains("50.8")));
    assert!(t.lines().any(|l| l.starts_with("model-b")));
}

proptest! {
    #[test]
    fn iacc_ignores_judge_order(statuses in prop::collection::vec(any::<bool>(), 1..7), rot in 0usize..7) {
        let panel: Vec<JudgeStatus> = statuses
            .iter()
            .map(|&s| if s { JudgeStatus::Success } else { JudgeStatus::Failure })
            .collect();
        let mut rotated = panel.clone();
        rotated.rotate_left(rot % panel.len());
        let mut reversed = panel.clone();
        reversed.reverse();
        let base = aggregate_iacc(&panel, false);
        prop_assert_eq!(base, aggregate_iacc(&rotated, false));
        prop_assert_eq!(base, aggregate_iacc(&reversed, false));
        let ok = statuses.iter().filter(|s| **s).count();
        prop_assert_eq!(base, ok as f64 / statuses.len() as f64);
        prop_assert_eq!(aggregate_iacc(&panel, true), 0.0);
    }

    #[test]
    fn panel_result_ignores_insertion_order(statuses in prop::collection::vec(any::<bool>(), 1..6)) {
        let verdict = |s: bool| JudgeVerdict {
            status: if s { JudgeStatus::Success } else { JudgeStatus::Failure },
            thoughts: String::new(),
            flagged: false,
        };
        let forward: BTreeMap<String, JudgeVerdict> =
            statuses.iter().enumerate().map(|(i, &s)| (format!("j{i}"), verdict(s))).collect();
        let backward: BTreeMap<String, JudgeVerdict> =
            statuses.iter().enumerate().rev().map(|(i, &s)| (format!("j{i}"), verdict(s))).collect();
        let a = codeworld::eval::JudgePanelResult::from_verdicts(forward);
        let b = codeworld::eval::JudgePanelResult::from_verdicts(backward);
        prop_assert_eq!(a, b);
    }
}
