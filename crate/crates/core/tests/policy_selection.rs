mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use codeworld::gateway::PreparedRequest;
use codeworld::policy::{
    Judgement, PolicyConfig, PolicyError, PolicyMode, PolicySample, SelectionRule, ValueVerdict, gen_alternatives,
    run_policy_eval, select_by_value,
};
use codeworld::trajectory::{CanonicalAction, action_prompt_text};
use proptest::prelude::*;

fn sample(dir: &std::path::Path) -> PolicySample {
    PolicySample {
        id: "s".into(),
        s_t: common::screen(dir, "s", 90, 160, 3),
        gt_action: CanonicalAction::click(500, 300),
        goal: "open settings".into(),
        history: vec!["TAP home".into()],
    }
}

fn alts_reply(a: &CanonicalAction, b: &CanonicalAction) -> String {
    format!(
        "{{\"1\": {{\"Reason\": \"a\", \"Action\": {}}}, \"2\": {{\"Reason\": \"b\", \"Action\": {}}}}}",
        action_prompt_text(a),
        action_prompt_text(b)
    )
}

#[tokio::test]
async fn duplicate_alternatives_are_resampled_once() {
    let dir = tempfile::tempdir().unwrap();
    let s = sample(dir.path());
    let gw = common::gateway(vec![(
        "p",
        common::provider(|r: &PreparedRequest| {
            Ok(if r.temperature == 0.0 {
                alts_reply(&CanonicalAction::click(505, 310), &CanonicalAction::click(100, 100))
            } else {
                alts_reply(&CanonicalAction::click(800, 800), &CanonicalAction::click(100, 100))
            })
        }),
    )]);
    let alts = gen_alternatives(&gw, "p", &s, 3, 0.2).await.unwrap();
    assert_eq!(alts[0].action, CanonicalAction::click(800, 800));
    assert_eq!(gw.network_calls("p"), 2);
}

#[tokio::test]
async fn short_and_long_alternative_lists() {
    let dir = tempfile::tempdir().unwrap();
    let s = sample(dir.path());
    let one = common::gateway(vec![(
        "p",
        common::provider(|_| Ok("{\"1\": {\"Reason\": \"a\", \"Action\": {\"action_type\": \"HOME\"}}}".into())),
    )]);
    assert!(matches!(
        gen_alternatives(&one, "p", &s, 3, 0.2).await,
        Err(PolicyError::ParseCount { expected: 2, found: 1 })
    ));
    let many = common::gateway(vec![(
        "p",
        common::provider(|_| {
            Ok(r#"{"1": {"Reason": "a", "Action": {"action_type": "HOME"}}, "2": {"Reason": "b", "Action": {"action_type": "BACK"}}, "3": {"Reason": "c", "Action": {"action_type": "WAIT"}}}"#.into())
        }),
    )]);
    assert_eq!(gen_alternatives(&many, "p", &s, 3, 0.2).await.unwrap().len(), 2);
    assert!(matches!(gen_alternatives(&many, "p", &s, 1, 0.2).await, Err(PolicyError::InvalidK(1))));
}

#[tokio::test]
async fn shuffled_presentation_maps_back_to_the_set() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<PolicySample> = (0..6)
        .map(|i| PolicySample {
            id: format!("s{i}"),
            ..sample(dir.path())
        })
        .collect();
    let gt = action_prompt_text(&CanonicalAction::click(500, 300));
    let gw = common::gateway(vec![(
        "p",
        common::provider(move |r: &PreparedRequest| {
            let text = r.prompt_text();
            if text.contains("suggest alternative actions") {
                return Ok(alts_reply(&CanonicalAction::click(900, 900), &CanonicalAction::click(100, 900)));
            }
            // Always pick whichever shown slot holds the ground truth.
            let slot = text
                .lines()
                .find_map(|l| {
                    let (n, rest) = l.split_once(". ")?;
                    rest.starts_with(&gt).then(|| n.trim().to_owned())
                })
                .expect("ground truth shown");
            Ok(format!("Reason: r\nBest: {slot}"))
        }),
    )]);
    let mut cfg = PolicyConfig::new("p", PolicyMode::Oracle, dir.path());
    cfg.shuffle = Some(11);
    let report = run_policy_eval(&gw, None, &samples, &cfg).await.unwrap();
    assert_eq!(report.accuracy_pct, 100.0);
    assert!(report.rows.iter().all(|r| r.shown_order.is_some()));
    assert!(report.rows.iter().any(|r| r.shown_order.as_deref() != Some(&[1, 2, 3][..])));
}

#[tokio::test]
async fn with_wm_requires_a_world_model_and_renderer() {
    let dir = tempfile::tempdir().unwrap();
    let gw = common::gateway(vec![("p", common::provider(|_| Ok(String::new())))]);
    let cfg = PolicyConfig::new("p", PolicyMode::ValueWithWm, dir.path());
    assert!(matches!(run_policy_eval(&gw, None, &[], &cfg).await, Err(PolicyError::Config(_))));
}

#[tokio::test]
async fn failed_generation_counts_as_incorrect() {
    let dir = tempfile::tempdir().unwrap();
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let gw = common::gateway(vec![(
        "p",
        common::provider(move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            Ok("no idea".into())
        }),
    )]);
    let cfg = PolicyConfig::new("p", PolicyMode::ValueNoWm, dir.path());
    let report = run_policy_eval(&gw, None, &[sample(dir.path())], &cfg).await.unwrap();
    assert_eq!((report.correct, report.errors, report.flagged), (0, 1, 1));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

fn arb_verdicts() -> impl Strategy<Value = Vec<ValueVerdict>> {
    prop::collection::vec((any::<bool>(), 1u8..=10), 1..6).prop_map(|v| {
        v.into_iter()
            .map(|(valid, c)| ValueVerdict {
                judgement: if valid { Judgement::Valid } else { Judgement::Invalid },
                confidence: f64::from(c) / 10.0,
                reason: String::new(),
                flagged: false,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn selection_is_invariant_to_downscaling(verdicts in arb_verdicts(), factor in 0.01f64..=1.0) {
        let scaled: Vec<ValueVerdict> = verdicts
            .iter()
            .map(|v| ValueVerdict { confidence: (v.confidence * factor).clamp(0.0, 1.0), ..v.clone() })
            .collect();
        prop_assert_eq!(select_by_value(&verdicts), select_by_value(&scaled));
    }

    #[test]
    fn selection_follows_the_rule(verdicts in arb_verdicts()) {
        let (i, rule) = select_by_value(&verdicts).unwrap();
        let valid: Vec<usize> = (0..verdicts.len()).filter(|&k| verdicts[k].judgement == Judgement::Valid).collect();
        let pool: Vec<usize> = if valid.is_empty() { (0..verdicts.len()).collect() } else { valid.clone() };
        let best = pool.iter().map(|&k| verdicts[k].confidence).fold(f64::MIN, f64::max);
        let first = pool.iter().copied().find(|&k| verdicts[k].confidence == best).unwrap();
        prop_assert_eq!(i, first);
        prop_assert_eq!(rule, if valid.is_empty() { SelectionRule::ArgmaxAllInvalid } else { SelectionRule::ArgmaxValid });
    }
}
