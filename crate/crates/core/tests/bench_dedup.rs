mod common;

use std::sync::Arc;

use chrono::{Duration, Utc};
use codeworld::bench::{
    BenchError, Decision, DecisionRecord, DedupConfig, append_decision, apply_adjudication, cluster_id_for,
    clusters_with, dropped_ids, find_duplicate_clusters, read_clusters, read_decisions, resolve_decisions,
    sample_split, write_clusters,
};
use codeworld::trajectory::{CanonicalAction, StateImage, Transition};
use proptest::prelude::*;

fn t(id: &str, app: &str, action: CanonicalAction, s_t: StateImage, s_t1: StateImage) -> Transition {
    Transition {
        id: id.into(),
        app: Arc::from(app),
        goal: None,
        lang: Arc::from("en"),
        episode_id: Arc::from("e"),
        step_index: 0,
        s_t,
        action,
        s_t1,
    }
}

fn dummy(n: usize, groups: usize) -> Vec<Transition> {
    let img = StateImage::new("/dev/null", 1, 1);
    (0..n)
        .map(|i| {
            let action = CanonicalAction::click(25 + 50 * (i % groups) as u16, 25);
            t(&format!("x{i:03}"), "app", action, img.clone(), img.clone())
        })
        .collect()
}

#[tokio::test]
async fn identical_screens_cluster_with_the_fallback_embedder() {
    let dir = tempfile::tempdir().unwrap();
    let a = common::screen(dir.path(), "a", 90, 160, 1);
    let a1 = common::screen(dir.path(), "a1", 90, 160, 2);
    let b = common::screen(dir.path(), "b", 90, 160, 3);
    let b1 = common::screen(dir.path(), "b1", 90, 160, 4);
    let copy = dir.path().join("a-copy.png");
    std::fs::copy(a.path(), &copy).unwrap();
    let a_copy = StateImage::new(copy, 90, 160);
    let click = CanonicalAction::click(500, 500);
    let ts = vec![
        t("t1", "mail", click.clone(), a.clone(), a1.clone()),
        t("t2", "mail", CanonicalAction::click(510, 520), a_copy, a1.clone()),
        t("t3", "mail", click.clone(), b.clone(), b1.clone()),
        // Same screens, different app: never compared.
        t("t4", "maps", click.clone(), a.clone(), a1.clone()),
        // Same screens, different action cell.
        t("t5", "mail", CanonicalAction::click(900, 900), a.clone(), a1.clone()),
    ];
    let gw = common::gateway(vec![]);
    let found = find_duplicate_clusters(&gw, &ts, &DedupConfig::default()).await.unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].member_transition_ids, vec!["t1", "t2"]);
    assert_eq!(found[0].pairwise_evidence.len(), 1);
    assert!(found[0].pairwise_evidence[0].sim_st > 0.9999);
    assert_eq!(found[0].group_key.signature, "click@10,10");

    let bad = DedupConfig {
        threshold: 1.5,
        ..DedupConfig::default()
    };
    assert!(matches!(
        find_duplicate_clusters(&gw, &ts, &bad).await,
        Err(BenchError::InvalidThreshold(_))
    ));

    let path = dir.path().join("clusters.jsonl");
    write_clusters(&path, &found).unwrap();
    assert_eq!(read_clusters(&path).unwrap(), found);
}

#[test]
fn threshold_is_strict() {
    let ts = dummy(2, 1);
    assert!(clusters_with(&ts, 0.997, |_, _| (0.997, 0.999)).is_empty());
    assert_eq!(clusters_with(&ts, 0.997, |_, _| (0.9971, 0.999)).len(), 1);
}

#[test]
fn decisions_resolve_latest_then_last() {
    let now = Utc::now();
    let mut a = DecisionRecord::new("c", Decision::Distinct, None, "x");
    a.timestamp = now;
    let mut b = DecisionRecord::new("c", Decision::Duplicates, Some("m".into()), "y");
    b.timestamp = now - Duration::seconds(5);
    let mut c = DecisionRecord::new("c", Decision::Pending, None, "z");
    c.timestamp = now;
    assert_eq!(resolve_decisions(&[a.clone(), b.clone()])["c"].decision, Decision::Distinct);
    assert_eq!(resolve_decisions(&[b.clone(), a.clone()])["c"].decision, Decision::Distinct);
    assert_eq!(resolve_decisions(&[a.clone(), c.clone()])["c"].decision, Decision::Pending);
    assert_eq!(resolve_decisions(&[c, a])["c"].decision, Decision::Distinct);
}

#[test]
fn decisions_log_validates_and_skips_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let ts = dummy(6, 2);
    let clusters = clusters_with(&ts, 0.9, |_, _| (1.0, 1.0));
    assert_eq!(clusters.len(), 2);
    let path = dir.path().join("decisions.jsonl");
    assert!(read_decisions(&path).unwrap().is_empty());
    let c0 = &clusters[0];
    let rep = c0.member_transition_ids[1].clone();
    let dup = DecisionRecord::new(&c0.cluster_id, Decision::Duplicates, Some(rep.clone()), "a");
    assert!(append_decision(&path, &clusters, &dup).unwrap());
    assert!(!append_decision(&path, &clusters, &DecisionRecord::new(&c0.cluster_id, Decision::Duplicates, Some(rep.clone()), "b")).unwrap());
    let bad = DecisionRecord::new(&c0.cluster_id, Decision::Duplicates, Some("nobody".into()), "a");
    assert!(matches!(append_decision(&path, &clusters, &bad), Err(BenchError::InvalidRepresentative { .. })));
    let unknown = DecisionRecord::new("c-000000000000", Decision::Distinct, None, "a");
    assert!(matches!(append_decision(&path, &clusters, &unknown), Err(BenchError::UnknownCluster(_))));
    assert_eq!(read_decisions(&path).unwrap().len(), 1);

    let kept = apply_adjudication(&ts, &clusters, &read_decisions(&path).unwrap()).unwrap();
    assert_eq!(kept.len(), 6 - 2);
    assert!(kept.iter().any(|t| t.id == rep));
    let dropped = dropped_ids(&clusters, &read_decisions(&path).unwrap()).unwrap();
    assert_eq!(dropped.len(), 2);
    assert!(!dropped.contains(&rep));
}

#[test]
fn split_sampling_is_seeded() {
    let items: Vec<u32> = (0..1000).collect();
    let a = sample_split(&items, 500, 7).unwrap();
    assert_eq!(a, sample_split(&items, 500, 7).unwrap());
    assert_ne!(a, sample_split(&items, 500, 8).unwrap());
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert!(matches!(
        sample_split(&items, 1001, 7),
        Err(BenchError::NotEnoughSamples { requested: 1001, available: 1000 })
    ));
}

proptest! {
    #[test]
    fn clusters_ignore_input_order(
        sims in prop::collection::vec((0.95f64..1.0, 0.95f64..1.0), 66),
        seed in any::<u64>()
    ) {
        let ts = dummy(12, 3);
        let sim = |i: usize, j: usize| {
            let (a, b) = (i.min(j), i.max(j));
            sims[a * 12 + b - (a + 1) * (a + 2) / 2]
        };
        let base = clusters_with(&ts, 0.98, |i, j| sim(i, j));
        let mut perm: Vec<usize> = (0..12).collect();
        let mut s = seed | 1;
        for k in (1..12).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            perm.swap(k, (s % (k as u64 + 1)) as usize);
        }
        let shuffled: Vec<Transition> = perm.iter().map(|&k| ts[k].clone()).collect();
        let again = clusters_with(&shuffled, 0.98, |i, j| sim(perm[i], perm[j]));
        let ids = |cs: &[codeworld::bench::DedupCluster]| {
            cs.iter().map(|c| (c.cluster_id.clone(), c.member_transition_ids.clone(), c.pairwise_evidence.len())).collect::<Vec<_>>()
        };
        prop_assert_eq!(ids(&base), ids(&again));
    }

    #[test]
    fn cluster_ids_are_order_free(mut members in prop::collection::vec("[a-f0-9]{6}", 2..8)) {
        let a = cluster_id_for(&members);
        members.reverse();
        prop_assert_eq!(a.clone(), cluster_id_for(&members));
        prop_assert!(a.starts_with("c-") && a.len() == 14);
    }
}
