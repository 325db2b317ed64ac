mod common;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use codeworld::bench::{
    Decision, DecisionRecord, DedupCluster, append_decision, apply_adjudication, clusters_with, read_decisions,
};
use codeworld::review::{ClusterPage, DecisionAck, ReviewState, bind};
use codeworld::trajectory::{CanonicalAction, Transition, write_transitions_jsonl};
use serde_json::json;

/// Five two- or three-member clusters over real screenshots.
fn corpus(dir: &Path) -> (Vec<Transition>, Vec<DedupCluster>) {
    let mut ts = Vec::new();
    for g in 0..5u16 {
        for m in 0..(2 + g % 2) {
            let i = ts.len() as u64;
            ts.push(Transition {
                id: format!("g{g}m{m}"),
                app: Arc::from("shop"),
                goal: None,
                lang: Arc::from("en"),
                episode_id: Arc::from(format!("e{g}")),
                step_index: u32::from(m),
                s_t: common::screen(dir, &format!("s{i}"), 90, 160, i),
                action: CanonicalAction::click(50 + 100 * g, 500),
                s_t1: common::screen(dir, &format!("n{i}"), 90, 160, 100 + i),
            });
        }
    }
    ts.push(Transition {
        id: "single".into(),
        ..ts[0].clone()
    });
    ts.last_mut().unwrap().app = Arc::from("other");
    let clusters = clusters_with(&ts, 0.997, |_, _| (1.0, 1.0));
    assert_eq!(clusters.len(), 5);
    (ts, clusters)
}

async fn serve(clusters: Vec<DedupCluster>, decisions: &Path) -> (SocketAddr, tokio::task::JoinHandle<()>) {
    let state = Arc::new(ReviewState::new(clusters, decisions).unwrap());
    let (addr, server) = bind(state, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let handle = tokio::spawn(async move {
        server.await.unwrap();
    });
    (addr, handle)
}

/// The verdicts applied in both the UI and the CLI-equivalent path.
fn plan(clusters: &[DedupCluster]) -> Vec<(String, Decision, Option<String>)> {
    clusters
        .iter()
        .enumerate()
        .map(|(i, c)| match i % 3 {
            0 => (c.cluster_id.clone(), Decision::Duplicates, Some(c.member_transition_ids[1].clone())),
            1 => (c.cluster_id.clone(), Decision::Distinct, None),
            _ => (c.cluster_id.clone(), Decision::Duplicates, None),
        })
        .collect()
}

#[tokio::test]
async fn ui_and_cli_decisions_apply_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (ts, clusters) = corpus(&dir.path().join("img"));
    let ui_log = dir.path().join("ui.jsonl");
    let (addr, server) = serve(clusters.clone(), &ui_log).await;
    let http = reqwest::Client::new();
    let base = format!("http://{addr}");

    let page: ClusterPage = http.get(format!("{base}/api/clusters")).send().await.unwrap().json().await.unwrap();
    assert_eq!(page.total, 5);
    let member = &page.clusters[0].members[0];
    let thumb = member.s_t_thumb.as_ref().expect("thumbnail url");
    let resp = http.get(format!("{base}{thumb}")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let full = http.get(format!("{base}{}", member.s_t_full.as_ref().unwrap())).send().await.unwrap();
    let bytes = full.bytes().await.unwrap();
    assert_eq!(image::load_from_memory(&bytes).unwrap().width(), 90);
    assert_eq!(http.get(format!("{base}/api/images/deadbeef")).send().await.unwrap().status(), 404);
    let index = http.get(&base).send().await.unwrap().text().await.unwrap();
    assert!(index.contains("nothing to review"));

    for (id, decision, rep) in plan(&clusters) {
        let mut body = json!({ "decision": decision });
        if let Some(r) = &rep {
            body["representative"] = json!(r);
        }
        let ack: DecisionAck = http
            .post(format!("{base}/api/clusters/{id}/decision"))
            .json(&body)
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert!(ack.written);
    }
    let pending: ClusterPage = http.get(format!("{base}/api/clusters")).send().await.unwrap().json().await.unwrap();
    assert_eq!(pending.total, 0);
    let all: ClusterPage = http
        .get(format!("{base}/api/clusters?filter=all&page_size=2&page=1"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!((all.total, all.clusters.len()), (5, 2));

    // Invalid requests write nothing.
    let before = std::fs::read(&ui_log).unwrap();
    let bad = http
        .post(format!("{base}/api/clusters/{}/decision", clusters[1].cluster_id))
        .json(&json!({"decision": "duplicates", "representative": "not-a-member"}))
        .send()
        .await
        .unwrap();
    assert_eq!(bad.status(), 422);
    let unknown = http
        .post(format!("{base}/api/clusters/c-ffffffffffff/decision"))
        .json(&json!({"decision": "distinct"}))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown.status(), 404);
    assert_eq!(std::fs::read(&ui_log).unwrap(), before);
    server.abort();

    // Same verdicts through the library path the CLI uses.
    let cli_log = dir.path().join("cli.jsonl");
    for (id, decision, rep) in plan(&clusters) {
        let c = clusters.iter().find(|c| c.cluster_id == id).unwrap();
        let rep = match (decision, rep) {
            (Decision::Duplicates, None) => Some(c.default_representative().to_owned()),
            (_, r) => r,
        };
        assert!(append_decision(&cli_log, &clusters, &DecisionRecord::new(id, decision, rep, "cli")).unwrap());
    }
    let ui = apply_adjudication(&ts, &clusters, &read_decisions(&ui_log).unwrap()).unwrap();
    let cli = apply_adjudication(&ts, &clusters, &read_decisions(&cli_log).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_transitions_jsonl(&a, &ui).unwrap();
    write_transitions_jsonl(&b, &cli).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(ui.len() < ts.len());
}

#[tokio::test]
async fn repeated_decision_is_not_rewritten() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clusters) = corpus(&dir.path().join("img"));
    let log = dir.path().join("d.jsonl");
    let (addr, server) = serve(clusters.clone(), &log).await;
    let url = format!("http://{addr}/api/clusters/{}/decision", clusters[0].cluster_id);
    let http = reqwest::Client::new();
    for expect in [true, false] {
        let ack: DecisionAck = http
            .post(&url)
            .json(&json!({"decision": "distinct", "annotator": "ann"}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(ack.written, expect);
        assert_eq!(ack.record.annotator, "ann");
    }
    assert_eq!(read_decisions(&log).unwrap().len(), 1);
    server.abort();
}
