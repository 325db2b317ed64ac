use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use codeworld::trajectory::{CanonicalAction, StateImage, Transition, read_transitions_jsonl, write_transitions_jsonl};
use image::{Rgb, RgbImage};

fn codeworld(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_codeworld")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "codeworld {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Solid screen with a seed-colored header band.
fn screen(dir: &Path, name: &str, seed: u8) -> StateImage {
    let mut img = RgbImage::from_pixel(60, 100, Rgb([240, 240, 240]));
    for y in 0..(10 + u32::from(seed) * 7) {
        for x in 0..60 {
            img.put_pixel(x, y, Rgb([seed.wrapping_mul(53), 90, 255 - seed.wrapping_mul(31)]));
        }
    }
    let path = dir.join(format!("{name}.png"));
    img.save(&path).unwrap();
    StateImage::new(path, 60, 100)
}

/// Four transitions: two exact repeats, one with other screens, one elsewhere.
fn corpus(dir: &Path) -> Vec<Transition> {
    let t = |id: &str, s: u8, x: u16| Transition {
        id: id.into(),
        app: Arc::from("notes"),
        goal: None,
        lang: Arc::from("en"),
        episode_id: Arc::from("e"),
        step_index: 0,
        s_t: screen(dir, &format!("{id}-a"), s),
        action: CanonicalAction::click(x, 500),
        s_t1: screen(dir, &format!("{id}-b"), s + 1),
    };
    vec![t("t1", 1, 500), t("t2", 1, 505), t("t3", 5, 500), t("t4", 1, 900)]
}

#[test]
fn bench_dedup_decide_apply_sample() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let input = root.join("transitions.jsonl");
    write_transitions_jsonl(&input, &corpus(root)).unwrap();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();

    let report = codeworld(&["bench", "dedup", "--in", &p("transitions.jsonl"), "--clusters", &p("clusters.jsonl")]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&report)).unwrap();
    assert_eq!(report["clusters"], 1, "{report}");
    let cluster: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(p("clusters.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    let id = cluster["cluster_id"].as_str().unwrap();
    assert_eq!(cluster["member_transition_ids"], serde_json::json!(["t1", "t2"]));

    let (clusters, decisions) = (p("clusters.jsonl"), p("decisions.jsonl"));
    let decide = |rep: &str| {
        let args = [
            "bench", "decide", "--clusters", &clusters, "--decisions", &decisions, "--cluster", id, "--decision",
            "duplicates", "--representative", rep,
        ];
        stdout(&codeworld(&args))
    };
    assert_eq!(decide("t2").trim(), "recorded");
    assert_eq!(decide("t2").trim(), "unchanged");
    let bad = Command::new(env!("CARGO_BIN_EXE_codeworld"))
        .args(["bench", "decide", "--clusters", &p("clusters.jsonl"), "--decisions", &p("decisions.jsonl")])
        .args(["--cluster", id, "--decision", "duplicates", "--representative", "t9"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert_eq!(std::fs::read_to_string(p("decisions.jsonl")).unwrap().lines().count(), 1);

    let applied = codeworld(&[
        "bench",
        "apply",
        "--in",
        &p("transitions.jsonl"),
        "--clusters",
        &p("clusters.jsonl"),
        "--decisions",
        &p("decisions.jsonl"),
        "--out",
        &p("kept.jsonl"),
    ]);
    assert_eq!(stdout(&applied).trim(), "4 -> 3 transitions");
    let kept: Vec<String> = read_transitions_jsonl(&root.join("kept.jsonl")).unwrap().into_iter().map(|t| t.id).collect();
    assert_eq!(kept, ["t2", "t3", "t4"]);

    let sample = |seed: &str, out: &str| {
        codeworld(&["bench", "sample", "--in", &p("kept.jsonl"), "--n", "2", "--seed", seed, "--out", &p(out)]);
        std::fs::read(p(out)).unwrap()
    };
    assert_eq!(sample("3", "s1.jsonl"), sample("3", "s2.jsonl"));
    assert_eq!(read_transitions_jsonl(&root.join("s1.jsonl")).unwrap().len(), 2);
    let too_many = Command::new(env!("CARGO_BIN_EXE_codeworld"))
        .args(["bench", "sample", "--in", &p("kept.jsonl"), "--n", "4", "--out", &p("s3.jsonl")])
        .output()
        .unwrap();
    assert!(!too_many.status.success());
}

#[test]
fn analyze_scaling_and_pareto() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.json");
    let points: Vec<(f64, f64)> = [1e3, 4e3, 16e3, 64e3].iter().map(|&n: &f64| (n, 2.0 * n.powf(0.3))).collect();
    std::fs::write(&runs, serde_json::json!({ "series": [{ "name": "wm", "points": points }] }).to_string()).unwrap();
    let out_dir = dir.path().join("plots");
    let out = codeworld(&["analyze", "scaling", "--runs", runs.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let fit = &v["fits"][0]["fit"];
    assert!((fit["a"].as_f64().unwrap() - 2.0).abs() < 1e-9, "{v}");
    assert!((fit["b"].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert!(std::fs::read_to_string(out_dir.join("scaling.svg")).unwrap().starts_with("<svg"));

    let csv = dir.path().join("points.csv");
    std::fs::write(&csv, "name,size,score\nsmall,2,40\nmid,8,70\nbloated,30,60\nbig,70,75\n").unwrap();
    let out = codeworld(&["analyze", "pareto", "--points", csv.to_str().unwrap()]);
    assert_eq!(stdout(&out), "small,2,40\nmid,8,70\nbig,70,75\n");
}

#[test]
fn eval_with_scripted_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_transitions_jsonl(&root.join("bench.jsonl"), &corpus(root)).unwrap();
    std::fs::write(
        root.join("wm.toml"),
        "default = \"Next State Reasoning: r.\\n\\nHTML: <html><body><h1>Next</h1></body></html>\"\n",
    )
    .unwrap();
    std::fs::write(root.join("judge.toml"), "default = '{\"Thoughts\": \"t\", \"Status\": \"success\"}'\n").unwrap();
    std::fs::write(
        root.join("gateway.toml"),
        "cache_dir = \"cache\"\n\
         [[endpoint]]\nid = \"wm\"\nkind = \"mock\"\nscript = \"wm.toml\"\n\
         [[endpoint]]\nid = \"judge\"\nkind = \"mock\"\nscript = \"judge.toml\"\n",
    )
    .unwrap();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let out = codeworld(&[
        "--config",
        &p("gateway.toml"),
        "eval",
        "--bench",
        &p("bench.jsonl"),
        "--wm",
        "wm",
        "--judges",
        "judge",
        "--out",
        &p("report.json"),
        "--work-dir",
        &p("work"),
        "--renderer",
        "synthetic",
    ]);
    assert!(stdout(&out).lines().any(|l| l.starts_with("wm") && l.contains("100.0")), "{}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 4);
    assert_eq!(report["iacc_pct"], 100.0);
    assert!(root.join("cache").is_dir());
}

#[test]
fn review_serves_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_transitions_jsonl(&root.join("t.jsonl"), &corpus(root)).unwrap();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    codeworld(&["bench", "dedup", "--in", &p("t.jsonl"), "--clusters", &p("clusters.jsonl")]);

    let mut child = Command::new(env!("CARGO_BIN_EXE_codeworld"))
        .args(["review", "--clusters", &p("clusters.jsonl"), "--decisions", &p("d.jsonl"), "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server announces its address").unwrap();
        if let Some(rest) = line.strip_prefix("review UI at http://") {
            break rest.trim_end_matches('/').to_owned();
        }
    };
    let get = |path: &str| {
        let mut s = TcpStream::connect(&addr).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
        let mut body = String::new();
        s.read_to_string(&mut body).unwrap();
        body
    };
    let clusters = get("/api/clusters");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(clusters.starts_with("HTTP/1.1 200"), "{clusters}");
    assert!(clusters.contains("\"total\":1"));
    assert!(clusters.contains("\"t1\""));
}
