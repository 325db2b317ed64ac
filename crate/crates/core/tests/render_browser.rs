use std::sync::Arc;
use std::time::Duration;

use codeworld::gateway::fallback_embedding;
use codeworld::render::{
    Asset, AssetManifest, BrowserPool, PoolConfig, RenderVerdict, Viewport, browser_processes,
    find_browser, render_html,
};

fn browser_available() -> bool {
    match find_browser() {
        Ok(_) => true,
        Err(e) => {
            eprintln!("skipping: {e}");
            false
        }
    }
}

const PAGE: &str = r#"<!DOCTYPE html><html><body style="margin:0;font-family:sans-serif">
<header style="background:#1a73e8;color:white;padding:24px;font-size:32px">Settings</header>
<ul><li>Wi-Fi</li><li>Bluetooth</li><li>Display</li></ul><button>OK</button></body></html>"#;

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn renders_classifies_and_tears_down() {
    if !browser_available() {
        return;
    }
    let mut assets = AssetManifest::default();
    assets.insert(
        "https://cdn.example.test/theme.css",
        Asset {
            content_type: "text/css".into(),
            body: Arc::new(b"body{background:#00ff00}".to_vec()),
        },
        false,
    );
    let pool = BrowserPool::launch(PoolConfig {
        workers: 2,
        nav_timeout: Duration::from_secs(10),
        assets,
        ..PoolConfig::default()
    })
    .await
    .expect("browser launches");
    let marker = pool.process_marker().to_owned();
    assert!(!browser_processes(&marker).is_empty());
    let dir = tempfile::tempdir().unwrap();

    let vp = Viewport::new(360, 640);
    let ok = render_html(&pool, PAGE, vp, &dir.path().join("ok.png")).await.unwrap();
    assert_eq!(ok.verdict, RenderVerdict::Ok);
    let shot = ok.screenshot.clone().unwrap();
    assert_eq!((shot.width_px, shot.height_px), (360, 640));

    let scaled = render_html(&pool, PAGE, Viewport { device_scale: 2.0, ..vp }, &dir.path().join("x2.png"))
        .await
        .unwrap();
    let s2 = scaled.screenshot.unwrap();
    assert_eq!((s2.width_px, s2.height_px), (720, 1280));

    let again = render_html(&pool, PAGE, vp, &dir.path().join("again.png")).await.unwrap();
    let a = fallback_embedding(&shot.decode().unwrap());
    let b = fallback_embedding(&again.screenshot.unwrap().decode().unwrap());
    let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    assert!(cos >= 0.999, "repeat render cosine {cos}");

    let blank = render_html(
        &pool,
        "<html><body style=\"background:#fff\"></body></html><div></div>",
        vp,
        &dir.path().join("blank.png"),
    )
    .await
    .unwrap();
    assert_eq!(blank.verdict, RenderVerdict::BlankRender);

    let prose = render_html(&pool, "Sure! Here is the HTML:", vp, &dir.path().join("p.png"))
        .await
        .unwrap();
    assert_eq!(prose.verdict, RenderVerdict::ParseFail);
    assert!(prose.screenshot.is_none());

    // Vendored stylesheet is served; any other remote fetch is refused quickly.
    let vendored = render_html(
        &pool,
        r#"<html><head><link rel="stylesheet" href="https://cdn.example.test/theme.css">
        <link rel="stylesheet" href="https://unreachable.example.invalid/x.css"></head>
        <body><div style="height:300px;background:#333;color:#fff">styled</div></body></html>"#,
        vp,
        &dir.path().join("v.png"),
    )
    .await
    .unwrap();
    assert_eq!(vendored.verdict, RenderVerdict::Ok);
    assert!(vendored.elapsed_ms < 5000.0);
    let img = vendored.screenshot.unwrap().decode().unwrap().to_rgb8();
    assert_eq!(img.get_pixel(350, 630).0, [0, 255, 0]);

    let fragment = render_html(&pool, "<div style=\"height:200px;background:#c00\">fragment</div>", vp, &dir.path().join("f.png"))
        .await
        .unwrap();
    assert_eq!(fragment.verdict, RenderVerdict::Ok);
    assert!(fragment.wrapped);

    assert_eq!(pool.shutdown().await, 0);
    assert!(browser_processes(&marker).is_empty());
}
