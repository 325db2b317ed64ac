use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine;
use base64::engine::general_purpose::STANDARD;
use chromiumoxide::cdp::browser_protocol::emulation::SetDeviceMetricsOverrideParams;
use chromiumoxide::cdp::browser_protocol::fetch::{
    ContinueRequestParams, EnableParams, EventRequestPaused, FailRequestParams,
    FulfillRequestParams, HeaderEntry, RequestPattern,
};
use chromiumoxide::cdp::browser_protocol::network::ErrorReason;
use chromiumoxide::cdp::browser_protocol::page::{CaptureScreenshotFormat, CaptureScreenshotParams};
use chromiumoxide::{Browser, BrowserConfig, Page};
use futures::StreamExt;
use tokio::sync::Semaphore;
use tokio::task::JoinHandle;

use super::{AssetManifest, CaptureError, PageCapture, Viewport};

const BROWSER_NAMES: [&str; 6] = [
    "chromium",
    "chromium-browser",
    "google-chrome",
    "google-chrome-stable",
    "chrome",
    "headless_shell",
];

/// Locates a Chromium-family executable: `$CODEWORLD_CHROME`, then well-known
/// names on `PATH`, then `/tmp/chromium`.
pub fn find_browser() -> Result<PathBuf, String> {
    if let Some(p) = std::env::var_os("CODEWORLD_CHROME") {
        let p = PathBuf::from(p);
        return if p.is_file() {
            Ok(p)
        } else {
            Err(format!("CODEWORLD_CHROME points to missing file {}", p.display()))
        };
    }
    if let Some(path) = std::env::var_os("PATH") {
        for dir in std::env::split_paths(&path) {
            for name in BROWSER_NAMES {
                let c = dir.join(name);
                if c.is_file() {
                    return Ok(c);
                }
            }
        }
    }
    let fallback = Path::new("/tmp/chromium");
    if fallback.is_file() {
        return Ok(fallback.to_path_buf());
    }
    Err("no Chromium executable found (set CODEWORLD_CHROME or run scripts/fetch-chromium.sh)".into())
}

/// Pids of live processes whose command line contains `marker`.
pub fn browser_processes(marker: &str) -> Vec<i32> {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    let me = std::process::id() as i32;
    entries
        .filter_map(|e| e.ok()?.file_name().to_str()?.parse::<i32>().ok())
        .filter(|&pid| pid != me)
        .filter(|pid| {
            std::fs::read(format!("/proc/{pid}/cmdline"))
                .map(|raw| String::from_utf8_lossy(&raw).replace('\0', " ").contains(marker))
                .unwrap_or(false)
        })
        .collect()
}

fn kill_all(pids: &[i32]) {
    for &pid in pids {
        // SAFETY: plain signal delivery to a pid we discovered under /proc.
        unsafe {
            libc::kill(pid, libc::SIGKILL);
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub executable: Option<PathBuf>,
    pub workers: usize,
    pub nav_timeout: Duration,
    pub assets: AssetManifest,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            executable: None,
            workers: 4,
            nav_timeout: Duration::from_secs(10),
            assets: AssetManifest::default(),
        }
    }
}

struct Slot {
    page: Page,
    viewport: Option<Viewport>,
    interceptor: JoinHandle<()>,
}

/// One long-lived headless browser with a fixed set of page sessions.
///
/// Every request a page makes is intercepted: URLs in the asset manifest are
/// answered locally, `data:` URLs pass, everything else is failed.
pub struct BrowserPool {
    browser: tokio::sync::Mutex<Option<Browser>>,
    handler: Mutex<Option<JoinHandle<()>>>,
    slots: Mutex<Vec<Slot>>,
    permits: Semaphore,
    config: PoolConfig,
    marker: String,
    _data_dir: tempfile::TempDir,
}

async fn open_page(browser: &Browser, assets: &AssetManifest) -> Result<Slot, CaptureError> {
    let unavailable = |e: chromiumoxide::error::CdpError| CaptureError::BrowserUnavailable(e.to_string());
    let page = browser.new_page("about:blank").await.map_err(unavailable)?;
    let mut paused = page
        .event_listener::<EventRequestPaused>()
        .await
        .map_err(unavailable)?;
    page.execute(EnableParams {
        patterns: Some(vec![RequestPattern {
            url_pattern: Some("*".into()),
            resource_type: None,
            request_stage: None,
        }]),
        handle_auth_requests: None,
    })
    .await
    .map_err(unavailable)?;
    let p = page.clone();
    let assets = assets.clone();
    let interceptor = tokio::spawn(async move {
        while let Some(ev) = paused.next().await {
            let url = ev.request.url.as_str();
            let id = ev.request_id.clone();
            let outcome = if let Some(asset) = assets.lookup(url) {
                let mut f = FulfillRequestParams::new(id, 200);
                f.response_headers = Some(vec![
                    HeaderEntry::new("Content-Type", asset.content_type.clone()),
                    HeaderEntry::new("Access-Control-Allow-Origin", "*"),
                ]);
                f.body = Some(STANDARD.encode(asset.body.as_slice()).into());
                p.execute(f).await.map(|_| ())
            } else if url.starts_with("data:") || url.starts_with("about:") {
                p.execute(ContinueRequestParams::new(id)).await.map(|_| ())
            } else {
                tracing::debug!(url, "blocked network request during render");
                p.execute(FailRequestParams::new(id, ErrorReason::BlockedByClient))
                    .await
                    .map(|_| ())
            };
            if let Err(e) = outcome {
                tracing::debug!(error = %e, "interception reply failed");
            }
        }
    });
    Ok(Slot {
        page,
        viewport: None,
        interceptor,
    })
}

impl BrowserPool {
    pub async fn launch(config: PoolConfig) -> Result<Self, CaptureError> {
        let exe = match &config.executable {
            Some(p) => p.clone(),
            None => find_browser().map_err(CaptureError::BrowserUnavailable)?,
        };
        let data_dir = tempfile::Builder::new()
            .prefix("codeworld-chrome-")
            .tempdir()
            .map_err(|e| CaptureError::BrowserUnavailable(e.to_string()))?;
        let marker = data_dir.path().to_string_lossy().into_owned();
        let bc = BrowserConfig::builder()
            .chrome_executable(&exe)
            .user_data_dir(data_dir.path())
            .no_sandbox()
            .viewport(None)
            .arg("--headless=new")
            .arg("--disable-gpu")
            .arg("--hide-scrollbars")
            .arg("--mute-audio")
            .arg("--font-render-hinting=none")
            .request_timeout(config.nav_timeout + Duration::from_secs(5))
            .build()
            .map_err(CaptureError::BrowserUnavailable)?;
        let (browser, mut handler) = Browser::launch(bc)
            .await
            .map_err(|e| CaptureError::BrowserUnavailable(format!("{}: {e}", exe.display())))?;
        let handler_task = tokio::spawn(async move {
            while let Some(ev) = handler.next().await {
                if let Err(e) = ev {
                    tracing::trace!(error = %e, "cdp handler");
                }
            }
        });
        let workers = config.workers.max(1);
        let mut slots = Vec::with_capacity(workers);
        for _ in 0..workers {
            slots.push(open_page(&browser, &config.assets).await?);
        }
        Ok(Self {
            browser: tokio::sync::Mutex::new(Some(browser)),
            handler: Mutex::new(Some(handler_task)),
            slots: Mutex::new(slots),
            permits: Semaphore::new(workers),
            config,
            marker,
            _data_dir: data_dir,
        })
    }

    /// Substring identifying this pool's browser processes.
    pub fn process_marker(&self) -> &str {
        &self.marker
    }

    pub fn workers(&self) -> usize {
        self.config.workers.max(1)
    }

    async fn replace_slot(&self, old: Slot) -> Result<Slot, CaptureError> {
        old.interceptor.abort();
        let _ = old.page.close().await;
        let guard = self.browser.lock().await;
        let browser = guard
            .as_ref()
            .ok_or_else(|| CaptureError::BrowserUnavailable("pool is shut down".into()))?;
        open_page(browser, &self.config.assets).await
    }

    async fn capture_in(&self, slot: &mut Slot, document: &str, viewport: Viewport) -> Result<Vec<u8>, CaptureError> {
        let nav = |e: chromiumoxide::error::CdpError| CaptureError::Navigation(e.to_string());
        if slot.viewport != Some(viewport) {
            slot.page
                .execute(SetDeviceMetricsOverrideParams::new(
                    i64::from(viewport.width_px),
                    i64::from(viewport.height_px),
                    viewport.device_scale,
                    true,
                ))
                .await
                .map_err(nav)?;
            slot.viewport = Some(viewport);
        }
        match tokio::time::timeout(self.config.nav_timeout, slot.page.set_content(document)).await {
            Err(_) => return Err(CaptureError::Timeout(self.config.nav_timeout)),
            Ok(Err(e)) => return Err(nav(e)),
            Ok(Ok(_)) => {}
        }
        let shot = slot
            .page
            .execute(
                CaptureScreenshotParams::builder()
                    .format(CaptureScreenshotFormat::Png)
                    .build(),
            )
            .await
            .map_err(nav)?;
        let b64: &str = shot.data.as_ref();
        STANDARD
            .decode(b64)
            .map_err(|e| CaptureError::Navigation(format!("bad screenshot payload: {e}")))
    }

    /// Closes the browser and waits for every process it spawned to exit,
    /// killing stragglers. Returns the number of processes still alive.
    pub async fn shutdown(&self) -> usize {
        for slot in self.slots.lock().expect("poisoned").drain(..) {
            slot.interceptor.abort();
        }
        if let Some(mut browser) = self.browser.lock().await.take() {
            let _ = tokio::time::timeout(Duration::from_secs(5), browser.close()).await;
            if tokio::time::timeout(Duration::from_secs(5), browser.wait()).await.is_err() {
                let _ = browser.kill().await;
            }
        }
        if let Some(h) = self.handler.lock().expect("poisoned").take() {
            h.abort();
        }
        let deadline = Instant::now() + Duration::from_secs(3);
        while Instant::now() < deadline {
            if browser_processes(&self.marker).is_empty() {
                return 0;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        kill_all(&browser_processes(&self.marker));
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            let left = browser_processes(&self.marker).len();
            if left == 0 || Instant::now() >= deadline {
                return left;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }
}

impl Drop for BrowserPool {
    fn drop(&mut self) {
        if let Some(h) = self.handler.get_mut().expect("poisoned").take() {
            h.abort();
        }
        kill_all(&browser_processes(&self.marker));
    }
}

#[async_trait]
impl PageCapture for BrowserPool {
    async fn capture(&self, document: &str, viewport: Viewport) -> Result<Vec<u8>, CaptureError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let mut slot = self
            .slots
            .lock()
            .expect("poisoned")
            .pop()
            .ok_or_else(|| CaptureError::BrowserUnavailable("pool is shut down".into()))?;
        let result = self.capture_in(&mut slot, document, viewport).await;
        let slot = match &result {
            Err(CaptureError::Timeout(_)) => self.replace_slot(slot).await?,
            _ => slot,
        };
        self.slots.lock().expect("poisoned").push(slot);
        result
    }
}
