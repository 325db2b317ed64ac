#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use codeworld::gateway::{ChatProvider, Gateway, ModelEndpoint, PreparedRequest, ProviderError, ResponseCache};
use codeworld::trajectory::{CanonicalAction, Episode, StateImage, Step, Transition, to_transitions};
use image::{Rgb, RgbImage};

/// Writes a `w` x `h` PNG whose layout depends on `seed`: a header bar,
/// a few list rows and a button, all in seed-derived colors.
pub fn screen(dir: &Path, name: &str, w: u32, h: u32, seed: u64) -> StateImage {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        s
    };
    let color = |v: u64| Rgb([(v & 0xFF) as u8, ((v >> 8) & 0xFF) as u8, ((v >> 16) & 0xFF) as u8]);
    let bg = color(next());
    let mut img = RgbImage::from_pixel(w, h, bg);
    let header = color(next());
    let bar = h / 8;
    for y in 0..bar {
        for x in 0..w {
            img.put_pixel(x, y, header);
        }
    }
    let rows = 3 + (next() % 4) as u32;
    for r in 0..rows {
        let c = color(next());
        let top = bar + 10 + r * (h / 12);
        let width = w / 3 + (next() % u64::from(w / 2)) as u32;
        for y in top..(top + h / 24).min(h) {
            for x in 8..(8 + width).min(w) {
                img.put_pixel(x, y, c);
            }
        }
    }
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join(format!("{name}.png"));
    img.save(&path).unwrap();
    StateImage::new(path, w, h)
}

/// Chat provider answering through a closure over the prepared request.
pub struct FnProvider<F>(pub F);

#[async_trait]
impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&PreparedRequest) -> Result<String, ProviderError> + Send + Sync,
{
    async fn complete(&self, _endpoint: &ModelEndpoint, request: &PreparedRequest) -> Result<String, ProviderError> {
        (self.0)(request)
    }
}

pub fn provider<F>(f: F) -> Arc<dyn ChatProvider>
where
    F: Fn(&PreparedRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
{
    Arc::new(FnProvider(f))
}

/// In-memory gateway with the given endpoints and no retry delay.
pub fn gateway(endpoints: Vec<(&str, Arc<dyn ChatProvider>)>) -> Gateway {
    let mut gw = Gateway::new(ResponseCache::memory());
    for (id, p) in endpoints {
        let mut ep = ModelEndpoint::new(id, format!("{id}-model"));
        ep.max_retries = 0;
        ep.retry_base = std::time::Duration::from_millis(1);
        gw.add_endpoint(ep, p);
    }
    gw
}

pub fn episode(dir: &Path, id: &str, app: &str, goal: &str, actions: &[CanonicalAction], seed: u64) -> Episode {
    let steps = actions
        .iter()
        .enumerate()
        .map(|(i, a)| Step {
            image: screen(dir, &format!("{id}-{i}"), 180, 320, seed * 100 + i as u64),
            action: a.clone(),
        })
        .collect();
    Episode {
        episode_id: Arc::from(id),
        app: Arc::from(app),
        goal: Some(Arc::from(goal)),
        lang: Arc::from("en"),
        steps,
    }
}

pub fn transitions(episodes: &[Episode]) -> Vec<Transition> {
    episodes.iter().flat_map(to_transitions).collect()
}
