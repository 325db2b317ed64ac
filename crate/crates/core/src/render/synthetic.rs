use std::io::Cursor;

use async_trait::async_trait;
use image::{ImageFormat, Rgb, RgbImage};
use sha2::{Digest, Sha256};

use super::{CaptureError, PageCapture, Viewport};

/// Browserless stand-in: paints eight horizontal bands whose colors are
/// derived from the document hash. Same document, same pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticCapture;

pub fn synthetic_png(document: &str, viewport: Viewport) -> Vec<u8> {
    let digest = Sha256::digest(document.as_bytes());
    let (w, h) = viewport.capture_size();
    let band = h.div_ceil(8).max(1);
    let img = RgbImage::from_fn(w, h, |_, y| {
        let i = ((y / band) as usize).min(7);
        let c = &digest[i * 3..i * 3 + 3];
        Rgb([c[0], c[1], c[2].wrapping_add(i as u8 * 31)])
    });
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory png encode");
    out
}

#[async_trait]
impl PageCapture for SyntheticCapture {
    async fn capture(&self, document: &str, viewport: Viewport) -> Result<Vec<u8>, CaptureError> {
        Ok(synthetic_png(document, viewport))
    }
}
