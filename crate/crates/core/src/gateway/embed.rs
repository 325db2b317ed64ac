use async_trait::async_trait;
use image::DynamicImage;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("cannot decode image: {0}")]
    ImageDecode(String),
    #[error("malformed embedding: {0}")]
    Malformed(String),
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    /// Embeds encoded image bytes. The result need not be normalized.
    async fn embed(&self, image_bytes: &[u8]) -> Result<Vec<f64>, EmbedError>;
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, EmbedError> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::Malformed("empty or non-finite vector".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbedError::Malformed("zero vector".into()));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Side of the grayscale grid used by [`fallback_embedding`].
pub const FALLBACK_SIDE: usize = 32;

/// Deterministic layout descriptor used when no learned embedding model is
/// available.
///
/// Pixels are converted to gray `(0.299 R + 0.587 G + 0.114 B) / 255` and
/// averaged into a 32x32 grid, pixel `(x, y)` falling in cell
/// `(floor(32 y / h), floor(32 x / w))`. Cells that receive no pixel (images
/// smaller than 32 on a side) take the value of pixel
/// `(floor(j w / 32), floor(i h / 32))`. The grid is mean-centered and scaled
/// to unit length. A constant image yields the uniform vector `±1/32`, positive
/// when its gray level is at least 0.5.
pub fn fallback_embedding(img: &DynamicImage) -> Vec<f64> {
    const S: usize = FALLBACK_SIDE;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return vec![-1.0 / S as f64; S * S];
    }
    let gray = |x: usize, y: usize| {
        let p = rgb.get_pixel(x as u32, y as u32).0;
        (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0
    };
    let mut sums = vec![0.0f64; S * S];
    let mut counts = vec![0u32; S * S];
    let col_of: Vec<usize> = (0..w).map(|x| x * S / w).collect();
    for y in 0..h {
        let row = y * S / h;
        for (x, &col) in col_of.iter().enumerate() {
            sums[row * S + col] += gray(x, y);
            counts[row * S + col] += 1;
        }
    }
    let mut cells: Vec<f64> = (0..S * S)
        .map(|c| {
            if counts[c] > 0 {
                sums[c] / f64::from(counts[c])
            } else {
                let (i, j) = (c / S, c % S);
                gray(j * w / S, i * h / S)
            }
        })
        .collect();
    let mean = cells.iter().sum::<f64>() / (S * S) as f64;
    for v in &mut cells {
        *v -= mean;
    }
    let norm = cells.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-9 {
        let sign = if mean >= 0.5 { 1.0 } else { -1.0 };
        return vec![sign / S as f64; S * S];
    }
    for v in &mut cells {
        *v /= norm;
    }
    cells
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackEmbedder;

#[async_trait]
impl EmbeddingProvider for FallbackEmbedder {
    async fn embed(&self, image_bytes: &[u8]) -> Result<Vec<f64>, EmbedError> {
        let bytes = image_bytes.to_vec();
        tokio::task::spawn_blocking(move || {
            let img = image::load_from_memory(&bytes)
                .map_err(|e| EmbedError::ImageDecode(e.to_string()))?;
            Ok(fallback_embedding(&img))
        })
        .await
        .map_err(|e| EmbedError::ProviderUnavailable(e.to_string()))?
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn solid(w: u32, h: u32, v: u8) -> DynamicImage {
        DynamicImage::ImageRgb8(RgbImage::from_pixel(w, h, Rgb([v, v, v])))
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn identical_images_have_unit_similarity() {
        let mut img = RgbImage::from_pixel(90, 200, Rgb([255, 255, 255]));
        for y in 20..60 {
            for x in 10..80 {
                img.put_pixel(x, y, Rgb([0, 0, 200]));
            }
        }
        let e = fallback_embedding(&DynamicImage::ImageRgb8(img));
        assert_eq!(e.len(), 1024);
        assert!((dot(&e, &e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn black_and_white_are_opposite() {
        let b = fallback_embedding(&solid(64, 64, 0));
        let w = fallback_embedding(&solid(64, 64, 255));
        assert!((dot(&b, &w) + 1.0).abs() < 1e-12);
        assert!((dot(&w, &fallback_embedding(&solid(10, 7, 200))) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_images_fill_every_cell() {
        let mut img = RgbImage::from_pixel(3, 5, Rgb([0, 0, 0]));
        img.put_pixel(2, 4, Rgb([255, 255, 255]));
        let e = fallback_embedding(&DynamicImage::ImageRgb8(img));
        assert!((dot(&e, &e) - 1.0).abs() < 1e-12);
        assert!(e.iter().all(|v| v.is_finite()));
    }
}
