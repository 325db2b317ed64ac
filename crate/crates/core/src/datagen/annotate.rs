use std::path::Path;

use image::{Rgb, RgbImage};

use crate::trajectory::{
    ActionKind, CanonicalAction, Direction, ImageError, PixelPoint, StateImage, denormalize_in,
};

pub const RED: Rgb<u8> = Rgb([0xFF, 0x00, 0x00]);
pub const YELLOW: Rgb<u8> = Rgb([0xFF, 0xFF, 0x00]);
pub const BLUE: Rgb<u8> = Rgb([0x00, 0x00, 0xFF]);
pub const GREEN: Rgb<u8> = Rgb([0x00, 0xFF, 0x00]);

/// Pixel geometry of a drawn annotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Point { center: PixelPoint, radius: u32 },
    Line { start: PixelPoint, end: PixelPoint },
}

fn min_side(w: u32, h: u32) -> u32 {
    w.min(h)
}

/// Click ring radius: 3% of the shorter side, at least 2 px.
pub fn click_radius(w: u32, h: u32) -> u32 {
    ((f64::from(min_side(w, h)) * 0.03).round() as u32).max(2)
}

fn line_width(w: u32, h: u32) -> f64 {
    (f64::from(min_side(w, h)) * 0.006).round().max(3.0)
}

fn marker_radius(w: u32, h: u32) -> u32 {
    ((f64::from(min_side(w, h)) * 0.015).round() as u32).max(4)
}

/// Geometry for `action` on a `w`x`h` image, or `None` for actions that are
/// not drawn.
pub fn mark_for(action: &CanonicalAction, w: u32, h: u32) -> Option<Mark> {
    match action.kind {
        ActionKind::Click | ActionKind::LongPress | ActionKind::SetText => Some(Mark::Point {
            center: denormalize_in(action.point?, w, h),
            radius: click_radius(w, h),
        }),
        ActionKind::Swipe => Some(Mark::Line {
            start: denormalize_in(action.point?, w, h),
            end: denormalize_in(action.end_point?, w, h),
        }),
        ActionKind::ScrollDirection => {
            let (cx, cy) = (w / 2, h / 2);
            let pt = |x: i64, y: i64| PixelPoint {
                x: x.clamp(0, i64::from(w) - 1) as u32,
                y: y.clamp(0, i64::from(h) - 1) as u32,
            };
            let (cx, cy) = (i64::from(cx), i64::from(cy));
            let half_v = (f64::from(h) * 0.2).round() as i64;
            let half_h = (f64::from(w) * 0.2).round() as i64;
            let (start, end) = match action.direction? {
                Direction::Up => (pt(cx, cy + half_v), pt(cx, cy - half_v)),
                Direction::Down => (pt(cx, cy - half_v), pt(cx, cy + half_v)),
                Direction::Left => (pt(cx + half_h, cy), pt(cx - half_h, cy)),
                Direction::Right => (pt(cx - half_h, cy), pt(cx + half_h, cy)),
            };
            Some(Mark::Line { start, end })
        }
        _ => None,
    }
}

fn fill_disc(img: &mut RgbImage, c: PixelPoint, r: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let ri = r.ceil() as i64;
    for y in (i64::from(c.y) - ri).max(0)..=(i64::from(c.y) + ri).min(i64::from(h) - 1) {
        for x in (i64::from(c.x) - ri).max(0)..=(i64::from(c.x) + ri).min(i64::from(w) - 1) {
            let (dx, dy) = ((x - i64::from(c.x)) as f64, (y - i64::from(c.y)) as f64);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn draw_point(img: &mut RgbImage, c: PixelPoint, radius: u32) {
    let (w, h) = img.dimensions();
    let r = f64::from(radius);
    let ring = (r / 5.0).round().max(2.0);
    let cross = (ring / 2.0).max(1.0);
    let ri = i64::from(radius);
    for y in (i64::from(c.y) - ri).max(0)..=(i64::from(c.y) + ri).min(i64::from(h) - 1) {
        for x in (i64::from(c.x) - ri).max(0)..=(i64::from(c.x) + ri).min(i64::from(w) - 1) {
            let (dx, dy) = ((x - i64::from(c.x)) as f64, (y - i64::from(c.y)) as f64);
            let d = (dx * dx + dy * dy).sqrt();
            let on_ring = d <= r && d > r - ring;
            let on_cross = d <= r && (dx.abs() < cross || dy.abs() < cross);
            if on_ring || on_cross {
                img.put_pixel(x as u32, y as u32, RED);
            }
        }
    }
    fill_disc(img, c, (r / 4.0).max(1.0), YELLOW);
}

fn draw_line(img: &mut RgbImage, a: PixelPoint, b: PixelPoint, width: f64) {
    let (w, h) = img.dimensions();
    let half = width / 2.0;
    let (ax, ay, bx, by) = (f64::from(a.x), f64::from(a.y), f64::from(b.x), f64::from(b.y));
    let (vx, vy) = (bx - ax, by - ay);
    let len2 = vx * vx + vy * vy;
    let pad = half.ceil() as i64;
    let x0 = (i64::from(a.x.min(b.x)) - pad).max(0);
    let x1 = (i64::from(a.x.max(b.x)) + pad).min(i64::from(w) - 1);
    let y0 = (i64::from(a.y.min(b.y)) - pad).max(0);
    let y1 = (i64::from(a.y.max(b.y)) + pad).min(i64::from(h) - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64, y as f64);
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - ax) * vx + (py - ay) * vy) / len2).clamp(0.0, 1.0)
            };
            let (qx, qy) = (ax + t * vx, ay + t * vy);
            if (px - qx).powi(2) + (py - qy).powi(2) <= half * half {
                img.put_pixel(x as u32, y as u32, BLUE);
            }
        }
    }
}

/// Draws the action legend onto a copy of `img`. Returns `None` when the
/// action kind is not drawn.
pub fn annotate_image(img: &RgbImage, action: &CanonicalAction) -> Option<RgbImage> {
    let (w, h) = img.dimensions();
    let mark = mark_for(action, w, h)?;
    let mut out = img.clone();
    match mark {
        Mark::Point { center, radius } => draw_point(&mut out, center, radius),
        Mark::Line { start, end } => {
            draw_line(&mut out, start, end, line_width(w, h));
            let m = f64::from(marker_radius(w, h));
            fill_disc(&mut out, start, m, GREEN);
            fill_disc(&mut out, end, m, RED);
        }
    }
    Some(out)
}

/// File-level annotation. Undrawn actions return `image` itself, so the
/// output is byte-identical to the input.
pub fn annotate_action(image: &StateImage, action: &CanonicalAction, out: &Path) -> Result<StateImage, ImageError> {
    if mark_for(action, image.width_px, image.height_px).is_none() {
        return Ok(image.clone());
    }
    let decoded = image.decode()?.to_rgb8();
    let Some(drawn) = annotate_image(&decoded, action) else {
        return Ok(image.clone());
    };
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).map_err(|source| ImageError::Read {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    drawn.save(out).map_err(|source| ImageError::Decode {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(StateImage::new(out, drawn.width(), drawn.height()))
}
