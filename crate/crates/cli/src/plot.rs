//! Static PNG charts drawn directly into an RGB buffer. There is no text;
//! series order and colours are listed in the run manifest instead.

use image::{Rgb, RgbImage};

pub const PALETTE: [[u8; 3]; 6] =
    [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];

const MARGIN: i64 = 24;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRIDLINE: Rgb<u8> = Rgb([225, 225, 225]);

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn fill(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    for y in y0.min(y1)..=y0.max(y1) {
        for x in x0.min(x1)..=x0.max(x1) {
            put(img, x, y, c);
        }
    }
}

fn frame(w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, BG);
    let (w, h) = (w as i64, h as i64);
    for k in 1..5 {
        let y = MARGIN + (h - 2 * MARGIN) * k / 5;
        line(&mut img, (MARGIN, y), (w - MARGIN, y), GRIDLINE);
    }
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), AXIS);
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), AXIS);
    img
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    Some(if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) })
}

/// One polyline per series over a shared y range; x is the sample index.
pub fn line_chart(series: &[Vec<f64>], w: u32, h: u32) -> RgbImage {
    let mut img = frame(w, h);
    let Some((lo, hi)) = finite_range(series.iter().flatten().copied()) else {
        return img;
    };
    let (pw, ph) = ((w as i64 - 2 * MARGIN) as f64, (h as i64 - 2 * MARGIN) as f64);
    for (k, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[k % PALETTE.len()]);
        let n = s.len().max(2) - 1;
        let pts: Vec<Option<(i64, i64)>> = s
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.is_finite().then(|| {
                    let x = MARGIN + (pw * i as f64 / n as f64).round() as i64;
                    let y = h as i64 - MARGIN - (ph * (v - lo) / (hi - lo)).round() as i64;
                    (x, y)
                })
            })
            .collect();
        for pair in pts.windows(2) {
            if let (Some(a), Some(b)) = (pair[0], pair[1]) {
                line(&mut img, a, b, c);
            }
        }
    }
    img
}

/// Grouped bars: one panel per metric, one bar per label inside each
/// panel, heights scaled to the panel's own maximum.
pub fn bar_chart(rows: &[Vec<f64>], metrics: usize, w: u32, h: u32) -> RgbImage {
    let mut img = frame(w, h);
    if rows.is_empty() || metrics == 0 {
        return img;
    }
    let plot_w = w as i64 - 2 * MARGIN;
    let ph = (h as i64 - 2 * MARGIN) as f64;
    let panel = plot_w / metrics as i64;
    let bar = (panel - 8) / rows.len() as i64;
    for m in 0..metrics {
        let top = rows.iter().map(|r| r[m].abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
        for (k, r) in rows.iter().enumerate() {
            let v = r[m];
            if !v.is_finite() || top == 0.0 {
                continue;
            }
            let x0 = MARGIN + m as i64 * panel + 4 + k as i64 * bar;
            let y1 = h as i64 - MARGIN - 1;
            let y0 = y1 - (ph * v.abs() / top).round() as i64;
            fill(&mut img, x0 + 1, y0, x0 + bar - 1, y1, Rgb(PALETTE[k % PALETTE.len()]));
        }
    }
    img
}

fn diverging(v: f64) -> Rgb<u8> {
    let t = v.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
    if t >= 0.0 {
        Rgb([255, fade(t), fade(t)])
    } else {
        Rgb([fade(-t), fade(-t), 255])
    }
}

/// Heatmap tiles laid out on a `rows × cols` grid; every tile is a
/// row-major `th × tw` block of values, coloured on one symmetric scale.
pub fn tile_grid(tiles: &[Vec<f64>], rows: usize, cols: usize, th: usize, tw: usize, zoom: u32) -> RgbImage {
    let gap = 4u32;
    let w = cols as u32 * (tw as u32 * zoom + gap) + gap;
    let h = rows as u32 * (th as u32 * zoom + gap) + gap;
    let mut img = RgbImage::from_pixel(w.max(1), h.max(1), Rgb([128, 128, 128]));
    let scale = tiles.iter().flatten().map(|v| v.abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for (k, tile) in tiles.iter().enumerate().take(rows * cols) {
        let (r, c) = (k / cols, k % cols);
        let ox = gap + c as u32 * (tw as u32 * zoom + gap);
        let oy = gap + r as u32 * (th as u32 * zoom + gap);
        for (i, v) in tile.iter().enumerate().take(th * tw) {
            let (y, x) = (i / tw, i % tw);
            let col = diverging(v / scale);
            for dy in 0..zoom {
                for dx in 0..zoom {
                    img.put_pixel(ox + x as u32 * zoom + dx, oy + y as u32 * zoom + dy, col);
                }
            }
        }
    }
    img
}
