//! Procedural stand-in for the waste photographs: four visually distinct
//! object types on cluttered backgrounds, with random placement, scale and noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{write_ppm, DatasetManifest, Image, Record, LABELS};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, DOMAIN_SYNTHETIC};

struct Canvas {
    size: usize,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn paint(&mut self, inside: impl Fn(f64, f64) -> Option<([f64; 3], f64)>) {
        for y in 0..self.size {
            for x in 0..self.size {
                if let Some((color, alpha)) = inside(x as f64 + 0.5, y as f64 + 0.5) {
                    let p = &mut self.px[y * self.size + x];
                    for c in 0..3 {
                        p[c] = p[c] * (1.0 - alpha) + color[c] * alpha;
                    }
                }
            }
        }
    }
}

fn background(size: usize, rng: &mut ChaCha8Rng) -> Canvas {
    let base = rng.gen_range(50.0..120.0);
    let tint: [f64; 3] = [rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0)];
    let slope = rng.gen_range(-30.0..30.0);
    let px = (0..size * size)
        .map(|i| {
            let v = base + slope * ((i / size) as f64 / size as f64 - 0.5);
            [v + tint[0], v + tint[1], v + tint[2]]
        })
        .collect();
    Canvas { size, px }
}

fn glass(c: &mut Canvas, cx: f64, cy: f64, r: f64, rng: &mut ChaCha8Rng) {
    let (rx, ry) = (r * 0.55, r);
    let tone = [rng.gen_range(60.0..110.0), rng.gen_range(150.0..200.0), rng.gen_range(95.0..140.0)];
    c.paint(|x, y| {
        let d = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
        (d <= 1.0).then_some((tone, 0.6))
    });
    let hx = cx - rx * 0.4;
    c.paint(|x, y| ((x - hx).abs() < rx * 0.15 && (y - cy).abs() < ry * 0.7).then_some(([235.0, 250.0, 240.0], 0.5)));
}

fn metal(c: &mut Canvas, cx: f64, cy: f64, r: f64, rng: &mut ChaCha8Rng) {
    let (hw, hh) = (r * 0.6, r * 0.9);
    let peak = rng.gen_range(170.0..215.0);
    let period = rng.gen_range(3.0..6.0) * c.size as f64 / 64.0;
    c.paint(|x, y| {
        let (dx, dy) = ((x - cx) / hw, y - cy);
        if dx.abs() > 1.0 || dy.abs() > hh {
            return None;
        }
        let mut g = 70.0 + (peak - 70.0) * (dx * PI / 2.0).cos();
        if (dy + hh) % (2.0 * period) < period * 0.6 {
            g -= 35.0;
        }
        Some(([g, g, g + 8.0], 1.0))
    });
}

fn paper(c: &mut Canvas, cx: f64, cy: f64, r: f64, rng: &mut ChaCha8Rng) {
    let (hw, hh) = (r * 0.9, r * 1.1);
    let sheet = [rng.gen_range(225.0..248.0), rng.gen_range(215.0..238.0), rng.gen_range(180.0..210.0)];
    c.paint(|x, y| ((x - cx).abs() <= hw && (y - cy).abs() <= hh).then_some((sheet, 1.0)));
    let period = (hh * 2.0 / 7.0).max(2.0);
    let lines: Vec<f64> = (0..7).map(|_| rng.gen_range(0.5..1.0)).collect();
    c.paint(|x, y| {
        let (u, v) = (x - (cx - hw * 0.8), y - (cy - hh * 0.85));
        if u < 0.0 || v < 0.0 || v > hh * 1.7 {
            return None;
        }
        let row = (v / period) as usize;
        let on = v % period < period * 0.35 && row < lines.len() && u < hw * 1.6 * lines[row];
        on.then_some(([55.0, 55.0, 70.0], 1.0))
    });
}

fn plastic(c: &mut Canvas, cx: f64, cy: f64, r: f64, rng: &mut ChaCha8Rng) {
    const PALETTE: [[f64; 3]; 4] = [[220.0, 40.0, 40.0], [40.0, 80.0, 225.0], [240.0, 200.0, 30.0], [235.0, 110.0, 20.0]];
    let blobs = rng.gen_range(2..=4);
    for _ in 0..blobs {
        let color = PALETTE[rng.gen_range(0..PALETTE.len())];
        let (bx, by) = (cx + rng.gen_range(-0.5..0.5) * r, cy + rng.gen_range(-0.5..0.5) * r);
        let br = r * rng.gen_range(0.35..0.6);
        c.paint(|x, y| ((x - bx).powi(2) + (y - by).powi(2) <= br * br).then_some((color, 1.0)));
        let (sx, sy, sr) = (bx - br * 0.35, by - br * 0.35, br * 0.18);
        c.paint(|x, y| ((x - sx).powi(2) + (y - sy).powi(2) <= sr * sr).then_some(([255.0; 3], 0.8)));
    }
}

/// Image `index` of class `label`; depends only on `(seed, label, index, size)`.
pub fn render_synthetic(label: usize, index: usize, size: usize, seed: u64) -> Image {
    let mut rng = keyed_rng(seed, &[DOMAIN_SYNTHETIC, label as u64, index as u64]);
    let mut canvas = background(size, &mut rng);
    let s = size as f64;
    let cx = s * (0.5 + rng.gen_range(-0.12..0.12));
    let cy = s * (0.5 + rng.gen_range(-0.12..0.12));
    let r = s * rng.gen_range(0.28..0.40);
    match label {
        0 => glass(&mut canvas, cx, cy, r, &mut rng),
        1 => metal(&mut canvas, cx, cy, r, &mut rng),
        2 => paper(&mut canvas, cx, cy, r, &mut rng),
        _ => plastic(&mut canvas, cx, cy, r, &mut rng),
    }
    let pixels = canvas
        .px
        .iter()
        .map(|p| p.map(|v| (v + rng.gen_range(-12.0..12.0)).round().clamp(0.0, 255.0) as u8))
        .collect();
    Image::new(size, size, pixels).expect("positive size")
}

/// Writes `per_class` P6 images per label under `out_dir/<label>/` plus
/// `out_dir/manifest.csv`, and returns the manifest.
pub fn gen_synthetic(out_dir: impl AsRef<Path>, per_class: usize, size: usize, seed: u64) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    if per_class < 2 || size < 8 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 images per class and size >= 8, got {per_class} and {size}"
        )));
    }
    let mut records = Vec::with_capacity(per_class * LABELS.len());
    for (label, name) in LABELS.iter().enumerate() {
        let dir = out_dir.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::UnwritableDirectory { path: dir.clone(), source: e })?;
        for i in 0..per_class {
            let rel = format!("{name}/{name}_{i:04}.ppm");
            write_ppm(&render_synthetic(label, i, size, seed), out_dir.join(&rel))?;
            records.push(Record { path: rel, label });
        }
    }
    let manifest = DatasetManifest::new(out_dir, records)?;
    manifest.write(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
