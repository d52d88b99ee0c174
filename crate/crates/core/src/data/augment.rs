use rand::Rng;

use crate::data::resize::quantize;
use crate::data::{sample_bilinear, Image};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, DOMAIN_AUGMENT};

/// Zoom, padded random crop and horizontal flip, applied in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub horizontal_flip_prob: f64,
    pub crop_padding: usize,
    pub zoom_range: (f64, f64),
    pub seed: u64,
}

impl AugmentPolicy {
    /// Leaves every image unchanged.
    pub fn identity(seed: u64) -> Self {
        AugmentPolicy { horizontal_flip_prob: 0.0, crop_padding: 0, zoom_range: (1.0, 1.0), seed }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.zoom_range;
        if !(0.0..=1.0).contains(&self.horizontal_flip_prob) || !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("augment policy {self:?}")));
        }
        Ok(())
    }
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy { horizontal_flip_prob: 0.5, crop_padding: 4, zoom_range: (0.9, 1.1), seed: 0 }
    }
}

pub fn horizontal_flip(image: &Image) -> Image {
    let w = image.width();
    let pixels = (0..image.height())
        .flat_map(|y| (0..w).rev().map(move |x| (x, y)))
        .map(|(x, y)| image.pixel(x, y))
        .collect();
    Image::new(w, image.height(), pixels).expect("same dimensions")
}

/// Scales by `u` about the center and crops back to the original size.
fn zoom(image: &Image, u: f64) -> Image {
    let s = image.width() as f64;
    let half = s / 2.0;
    let mut out = image.clone();
    for y in 0..image.height() {
        let sy = (y as f64 + 0.5 - half) / u + half - 0.5;
        for x in 0..image.width() {
            let sx = (x as f64 + 0.5 - half) / u + half - 0.5;
            out.set_pixel(x, y, quantize(sample_bilinear(image, sx, sy)));
        }
    }
    out
}

fn pad_crop(image: &Image, padding: usize, ox: usize, oy: usize) -> Image {
    let (w, h) = (image.width(), image.height());
    let clamp = |v: usize, hi: usize| v.saturating_sub(padding).min(hi - 1);
    let pixels = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| image.pixel(clamp(x + ox, w), clamp(y + oy, h)))
        .collect();
    Image::new(w, h, pixels).expect("same dimensions")
}

/// Deterministic in `(policy.seed, index)`: the same pair always yields the same image.
pub fn augment(image: &Image, policy: &AugmentPolicy, index: u64) -> Image {
    let mut rng = keyed_rng(policy.seed, &[DOMAIN_AUGMENT, index]);
    let (lo, hi) = policy.zoom_range;
    let u = lo + (hi - lo) * rng.gen::<f64>();
    let p = policy.crop_padding;
    let ox = rng.gen_range(0..=2 * p);
    let oy = rng.gen_range(0..=2 * p);
    let flip = rng.gen::<f64>() < policy.horizontal_flip_prob;

    let mut out = if u == 1.0 { image.clone() } else { zoom(image, u) };
    if p > 0 {
        out = pad_crop(&out, p, ox, oy);
    }
    if flip {
        out = horizontal_flip(&out);
    }
    out
}
