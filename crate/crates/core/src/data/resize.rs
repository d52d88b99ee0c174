use crate::data::Image;

/// Largest centered square; odd leftovers go to the right/bottom.
pub fn center_crop_square(image: &Image) -> Image {
    let side = image.width().min(image.height());
    let x0 = (image.width() - side) / 2;
    let y0 = (image.height() - side) / 2;
    let pixels = (0..side)
        .flat_map(|y| (0..side).map(move |x| (x, y)))
        .map(|(x, y)| image.pixel(x0 + x, y0 + y))
        .collect();
    Image::new(side, side, pixels).expect("non-empty crop")
}

/// Bilinear sample at continuous pixel coordinates; coordinates outside the
/// image are clamped to the border.
pub fn sample_bilinear(image: &Image, sx: f64, sy: f64) -> [f64; 3] {
    let sx = sx.clamp(0.0, (image.width() - 1) as f64);
    let sy = sy.clamp(0.0, (image.height() - 1) as f64);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let (p00, p10, p01, p11) = (image.pixel(x0, y0), image.pixel(x1, y0), image.pixel(x0, y1), image.pixel(x1, y1));
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Bilinear resample with half-pixel centers: output pixel `x` samples source
/// coordinate `(x + 0.5) * src / dst - 0.5`. Values are unquantized.
pub fn resample_bilinear(image: &Image, width: usize, height: usize) -> Vec<[f64; 3]> {
    let scale_x = image.width() as f64 / width as f64;
    let scale_y = image.height() as f64 / height as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = (y as f64 + 0.5) * scale_y - 0.5;
        for x in 0..width {
            let sx = (x as f64 + 0.5) * scale_x - 0.5;
            out.push(sample_bilinear(image, sx, sy));
        }
    }
    out
}

pub(crate) fn quantize(v: [f64; 3]) -> [u8; 3] {
    v.map(|c| c.round().clamp(0.0, 255.0) as u8)
}

/// Center-crop to a square, then bilinear resample to `target x target`.
pub fn square_resize(image: &Image, target: usize) -> Image {
    assert!(target >= 1, "target size must be positive");
    let square = center_crop_square(image);
    if square.width() == target {
        return square;
    }
    let pixels = resample_bilinear(&square, target, target).into_iter().map(quantize).collect();
    Image::new(target, target, pixels).expect("target is positive")
}
