use crate::data::{ChannelStats, Image};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(pixel/255 - mean[c]) / std[c]` in `[3,S,S]` channel-first layout.
pub fn normalize_image(image: &Image, stats: &ChannelStats, size: usize) -> Result<Tensor> {
    if !image.is_square() {
        return Err(Error::NotSquare(image.width(), image.height()));
    }
    if image.width() != size {
        return Err(Error::SizeMismatch { expected: size, actual: image.width() });
    }
    let plane = size * size;
    let mut data = vec![0.0; 3 * plane];
    for (i, p) in image.pixels().iter().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = (f64::from(p[c]) / 255.0 - stats.mean[c]) / stats.std[c];
        }
    }
    Tensor::new(vec![3, size, size], data)
}

/// Inverse of [`normalize_image`]: back to pixel/255 values, same layout.
pub fn denormalize(tensor: &Tensor, stats: &ChannelStats) -> Result<Tensor> {
    let &[3, h, w] = tensor.shape() else {
        return Err(Error::shape(format!("denormalize expects [3,H,W], got {:?}", tensor.shape())));
    };
    let plane = h * w;
    let data = tensor
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v * stats.std[i / plane] + stats.mean[i / plane])
        .collect();
    Tensor::new(vec![3, h, w], data)
}
