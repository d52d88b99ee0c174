//! Direct reference computations, written without the crate's kernels.

use binbrain::data::Image;
use binbrain::Tensor;

pub fn naive_conv(x: &Tensor, k: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Vec<f64> {
    let (&[n, c, h, w], &[o, _, kh, kw]) = (x.shape(), k.shape()) else { panic!() };
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = Vec::new();
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.data()[oi]);
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let sy = (y * stride + i) as isize - pad as isize;
                                let sx = (xx * stride + j) as isize - pad as isize;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    let xv = x.data()[((ni * c + ci) * h + sy as usize) * w + sx as usize];
                                    acc += xv * k.data()[((oi * c + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

pub fn tensor(shape: Vec<usize>, values: &[f64]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, values.iter().cycle().take(n).copied().collect()).unwrap()
}

/// Tent-weighted sum over every source pixel; equal to bilinear interpolation
/// with clamped sample coordinates.
pub fn tent_resample(img: &Image, tw: usize, th: usize) -> Vec<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for y in 0..th {
        let sy = ((y as f64 + 0.5) * h as f64 / th as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        for x in 0..tw {
            let sx = ((x as f64 + 0.5) * w as f64 / tw as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let mut acc = [0.0; 3];
            for j in 0..h {
                let wy = (1.0 - (sy - j as f64).abs()).max(0.0);
                for i in 0..w {
                    let wx = (1.0 - (sx - i as f64).abs()).max(0.0);
                    for c in 0..3 {
                        acc[c] += wx * wy * f64::from(img.pixel(i, j)[c]);
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}

pub fn matmul_triple_loop(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i * k + t] * b[t * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Per-channel population mean and std of `/255` pixel values, std floored at 1e-6.
pub fn stats_brute_force(images: &[Image]) -> ([f64; 3], [f64; 3]) {
    let all: Vec<[u8; 3]> = images.iter().flat_map(|i| i.pixels().to_vec()).collect();
    let n = all.len() as f64;
    let (mut mean, mut std) = ([0.0; 3], [0.0; 3]);
    for c in 0..3 {
        let m = all.iter().map(|p| f64::from(p[c]) / 255.0).sum::<f64>() / n;
        let var = all.iter().map(|p| (f64::from(p[c]) / 255.0 - m).powi(2)).sum::<f64>() / n;
        mean[c] = m;
        std[c] = var.sqrt().max(1e-6);
    }
    (mean, std)
}
