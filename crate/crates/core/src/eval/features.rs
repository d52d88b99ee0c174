use std::fs;
use std::path::{Path, PathBuf};

use crate::data::encode_pgm;
use crate::error::{Error, Result};
use crate::model::{FeatureSelector, Layer, Model};
use crate::tensor::Tensor;

/// Activations captured at one selector for one image.
#[derive(Debug, Clone)]
pub struct FeatureMapSet {
    pub selector: FeatureSelector,
    /// Path of the layer whose output was captured.
    pub layer: String,
    /// `[C,H,W]`.
    pub activation: Tensor,
    /// Per-channel min-max normalized copies, each `H*W` values in `[0,1]`.
    pub normalized: Vec<Vec<f64>>,
}

impl FeatureMapSet {
    pub fn channels(&self) -> usize {
        self.activation.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.activation.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.activation.shape()[2]
    }

    /// Tiles laid out on a near-square grid with a one-pixel mid-gray gutter.
    pub fn montage(&self) -> (usize, usize, Vec<u8>) {
        let c = self.channels();
        let cols = (c as f64).sqrt().ceil() as usize;
        let rows = c.div_ceil(cols);
        let (h, w) = (self.height(), self.width());
        let (mw, mh) = (cols * (w + 1) - 1, rows * (h + 1) - 1);
        let mut img = vec![128u8; mw * mh];
        for (k, map) in self.normalized.iter().enumerate() {
            let (r, q) = (k / cols, k % cols);
            for y in 0..h {
                for x in 0..w {
                    img[(r * (h + 1) + y) * mw + q * (w + 1) + x] = to_gray(map[y * w + x]);
                }
            }
        }
        (mw, mh, img)
    }

    /// Writes one P5 tile per channel and a montage; returns the files written.
    pub fn write_pgm(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::UnwritableDirectory { path: dir.into(), source: e })?;
        let name = self.selector.name();
        let mut written = Vec::new();
        let mut write = |path: PathBuf, bytes: Vec<u8>| {
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok::<_, Error>(())
        };
        for (k, map) in self.normalized.iter().enumerate() {
            let gray: Vec<u8> = map.iter().map(|&v| to_gray(v)).collect();
            write(dir.join(format!("{name}_c{k:03}.pgm")), encode_pgm(self.width(), self.height(), &gray))?;
        }
        let (mw, mh, img) = self.montage();
        write(dir.join(format!("{name}_montage.pgm")), encode_pgm(mw, mh, &img))?;
        Ok(written)
    }
}

fn to_gray(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Min-max scaling to `[0,1]`; constant channels map to all zeros.
pub fn normalize_channel(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn tap_layer_name(model: &Model, index: usize) -> String {
    match &model.backbone()[index] {
        Layer::Block(b) => b.name.clone(),
        _ => model.backbone()[..index]
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv { name, .. } | Layer::BatchNorm { name, .. } => Some(name.clone()),
                Layer::Block(b) => Some(b.name.clone()),
                _ => None,
            })
            .map_or_else(|| "input".to_string(), |n| format!("{n}.relu")),
    }
}

/// Eval-mode activations at `selector` for one normalized `[3,S,S]` image.
pub fn extract_feature_maps(model: &Model, image: &Tensor, selector: FeatureSelector) -> Result<FeatureMapSet> {
    let s = model.input_size();
    if image.shape() != [3, s, s] {
        return Err(Error::shape(format!("feature maps need a [3,{s},{s}] image, got {:?}", image.shape())));
    }
    let (g, pass) = model.forward_eval(image.reshape(vec![1, 3, s, s])?)?;
    let var = pass
        .taps
        .iter()
        .find(|(sel, _)| *sel == selector)
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::UnknownSelector(selector.name().to_string()))?;
    let act = g.value(var);
    let [_, c, h, w] = *act.shape() else {
        return Err(Error::shape(format!("tap {} is not a feature map: {:?}", selector.name(), act.shape())));
    };
    let activation = act.reshape(vec![c, h, w])?;
    let normalized = activation.data().chunks(h * w).map(normalize_channel).collect();
    let index = model.taps.iter().find(|(sel, _)| *sel == selector).map_or(0, |t| t.1);
    Ok(FeatureMapSet { selector, layer: tap_layer_name(model, index), activation, normalized })
}
