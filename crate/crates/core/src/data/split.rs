use rand::seq::SliceRandom;

use crate::data::{DatasetManifest, LABELS};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, DOMAIN_SPLIT};

/// Stratified split: each label's records are permuted with a stream keyed by
/// `(seed, label)` and the first `floor(fraction * n)` go to training.
pub fn split_dataset(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (label, name) in LABELS.iter().enumerate() {
        let mut records: Vec<_> = manifest.records.iter().filter(|r| r.label == label).cloned().collect();
        if records.is_empty() {
            continue;
        }
        records.shuffle(&mut keyed_rng(seed, &[DOMAIN_SPLIT, label as u64]));
        // the epsilon keeps e.g. 0.8 * 5 from flooring to 3
        let n_train = (train_fraction * records.len() as f64 + 1e-9).floor() as usize;
        if n_train == 0 {
            return Err(Error::LabelTooSmall((*name).to_string()));
        }
        val.extend(records.split_off(n_train));
        train.extend(records);
    }
    let part = |records| DatasetManifest { root: manifest.root.clone(), records };
    Ok((part(train), part(val)))
}
