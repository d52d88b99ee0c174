//! Accuracy, confusion matrices, per-sample prediction records and feature maps.

mod confusion;
mod features;

use std::fmt::Write;
use std::fs;
use std::path::Path;

pub use confusion::{row_normalize, ConfusionMatrix};
pub use features::{extract_feature_maps, normalize_channel, FeatureMapSet};

use crate::data::{ChannelStats, Dataset};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::textfmt::sig17;

pub const RECORDS_HEADER: &str = "path,true,predicted,confidence";

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub path: String,
    pub truth: usize,
    pub predicted: usize,
    /// Largest class probability.
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub records: Vec<PredictionRecord>,
}

impl Evaluation {
    pub fn records_csv(&self) -> String {
        let labels = self.confusion.labels();
        let mut s = format!("{RECORDS_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.path, labels[r.truth], labels[r.predicted], sig17(r.confidence));
        }
        s
    }

    pub fn misclassified(&self) -> impl Iterator<Item = &PredictionRecord> {
        self.records.iter().filter(|r| r.truth != r.predicted)
    }

    /// Writes `confusion.csv`, `confusion.svg` and `predictions.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("confusion.csv", self.confusion.to_csv()?)?;
        put("confusion.svg", self.confusion.to_svg("Confusion matrix (row %)")?)?;
        put("predictions.csv", self.records_csv())
    }
}

/// Eval-mode log-probabilities for every sample, in dataset order.
pub fn predict_log_probs(model: &Model, data: &Dataset, stats: &ChannelStats, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let k = model.num_classes();
    let mut out = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk, stats, None)?;
        let lp = model.predict(x)?;
        out.extend(lp.data().chunks(k).map(<[f64]>::to_vec));
    }
    Ok(out)
}

pub fn evaluate(model: &Model, data: &Dataset, stats: &ChannelStats, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = model.num_classes();
    if let Some(s) = data.samples.iter().find(|s| s.label >= k) {
        return Err(Error::TargetOutOfRange { target: s.label, classes: k });
    }
    let mut confusion = ConfusionMatrix::new(model.labels());
    let mut records = Vec::with_capacity(data.len());
    for (row, s) in predict_log_probs(model, data, stats, batch_size)?.iter().zip(&data.samples) {
        let predicted = argmax(row);
        confusion.record(s.label, predicted);
        records.push(PredictionRecord { path: s.path.clone(), truth: s.label, predicted, confidence: row[predicted].exp() });
    }
    Ok(Evaluation { accuracy: confusion.accuracy(), confusion, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }
}
