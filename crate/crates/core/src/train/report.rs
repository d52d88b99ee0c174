use std::fmt::Write;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plot::{line_chart, Series};
use crate::textfmt::sig17;
use crate::train::TrainConfig;

pub const REPORT_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Wall-clock duration; the only non-deterministic field.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochMetrics>,
    pub saturation_epoch: Option<usize>,
}

impl TrainingReport {
    pub fn val_accuracies(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_accuracy).collect()
    }

    pub fn final_metrics(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.3}",
                e.epoch,
                sig17(e.train_loss),
                sig17(e.val_loss),
                sig17(e.train_accuracy),
                sig17(e.val_accuracy),
                e.seconds
            );
        }
        s
    }

    /// The CSV with the `seconds` column dropped.
    pub fn deterministic_csv(&self) -> String {
        self.to_csv().lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n").collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn loss_chart(&self, title: &str) -> String {
        let pts = |f: fn(&EpochMetrics) -> f64| self.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect();
        line_chart(
            title,
            "epoch",
            "loss",
            &[
                Series { name: "training loss", points: pts(|e| e.train_loss), dashed: false },
                Series { name: "validation loss", points: pts(|e| e.val_loss), dashed: true },
            ],
        )
    }

    pub fn accuracy_chart(&self, title: &str) -> String {
        let pts = |f: fn(&EpochMetrics) -> f64| self.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect();
        line_chart(
            title,
            "epoch",
            "accuracy",
            &[
                Series { name: "training accuracy", points: pts(|e| e.train_accuracy), dashed: false },
                Series { name: "validation accuracy", points: pts(|e| e.val_accuracy), dashed: true },
            ],
        )
    }
}

/// Smallest 1-based epoch `e` such that none of the next `patience` epochs
/// improves the best accuracy so far by at least `delta`.
pub fn detect_saturation(val_accuracy: &[f64], delta: f64, patience: usize) -> Option<usize> {
    assert!(patience >= 1 && delta >= 0.0, "patience >= 1 and delta >= 0");
    let mut best_through = Vec::with_capacity(val_accuracy.len());
    let mut best = f64::NEG_INFINITY;
    for &a in val_accuracy {
        best = best.max(a);
        best_through.push(best);
    }
    (0..val_accuracy.len().saturating_sub(patience)).find_map(|e| {
        let stalled = (e + 1..=e + patience).all(|j| val_accuracy[j] < best_through[j - 1] + delta);
        stalled.then_some(e + 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_examples() {
        let series = [0.5, 0.6, 0.7, 0.8, 0.85, 0.87, 0.878, 0.878, 0.877, 0.878];
        assert_eq!(detect_saturation(&series, 0.001, 3), Some(7));
        assert_eq!(detect_saturation(&[0.1, 0.2, 0.3, 0.4], 0.001, 1), None);
        assert_eq!(detect_saturation(&[0.5; 4], 0.001, 1), Some(1));
        assert_eq!(detect_saturation(&[0.5; 3], 0.0, 3), None);
    }

    #[test]
    fn csv_shape() {
        let report = TrainingReport {
            config: TrainConfig::default(),
            epochs: vec![EpochMetrics { epoch: 1, train_loss: 1.0, val_loss: 1.5, train_accuracy: 0.5, val_accuracy: 0.25, seconds: 2.5 }],
            saturation_epoch: None,
        };
        let csv = report.to_csv();
        assert!(csv.starts_with(REPORT_HEADER));
        assert!(csv.ends_with(",2.500\n"));
        assert_eq!(report.deterministic_csv().lines().nth(1).unwrap().split(',').count(), 5);
        assert_eq!(report.loss_chart("x").matches("<polyline").count(), 2);
    }
}
