use std::fmt::Write;

use crate::error::{Error, Result};
use crate::plot::heat_grid;

/// Counts with rows = true label, columns = predicted label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: &[String]) -> Self {
        ConfusionMatrix { labels: labels.to_vec(), counts: vec![vec![0; labels.len()]; labels.len()] }
    }

    pub fn from_counts(labels: &[String], counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::shape(format!("{} labels need a square count table", labels.len())));
        }
        Ok(ConfusionMatrix { labels: labels.to_vec(), counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    /// Cell-wise sum; accumulation order never matters.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        let pct = row_normalize(self)?;
        let mut s = format!("kind,true,{}\n", self.labels.join(","));
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "count,{},{}", self.labels[i], cells.join(","));
        }
        for (i, row) in pct.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:.1}")).collect();
            let _ = writeln!(s, "percent,{},{}", self.labels[i], cells.join(","));
        }
        Ok(s)
    }

    pub fn to_svg(&self, title: &str) -> Result<String> {
        let pct = row_normalize(self)?;
        let labels: Vec<Vec<String>> = pct
            .iter()
            .zip(&self.counts)
            .map(|(p, c)| p.iter().zip(c).map(|(p, c)| format!("{p:.1}% ({c})")).collect())
            .collect();
        Ok(heat_grid(title, &self.labels, &self.labels, &pct, &labels))
    }
}

/// Row percentages `100 * count / row_total`, rounded half-up to one decimal
/// in exact integer arithmetic.
pub fn row_normalize(cm: &ConfusionMatrix) -> Result<Vec<Vec<f64>>> {
    cm.counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::EmptyRow(i));
            }
            Ok(row.iter().map(|&c| ((2000 * c + total) / (2 * total)) as f64 / 10.0).collect())
        })
        .collect()
}
