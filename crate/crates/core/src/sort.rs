//! Routing classifier outputs to bin compartments, with confidence gating.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::data::{decode_image, label_index, normalize_image, square_resize, ChannelStats, LABELS};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::textfmt::sig17;

pub const REJECT: usize = 0;
pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DECISION_LOG_HEADER: &str = "item,label,compartment,confidence,biodegradable";
const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RouterConfig {
    pub threshold: f64,
    /// Compartment (1..=4) for each label index.
    pub compartments: [usize; 4],
    pub biodegradable: [bool; 4],
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig { threshold: DEFAULT_THRESHOLD, compartments: [1, 2, 3, 4], biodegradable: [false, false, true, false] }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 4];
        for &c in &self.compartments {
            if !(1..=4).contains(&c) || std::mem::replace(&mut seen[c - 1], true) {
                return Err(Error::InvalidArgument(format!("compartment map {:?} is not a bijection onto 1..4", self.compartments)));
            }
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::InvalidArgument(format!("threshold {}", self.threshold)));
        }
        Ok(())
    }

    /// Parses `glass:1,metal:2,paper:3,plastic:4`.
    pub fn parse_compartments(text: &str) -> Result<[usize; 4]> {
        let mut map = [0; 4];
        for part in text.split(',') {
            let (label, c) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("expected label:compartment, got {part:?}")))?;
            let i = label_index(label.trim()).ok_or_else(|| unknown_label(label.trim()))?;
            map[i] = c.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad compartment {c:?}")))?;
        }
        Ok(map)
    }

    /// Parses a comma-separated list of biodegradable labels; the rest are not.
    pub fn parse_biodegradable(text: &str) -> Result<[bool; 4]> {
        let mut flags = [false; 4];
        for label in text.split(',').map(str::trim).filter(|l| !l.is_empty()) {
            flags[label_index(label).ok_or_else(|| unknown_label(label))?] = true;
        }
        Ok(flags)
    }
}

fn unknown_label(label: &str) -> Error {
    Error::UnknownLabel { path: PathBuf::new(), line: 0, label: label.to_string() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortDecision {
    pub label: Option<usize>,
    /// 0 means reject / manual sorting.
    pub compartment: usize,
    pub confidence: f64,
    pub biodegradable: Option<bool>,
}

impl SortDecision {
    fn rejected(confidence: f64) -> Self {
        SortDecision { label: None, compartment: REJECT, confidence, biodegradable: None }
    }
}

/// The argmax label (lowest index on ties) when its probability reaches the
/// threshold, otherwise a reject.
pub fn route(probabilities: &[f64], config: &RouterConfig) -> Result<SortDecision> {
    if probabilities.len() != LABELS.len() || probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!("{probabilities:?}")));
    }
    let sum: f64 = probabilities.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
    }
    let best = crate::eval::argmax(probabilities);
    let confidence = probabilities[best];
    if confidence < config.threshold {
        return Ok(SortDecision::rejected(confidence));
    }
    Ok(SortDecision {
        label: Some(best),
        compartment: config.compartments[best],
        confidence,
        biodegradable: Some(config.biodegradable[best]),
    })
}

/// Default grouping: only paper is biodegradable.
pub fn biodegradability(label: &str) -> Result<bool> {
    let i = label_index(label).ok_or_else(|| unknown_label(label))?;
    Ok(RouterConfig::default().biodegradable[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamEntry {
    pub item: String,
    pub decision: SortDecision,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamReport {
    pub entries: Vec<StreamEntry>,
    /// Items per compartment, index 0 = reject.
    pub tallies: [u64; 5],
}

impl StreamReport {
    pub fn log_csv(&self) -> String {
        let mut s = format!("{DECISION_LOG_HEADER}\n");
        for e in &self.entries {
            let d = &e.decision;
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.item,
                d.label.map_or("", |l| LABELS[l]),
                d.compartment,
                sig17(d.confidence),
                d.biodegradable.map_or(String::new(), |b| b.to_string())
            );
        }
        s
    }

    pub fn tallies_csv(&self) -> String {
        let mut s = String::from("compartment,items\n");
        for (c, n) in self.tallies.iter().enumerate() {
            let _ = writeln!(s, "{c},{n}");
        }
        s
    }
}

fn classify(model: &Model, stats: &ChannelStats, path: &Path) -> Result<Vec<f64>> {
    let size = model.input_size();
    let image = square_resize(&decode_image(path)?, size);
    let x = normalize_image(&image, stats, size)?.reshape(vec![1, 3, size, size])?;
    Ok(model.predict(x)?.data().iter().map(|v| v.exp()).collect())
}

/// Classifies and routes each item in order. Failures are logged, routed to
/// the reject compartment, and do not stop the stream.
pub fn run_stream<P: AsRef<Path>>(model: &Model, items: impl IntoIterator<Item = P>, config: &RouterConfig) -> Result<StreamReport> {
    config.validate()?;
    if model.num_classes() != LABELS.len() {
        return Err(Error::ArchMismatch(format!("router needs a {}-class model, got {}", LABELS.len(), model.num_classes())));
    }
    let stats = model.channel_stats.unwrap_or(ChannelStats::IDENTITY);
    let mut report = StreamReport::default();
    for item in items {
        let path = item.as_ref();
        let (decision, error) = match classify(model, &stats, path).and_then(|p| {
            // renormalize away rounding in exp(log_softmax)
            let sum: f64 = p.iter().sum();
            route(&p.iter().map(|v| v / sum).collect::<Vec<_>>(), config)
        }) {
            Ok(d) => (d, None),
            Err(e) => (SortDecision::rejected(0.0), Some(e.to_string())),
        };
        report.tallies[decision.compartment] += 1;
        report.entries.push(StreamEntry { item: path.display().to_string(), decision, error });
    }
    Ok(report)
}
