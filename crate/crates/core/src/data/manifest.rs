use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{label_index, LABELS};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "path,label";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// Relative to the manifest root.
    pub path: String,
    /// Index into [`LABELS`].
    pub label: usize,
}

/// Image paths with labels from the fixed four-label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    /// Validates uniqueness and non-emptiness.
    pub fn new(root: impl Into<PathBuf>, records: Vec<Record>) -> Result<Self> {
        let root = root.into();
        if records.is_empty() {
            return Err(Error::EmptyManifest(root));
        }
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.label >= LABELS.len() {
                return Err(Error::UnknownLabel { path: root.clone(), line: i + 2, label: r.label.to_string() });
            }
            if !seen.insert(r.path.as_str()) {
                return Err(Error::DuplicatePath { path: root.clone(), line: i + 2, entry: r.path.clone() });
            }
        }
        Ok(DatasetManifest { root, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-label counts in vocabulary order.
    pub fn label_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    pub fn resolve(&self, record: &Record) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\n");
        for r in &self.records {
            s.push_str(&format!("{},{}\n", r.path, LABELS[r.label]));
        }
        s
    }

    /// Writes the CSV; paths stay relative to `self.root`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a `path,label` CSV. Paths are resolved against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, path, root)
}

pub fn parse_manifest(text: &str, source: &Path, root: PathBuf) -> Result<DatasetManifest> {
    let malformed = |line: usize, reason: &str| Error::MalformedRow { path: source.into(), line, reason: reason.into() };
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    match lines.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        _ => return Err(malformed(1, "expected header \"path,label\"")),
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let all: Vec<_> = lines.collect();
    let last = all.iter().rposition(|(_, l)| !l.is_empty()).map_or(0, |i| i + 1);
    for &(line, row) in &all[..last] {
        let Some((rel, label)) = row.rsplit_once(',') else {
            return Err(malformed(line, "expected two fields"));
        };
        if rel.is_empty() {
            return Err(malformed(line, "empty path"));
        }
        let label_idx = label_index(label)
            .ok_or_else(|| Error::UnknownLabel { path: source.into(), line, label: label.to_string() })?;
        if !seen.insert(rel.to_string()) {
            return Err(Error::DuplicatePath { path: source.into(), line, entry: rel.to_string() });
        }
        records.push(Record { path: rel.to_string(), label: label_idx });
    }
    if records.is_empty() {
        return Err(Error::EmptyManifest(source.into()));
    }
    Ok(DatasetManifest { root, records })
}
