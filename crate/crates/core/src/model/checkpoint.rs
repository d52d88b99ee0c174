//! Binary checkpoint format.
//!
//! ```text
//! "BINBRN01"                      8-byte magic
//! u64 LE                          header length in bytes
//! UTF-8 header                    key=value lines, then one line per tensor:
//!                                   param <name> <trainable 0|1> <d0>x<d1>...
//!                                   buffer <name> <len>
//! f64 LE payload                  tensors concatenated in header order
//! u64 LE                          FNV-1a 64 of the payload bytes
//! ```

use std::fs;
use std::path::Path;

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::model::builders::{attach_classifier_head, build, ModelConfig};
use crate::model::{Architecture, Model};
use crate::tensor::Tensor;
use crate::textfmt::sig17;

pub const MAGIC: &[u8; 8] = b"BINBRN01";

/// What to do with the stored classifier head on load.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadMode {
    /// Everything must match; `labels`, when given, must equal the stored ones.
    Strict { labels: Option<Vec<String>> },
    /// Keep the backbone, attach a fresh head for `labels`.
    ReinitHead { labels: Vec<String>, hidden: usize, seed: u64 },
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn header(model: &Model) -> String {
    let mut h = String::new();
    h.push_str(&format!("arch={}\n", model.arch));
    h.push_str(&format!("width={}\n", model.width));
    h.push_str(&format!("input_size={}\n", model.input_size));
    h.push_str(&format!("hidden={}\n", model.hidden));
    h.push_str(&format!("labels={}\n", model.labels.join(",")));
    match &model.channel_stats {
        Some(s) => {
            let join = |v: &[f64; 3]| v.iter().map(|x| sig17(*x)).collect::<Vec<_>>().join(",");
            h.push_str(&format!("stats_mean={}\n", join(&s.mean)));
            h.push_str(&format!("stats_std={}\n", join(&s.std)));
        }
        None => h.push_str("stats_mean=none\nstats_std=none\n"),
    }
    for p in model.params.iter() {
        let dims: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
        h.push_str(&format!("param {} {} {}\n", p.name, u8::from(p.trainable), dims.join("x")));
    }
    for (name, r) in model.running_stats() {
        h.push_str(&format!("buffer {name}.running_mean {}\n", r.mean.len()));
        h.push_str(&format!("buffer {name}.running_var {}\n", r.var.len()));
    }
    h
}

pub fn encode(model: &Model) -> Result<Vec<u8>> {
    if model.params.iter().any(|p| !p.tensor.is_finite()) {
        return Err(Error::InvalidArgument("refusing to save non-finite parameters".into()));
    }
    let header = header(model);
    let mut payload = Vec::new();
    for p in model.params.iter() {
        payload.extend(p.tensor.data().iter().flat_map(|x| x.to_le_bytes()));
    }
    for (_, r) in model.running_stats() {
        payload.extend(r.mean.iter().chain(&r.var).flat_map(|x| x.to_le_bytes()));
    }
    let mut out = Vec::with_capacity(8 + 8 + header.len() + payload.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&fnv1a64(&payload).to_le_bytes());
    Ok(out)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

enum Entry {
    Param { name: String, trainable: bool, shape: Vec<usize> },
    Buffer { name: String, len: usize },
}

impl Entry {
    fn len(&self) -> usize {
        match self {
            Entry::Param { shape, .. } => shape.iter().product(),
            Entry::Buffer { len, .. } => *len,
        }
    }
}

struct Parsed {
    config: ModelConfig,
    stats: Option<ChannelStats>,
    entries: Vec<Entry>,
    values: Vec<f64>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(hlen).filter(|&e| e + 8 <= bytes.len()).ok_or_else(|| corrupt("header length exceeds file"))?;
    let text = std::str::from_utf8(&bytes[16..header_end]).map_err(|_| corrupt("header is not UTF-8"))?;

    let mut kv = std::collections::HashMap::new();
    let mut entries = Vec::new();
    for line in text.lines() {
        let mut parts = line.split(' ');
        match parts.next() {
            Some("param") => {
                let (Some(name), Some(flag), Some(dims), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                    return Err(corrupt(format!("bad param line {line:?}")));
                };
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| corrupt(format!("bad shape {dims:?}")))?;
                let trainable = match flag {
                    "0" => false,
                    "1" => true,
                    _ => return Err(corrupt(format!("bad trainable flag {flag:?}"))),
                };
                entries.push(Entry::Param { name: name.to_string(), trainable, shape });
            }
            Some("buffer") => {
                let (Some(name), Some(len), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(corrupt(format!("bad buffer line {line:?}")));
                };
                let len = len.parse().map_err(|_| corrupt(format!("bad buffer length {len:?}")))?;
                entries.push(Entry::Buffer { name: name.to_string(), len });
            }
            _ => {
                let (k, v) = line.split_once('=').ok_or_else(|| corrupt(format!("bad header line {line:?}")))?;
                kv.insert(k.to_string(), v.to_string());
            }
        }
    }
    let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| corrupt(format!("missing {k}")));
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| corrupt(format!("bad {k}"))) };
    let arch: Architecture = get("arch")?.parse().map_err(|_| corrupt("unknown architecture"))?;
    let labels: Vec<String> = get("labels")?.split(',').map(str::to_string).collect();
    let triple = |k: &str| -> Result<Option<[f64; 3]>> {
        let v = get(k)?;
        if v == "none" {
            return Ok(None);
        }
        let xs: Vec<f64> = v.split(',').map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(|_| corrupt(format!("bad {k}")))?;
        xs.try_into().map(Some).map_err(|_| corrupt(format!("{k} needs 3 values")))
    };
    let stats = match (triple("stats_mean")?, triple("stats_std")?) {
        (Some(mean), Some(std)) => Some(ChannelStats { mean, std }),
        (None, None) => None,
        _ => return Err(corrupt("partial channel statistics")),
    };
    let config = ModelConfig {
        arch,
        width: num("width")?,
        input_size: num("input_size")?,
        hidden: num("hidden")?,
        labels,
        seed: 0,
    };

    let count: usize = entries.iter().map(Entry::len).sum();
    let payload_end = header_end + count * 8;
    if payload_end + 8 != bytes.len() {
        return Err(corrupt(format!("expected {} bytes, file has {}", payload_end + 8, bytes.len())));
    }
    let payload = &bytes[header_end..payload_end];
    let stored = u64::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    if fnv1a64(payload) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Parsed { config, stats, entries, values })
}

/// Rebuilds a model from `bytes`; see [`load_checkpoint`].
pub fn decode(bytes: &[u8], expected_arch: Architecture, head_mode: &HeadMode) -> Result<Model> {
    let parsed = parse(bytes)?;
    if parsed.config.arch != expected_arch {
        return Err(Error::ArchMismatch(format!("checkpoint holds {}, expected {expected_arch}", parsed.config.arch)));
    }
    if let HeadMode::Strict { labels: Some(labels) } = head_mode {
        if *labels != parsed.config.labels {
            return Err(Error::ArchMismatch(format!("labels {:?} vs expected {labels:?}", parsed.config.labels)));
        }
    }
    let mut model = build(&parsed.config).map_err(|e| Error::ArchMismatch(e.to_string()))?;
    let n_params = parsed.entries.iter().filter(|e| matches!(e, Entry::Param { .. })).count();
    if n_params != model.params.len() {
        return Err(Error::ArchMismatch(format!("{n_params} parameters stored, architecture has {}", model.params.len())));
    }
    let mut offset = 0;
    let mut buffers = Vec::new();
    for entry in &parsed.entries {
        let vals = &parsed.values[offset..offset + entry.len()];
        offset += entry.len();
        match entry {
            Entry::Param { name, trainable, shape } => {
                let p = model.params.get_mut(name).ok_or_else(|| Error::ArchMismatch(format!("unexpected parameter {name}")))?;
                if p.tensor.shape() != shape.as_slice() {
                    return Err(Error::shape(format!("{name}: stored {shape:?}, model {:?}", p.tensor.shape())));
                }
                p.tensor = Tensor::new(shape.clone(), vals.to_vec())?;
                p.trainable = *trainable;
            }
            Entry::Buffer { name, .. } => buffers.push((name.as_str(), vals)),
        }
    }
    let names: Vec<String> = model.running_stats().into_iter().map(|(n, _)| n).collect();
    if buffers.len() != 2 * names.len() {
        return Err(Error::ArchMismatch("running statistics do not match architecture".into()));
    }
    for ((name, running), pair) in names.iter().zip(model.running_stats_mut()).zip(buffers.chunks(2)) {
        let (mname, mean) = pair[0];
        let (vname, var) = pair[1];
        if mname != format!("{name}.running_mean") || vname != format!("{name}.running_var") {
            return Err(Error::ArchMismatch(format!("buffer {mname} where {name} expected")));
        }
        if mean.len() != running.mean.len() || var.len() != running.var.len() {
            return Err(Error::shape(format!("{name}: running statistics length")));
        }
        running.mean.copy_from_slice(mean);
        running.var.copy_from_slice(var);
    }
    model.channel_stats = parsed.stats;

    if let HeadMode::ReinitHead { labels, hidden, seed } = head_mode {
        let flags: Vec<(String, bool)> = model.params.iter().map(|p| (p.name.clone(), p.trainable)).collect();
        model = attach_classifier_head(model, *hidden, labels, *seed)?;
        for (name, flag) in flags {
            if let Some(p) = model.params.get_mut(&name) {
                p.trainable = flag;
            }
        }
    }
    Ok(model)
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>, expected_arch: Architecture, head_mode: &HeadMode) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected_arch, head_mode)
}

/// Architecture stored in a checkpoint, without rebuilding the model.
pub fn peek_architecture(path: impl AsRef<Path>) -> Result<Architecture> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(&bytes)?.config.arch)
}
