use std::fs;
use std::path::Path;

use crate::data::{decode_image, square_resize, DatasetManifest, Image};
use crate::error::{Error, Result};
use crate::textfmt::sig17;

pub const MIN_STD: f64 = 1e-6;
const CHANNEL_NAMES: [&str; 3] = ["red", "green", "blue"];

/// Per-channel mean and population standard deviation of pixel/255, in R,G,B order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    /// Mean 0, std 1: normalization reduces to pixel/255.
    pub const IDENTITY: ChannelStats = ChannelStats { mean: [0.0; 3], std: [1.0; 3] };

    pub fn new(mean: [f64; 3], std: [f64; 3]) -> Result<Self> {
        if mean.iter().any(|m| !(0.0..=1.0).contains(m)) || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument(format!("channel stats mean {mean:?} std {std:?}")));
        }
        Ok(ChannelStats { mean, std: std.map(|s| s.max(MIN_STD)) })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,mean,std\n");
        for c in 0..3 {
            s.push_str(&format!("{},{},{}\n", CHANNEL_NAMES[c], sig17(self.mean[c]), sig17(self.std[c])));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, reason: &str| Error::MalformedRow { path: path.into(), line, reason: reason.into() };
        let mut lines = text.lines();
        if lines.next() != Some("channel,mean,std") {
            return Err(bad(1, "expected header \"channel,mean,std\""));
        }
        let (mut mean, mut std) = ([0.0; 3], [0.0; 3]);
        for c in 0..3 {
            let line = lines.next().ok_or_else(|| bad(c + 2, "missing channel row"))?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 || f[0] != CHANNEL_NAMES[c] {
                return Err(bad(c + 2, "expected channel,mean,std"));
            }
            mean[c] = f[1].parse().map_err(|_| bad(c + 2, "bad mean"))?;
            std[c] = f[2].parse().map_err(|_| bad(c + 2, "bad std"))?;
        }
        Self::new(mean, std)
    }
}

/// Exact integer accumulators; pixel values are small integers, so sums and
/// sums of squares never round.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    count: u64,
    sum: [u64; 3],
    sum_sq: [u64; 3],
}

impl StatsAccumulator {
    pub fn add(&mut self, image: &Image) {
        for p in image.pixels() {
            for c in 0..3 {
                let v = u64::from(p[c]);
                self.sum[c] += v;
                self.sum_sq[c] += v * v;
            }
        }
        self.count += image.pixels().len() as u64;
    }

    pub fn finish(&self) -> Result<ChannelStats> {
        if self.count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = self.count as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for c in 0..3 {
            // var * n^2 * 255^2 = n * sum_sq - sum^2, evaluated in exact integers
            let num = u128::from(self.count) * u128::from(self.sum_sq[c]) - u128::from(self.sum[c]).pow(2);
            mean[c] = self.sum[c] as f64 / n / 255.0;
            std[c] = (num as f64).sqrt() / n / 255.0;
        }
        ChannelStats::new(mean, std)
    }
}

pub fn channel_stats_of<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<ChannelStats> {
    let mut acc = StatsAccumulator::default();
    images.into_iter().for_each(|im| acc.add(im));
    acc.finish()
}

/// Statistics over every image of `manifest` after square resizing to `size`.
pub fn compute_channel_stats(manifest: &DatasetManifest, size: usize) -> Result<ChannelStats> {
    let mut acc = StatsAccumulator::default();
    for record in &manifest.records {
        let image = decode_image(manifest.resolve(record))?;
        acc.add(&square_resize(&image, size));
    }
    acc.finish()
}
