//! Dataset ingestion, preprocessing, augmentation and splitting.

mod augment;
mod dataset;
mod image;
mod manifest;
mod normalize;
mod resize;
mod split;
mod stats;
mod synthetic;

pub use augment::{augment, horizontal_flip, AugmentPolicy};
pub use dataset::{Dataset, Sample};
pub use image::{decode_image, decode_ppm, encode_pgm, encode_ppm, write_ppm, Image};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, Record, MANIFEST_HEADER};
pub use normalize::{denormalize, normalize_image};
pub use resize::{center_crop_square, resample_bilinear, sample_bilinear, square_resize};
pub use split::split_dataset;
pub use stats::{channel_stats_of, compute_channel_stats, ChannelStats, StatsAccumulator, MIN_STD};
pub use synthetic::{gen_synthetic, render_synthetic};

/// Label vocabulary; class index is the position.
pub const LABELS: [&str; 4] = ["glass", "metal", "paper", "plastic"];

pub const DEFAULT_INPUT_SIZE: usize = 64;

pub fn label_index(label: &str) -> Option<usize> {
    LABELS.iter().position(|&l| l == label)
}
