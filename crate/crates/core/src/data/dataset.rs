use crate::data::{augment, decode_image, normalize_image, square_resize, AugmentPolicy, ChannelStats, DatasetManifest, Image};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Sample {
    pub path: String,
    pub label: usize,
    /// Already square-resized to the dataset's input size.
    pub image: Image,
}

/// Decoded, resized images held in memory, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub size: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(manifest: &DatasetManifest, size: usize) -> Result<Self> {
        let samples = manifest
            .records
            .iter()
            .map(|r| {
                let image = square_resize(&decode_image(manifest.resolve(r))?, size);
                Ok(Sample { path: r.path.clone(), label: r.label, image })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { size, samples })
    }

    pub fn from_images(size: usize, items: impl IntoIterator<Item = (String, usize, Image)>) -> Self {
        let samples = items
            .into_iter()
            .map(|(path, label, image)| Sample { path, label, image: square_resize(&image, size) })
            .collect();
        Dataset { size, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Normalized `[B,3,S,S]` batch of the given sample indices. With
    /// augmentation, sample `i` in epoch `e` draws from stream `e * len + i`.
    pub fn batch(
        &self,
        indices: &[usize],
        stats: &ChannelStats,
        augmentation: Option<(&AugmentPolicy, usize)>,
    ) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let s = self.size;
        let mut data = Vec::with_capacity(indices.len() * 3 * s * s);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            let sample = &self.samples[i];
            let t = match augmentation {
                Some((policy, epoch)) => {
                    let key = (epoch * self.len() + i) as u64;
                    normalize_image(&augment(&sample.image, policy, key), stats, s)?
                }
                None => normalize_image(&sample.image, stats, s)?,
            };
            data.extend_from_slice(t.data());
            targets.push(sample.label);
        }
        Ok((Tensor::new(vec![indices.len(), 3, s, s], data)?, targets))
    }
}
