use std::sync::{Arc, OnceLock};

use candle_core::{Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{load_image, DatasetManifest, ImageTensor, Subset};
use crate::{Error, Result, NUM_TASKS};

/// A stacked group of samples ready for the model.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(B, 3, H, W)` f32 tensor.
    pub images: Tensor,
    /// `B` rows in task order.
    pub targets: Vec<[f64; NUM_TASKS]>,
    /// Manifest indices of the rows.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Orders the samples of `subset` into batches of `batch_size`.
///
/// Without shuffling, manifest order is kept. With shuffling, the order is a
/// pure function of `(seed, epoch)`.
pub fn plan_batches(
    manifest: &DatasetManifest,
    subset: Subset,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".to_string()));
    }
    let mut indices = manifest.indices(subset)?;
    if indices.is_empty() {
        return Err(Error::EmptySplit(format!("no samples in split `{}`", subset.name())));
    }
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        indices.shuffle(&mut rng);
    }
    Ok(indices.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// A manifest bound to an input resolution, with decoded images cached.
///
/// Images inside one batch are decoded in parallel; the batch contents and
/// order never depend on the number of worker threads.
pub struct ImageSet {
    manifest: DatasetManifest,
    resolution: usize,
    cache: Vec<OnceLock<Arc<ImageTensor>>>,
    device: Device,
}

impl ImageSet {
    pub fn new(manifest: DatasetManifest, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Argument("resolution must be positive".to_string()));
        }
        let cache = (0..manifest.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            manifest,
            resolution,
            cache,
            device: Device::Cpu,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Decoded image of sample `index` (cached after the first load).
    pub fn image(&self, index: usize) -> Result<Arc<ImageTensor>> {
        if let Some(img) = self.cache[index].get() {
            return Ok(img.clone());
        }
        let sample = &self.manifest.samples[index];
        let mut img = load_image(self.manifest.resolve(sample), self.resolution)?;
        img.source_ref = sample.image_ref.clone();
        Ok(self.cache[index].get_or_init(|| Arc::new(img)).clone())
    }

    /// Stacks the given samples into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::EmptySplit("empty batch".to_string()));
        }
        let images: Vec<Arc<ImageTensor>> = indices
            .par_iter()
            .map(|&i| self.image(i))
            .collect::<Result<_>>()?;
        let r = self.resolution;
        let mut data = Vec::with_capacity(indices.len() * 3 * r * r);
        for img in &images {
            data.extend_from_slice(&img.pixels);
        }
        let images = Tensor::from_vec(data, (indices.len(), 3, r, r), &self.device)?;
        let targets = indices
            .iter()
            .map(|&i| self.manifest.samples[i].label.to_array())
            .collect();
        Ok(Batch {
            images,
            targets,
            indices: indices.to_vec(),
        })
    }

    /// Lazily materialised batches for one pass over `subset`.
    pub fn batches(
        &self,
        subset: Subset,
        batch_size: usize,
        shuffle: bool,
        seed: u64,
        epoch: u64,
    ) -> Result<impl Iterator<Item = Result<Batch>> + '_> {
        let plan = plan_batches(&self.manifest, subset, batch_size, shuffle, seed, epoch)?;
        Ok(plan.into_iter().map(move |idx| self.batch(&idx)))
    }
}
