//! Dataset manifests, image decoding, splits and deterministic batching.

mod batch;
mod image;
mod manifest;
mod split;

pub use self::batch::{plan_batches, Batch, ImageSet};
pub use self::image::{decode_image_bytes, load_image, resize_bilinear, ImageTensor, DEFAULT_RESOLUTION};
pub use self::manifest::{load_manifest, parse_manifest, render_manifest, MANIFEST_HEADER};
pub use self::split::{split_dataset, SplitFractions, DEFAULT_SPLIT};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_TASKS};

/// The five regression targets of one meal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NutrientVector {
    pub calories: f64,
    pub mass: f64,
    pub protein: f64,
    pub fat: f64,
    pub carbohydrates: f64,
}

impl NutrientVector {
    /// Builds a vector, rejecting negative or non-finite components.
    pub fn new(values: [f64; NUM_TASKS]) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Argument(format!(
                "nutrient `{}` must be finite and non-negative, got {}",
                crate::TASK_NAMES[k],
                values[k]
            )));
        }
        Ok(Self::from_array_unchecked(values))
    }

    pub(crate) fn from_array_unchecked(v: [f64; NUM_TASKS]) -> Self {
        Self {
            calories: v[0],
            mass: v[1],
            protein: v[2],
            fat: v[3],
            carbohydrates: v[4],
        }
    }

    pub fn to_array(&self) -> [f64; NUM_TASKS] {
        [self.calories, self.mass, self.protein, self.fat, self.carbohydrates]
    }
}

/// One labelled image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_ref: String,
    pub label: NutrientVector,
}

/// Which partition a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split `{other}`"))),
        }
    }
}

/// A selection of samples: one split, or the whole manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Split(Split),
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Split(s) => s.name(),
        }
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Subset::All),
            other => other.parse().map(Subset::Split),
        }
    }
}

impl From<Split> for Subset {
    fn from(s: Split) -> Self {
        Subset::Split(s)
    }
}

/// Ordered samples plus an optional split assignment.
///
/// `root` is the directory relative image paths are resolved against; it
/// does not take part in equality.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    pub split_assignment: Option<Vec<Split>>,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples && self.split_assignment == other.split_assignment
    }
}

impl DatasetManifest {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self {
            root: PathBuf::new(),
            samples,
            split_assignment: None,
        }
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Absolute (or root-relative) path of a sample's image.
    pub fn resolve(&self, sample: &Sample) -> PathBuf {
        let p = Path::new(&sample.image_ref);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Indices of the samples in `subset`, in manifest order.
    pub fn indices(&self, subset: Subset) -> Result<Vec<usize>> {
        match subset {
            Subset::All => Ok((0..self.samples.len()).collect()),
            Subset::Split(split) => {
                let assignment = self.split_assignment.as_ref().ok_or_else(|| {
                    Error::Argument("manifest has no split assignment".to_string())
                })?;
                Ok(assignment
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s == split)
                    .map(|(i, _)| i)
                    .collect())
            }
        }
    }

    /// Copy with samples reordered by `order` (a permutation of indices).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            root: self.root.clone(),
            samples: order.iter().map(|&i| self.samples[i].clone()).collect(),
            split_assignment: self
                .split_assignment
                .as_ref()
                .map(|a| order.iter().map(|&i| a[i]).collect()),
        }
    }
}
