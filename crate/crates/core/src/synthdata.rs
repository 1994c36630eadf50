//! Synthetic images whose labels are an affine function of channel means.
//!
//! Each image is a solid background with a few solid rectangles. Its label
//! is `intercept + slopes · (mean R, mean G, mean B)` with means taken over
//! the exact 8-bit pixel values divided by 255, so a loader at the same
//! resolution recovers every label from the image alone.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{render_manifest, DatasetManifest, NutrientVector, Sample};
use crate::{Error, Result, NUM_TASKS};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const SPEC_FILE: &str = "synth_spec.json";

/// Affine map from channel means to the five targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub intercept: [f64; NUM_TASKS],
    /// `slopes[task] = [r, g, b]`.
    pub slopes: [[f64; 3]; NUM_TASKS],
}

impl Default for LabelMap {
    fn default() -> Self {
        Self {
            intercept: [50.0, 20.0, 2.0, 1.0, 5.0],
            slopes: [
                [500.0, 300.0, 200.0],
                [200.0, 150.0, 100.0],
                [30.0, 20.0, 10.0],
                [10.0, 25.0, 15.0],
                [40.0, 60.0, 30.0],
            ],
        }
    }
}

impl LabelMap {
    pub fn apply(&self, means: [f64; 3]) -> [f64; NUM_TASKS] {
        std::array::from_fn(|k| {
            self.intercept[k] + (0..3).map(|c| self.slopes[k][c] * means[c]).sum::<f64>()
        })
    }

    /// Every label over the unit cube is non-negative iff it is at all
    /// eight corners (the map is affine).
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .intercept
            .iter()
            .chain(self.slopes.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("label map has non-finite coefficients".to_string()));
        }
        for corner in 0..8u8 {
            let means = [0, 1, 2].map(|c| ((corner >> c) & 1) as f64);
            if self.apply(means).iter().any(|&v| v < 0.0) {
                return Err(Error::Config(format!(
                    "label map yields negative labels at channel means {means:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub count: usize,
    pub resolution: usize,
    pub seed: u64,
    pub label_map: LabelMap,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 64,
            resolution: 64,
            seed: 0,
            label_map: LabelMap::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".to_string()));
        }
        if self.resolution == 0 || self.resolution > 4096 {
            return Err(Error::Config("resolution must be in 1..=4096".to_string()));
        }
        self.label_map.validate()
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> Rgb<u8> {
    Rgb([rng.gen(), rng.gen(), rng.gen()])
}

/// Draws image `index` of a dataset.
pub fn render_image(spec: &SynthSpec, index: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let r = spec.resolution as u32;
    let mut img = RgbImage::from_pixel(r, r, random_color(&mut rng));
    let rects = rng.gen_range(1..=4);
    for _ in 0..rects {
        let x0 = rng.gen_range(0..r);
        let y0 = rng.gen_range(0..r);
        let x1 = rng.gen_range(x0..r) + 1;
        let y1 = rng.gen_range(y0..r) + 1;
        let color = random_color(&mut rng);
        for y in y0..y1 {
            for x in x0..x1 {
                img.put_pixel(x, y, color);
            }
        }
    }
    img
}

/// Exact channel means of an 8-bit image, scaled into `[0, 1]`.
pub fn channel_means(img: &RgbImage) -> [f64; 3] {
    let mut sums = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sums[c] += p[c] as u64;
        }
    }
    let n = (img.width() as u64 * img.height() as u64) as f64;
    sums.map(|s| s as f64 / (255.0 * n))
}

/// Writes `count` PNGs, `manifest.csv` and `synth_spec.json` into
/// `output_dir` and returns the manifest (rooted at `output_dir`).
pub fn generate(spec: &SynthSpec, output_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let dir = output_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let width = spec.count.saturating_sub(1).to_string().len().max(4);
    let mut samples = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let img = render_image(spec, i);
        let name = format!("img_{i:0width$}.png");
        let path = dir.join(&name);
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::file(&path, std::io::Error::other(e)))?;
        let label = NutrientVector::new(spec.label_map.apply(channel_means(&img)))?;
        samples.push(Sample {
            image_ref: name,
            label,
        });
    }
    let manifest = DatasetManifest::new(samples).with_root(dir);
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, render_manifest(&manifest))
        .map_err(|e| Error::file(&manifest_path, e))?;
    let spec_path = dir.join(SPEC_FILE);
    let spec_json = serde_json::to_string_pretty(spec).expect("spec serializes");
    std::fs::write(&spec_path, spec_json + "\n").map_err(|e| Error::file(&spec_path, e))?;
    Ok(manifest)
}
