//! Direct nutrient prediction from a single food image.
//!
//! A pretrained-style feature extractor (vision transformer, masked
//! autoencoder encoder, convolutional residual network, or a tiny test
//! network) feeds a multitask head that regresses five quantities in a
//! fixed order: calories (kcal), mass (g), protein (g), fat (g) and
//! carbohydrates (g). Training minimises the unweighted sum of per-task
//! mean absolute errors with RMSProp plus momentum.
//!
//! Module map:
//! - [`dataio`]: manifest CSV, image loading, splits, deterministic batching
//! - [`model`]: backbones, head topologies, weights files
//! - [`training`]: loss, gradient, optimizer, fit loop, checkpoints
//! - [`evaluation`]: per-task/combined MAE and comparison tables
//! - [`synthdata`]: synthetic dataset with labels known in closed form
//! - [`cli`]: the `nutripred` command-line front end

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod synthdata;
pub mod training;

mod tensorfile;

pub use error::{Error, Result};

/// Number of regression tasks.
pub const NUM_TASKS: usize = 5;

/// Task names in output column order.
pub const TASK_NAMES: [&str; NUM_TASKS] = ["calories", "mass", "protein", "fat", "carbohydrates"];

/// Units of each task, same order as [`TASK_NAMES`].
pub const TASK_UNITS: [&str; NUM_TASKS] = ["kcal", "g", "g", "g", "g"];
