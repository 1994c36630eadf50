use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::dataio::{SplitFractions, Subset, DEFAULT_RESOLUTION};
use crate::model::{BackboneConfig, BackboneKind, HeadTopology, ModelConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Environment variable naming the directory relative manifest paths are
/// resolved against.
pub const DATA_DIR_ENV: &str = "NUTRIPRED_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "nutripred", version, about = "Nutrient regression from food images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoints, a history log and a report.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Train(Box<TrainArgs>),
    /// Evaluate one or more checkpoints on a manifest split.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Predict the nutrients of a single image.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Generate a synthetic dataset.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Show a checkpoint's configuration, parameter counts and provenance.
    #[command(args_override_self = true)]
    Inspect(InspectArgs),
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("invalid list element `{p}`")))
        .collect()
}

fn parse_widths(s: &str) -> std::result::Result<Vec<usize>, String> {
    parse_list(s)
}

fn parse_split(s: &str) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = parse_list(s)?;
    if v.len() != 3 {
        return Err("expected three fractions train,val,test".to_string());
    }
    Ok(v)
}

/// Training flags. Every field may also come from `--config FILE` (JSON
/// with the same snake_case keys); flags win over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Manifest CSV (relative paths also tried under $NUTRIPRED_DATA_DIR).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// vit | mae | conv-residual | tiny
    #[arg(long)]
    pub backbone: Option<String>,
    /// full | compressed
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Comma-separated shared layer widths.
    #[arg(long, value_parser = parse_widths)]
    pub shared_widths: Option<std::vec::Vec<usize>>,
    #[arg(long)]
    pub task_width: Option<usize>,
    /// Square input resolution in pixels.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub attention_heads: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    /// Pretrained backbone weights (safetensors).
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long = "lr")]
    #[serde(alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub rms_discount: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long = "patience")]
    #[serde(alias = "patience")]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated train,val,test fractions.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<std::vec::Vec<f64>>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_backbone: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from `last.ckpt` / `best.ckpt` in the output directory.
    #[arg(long)]
    #[serde(skip)]
    pub resume: bool,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($field:ident),+ $(,)?) => {
        TrainArgs {
            config: $top.config.clone(),
            resume: $top.resume,
            $($field: $top.$field.clone().or_else(|| $base.$field.clone()),)+
        }
    };
}

impl TrainArgs {
    /// Parses the contents of a `--config` file.
    pub fn from_json(text: &str) -> Result<TrainArgs> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Flags layered over the `--config` file, if any.
    pub fn merged(&self) -> Result<TrainArgs> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file = TrainArgs::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(overlay!(self, file;
            manifest, backbone, head, feature_dim, shared_widths, task_width, resolution,
            patch_size, attention_heads, hidden_layers, pretrained, learning_rate, rms_discount,
            epsilon, momentum, weight_decay, batch_size, max_epochs, early_stop_patience, seed,
            split, freeze_backbone, out,
        ))
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let a = self.merged()?;
        let missing = |flag: &str| Error::Config(format!("missing required flag --{flag}"));
        let manifest = a.manifest.clone().ok_or_else(|| missing("manifest"))?;
        let kind: BackboneKind = a.backbone.as_deref().ok_or_else(|| missing("backbone"))?.parse()?;
        let mut head: HeadTopology = a.head.as_deref().ok_or_else(|| missing("head"))?.parse()?;
        let seed = a.seed.unwrap_or(0);

        let mut backbone = BackboneConfig::new(kind).with_image_size(a.resolution.unwrap_or(DEFAULT_RESOLUTION));
        if let Some(v) = a.feature_dim {
            backbone.feature_dim = v;
        }
        if let Some(v) = a.patch_size {
            backbone.patch_size = v;
        }
        if let Some(v) = a.attention_heads {
            backbone.attention_heads = v;
        }
        if let Some(v) = a.hidden_layers {
            backbone.hidden_layers = v;
        }
        backbone.pretrained_weights = a.pretrained.clone();
        if let Some(widths) = &a.shared_widths {
            match &mut head {
                HeadTopology::Full { shared_widths, .. } | HeadTopology::Compressed { shared_widths } => {
                    *shared_widths = widths.clone()
                }
            }
        }
        if let Some(tw) = a.task_width {
            match &mut head {
                HeadTopology::Full { task_width, .. } => *task_width = tw,
                HeadTopology::Compressed { .. } => {
                    return Err(Error::Config("--task-width only applies to the full head".to_string()))
                }
            }
        }
        let model = ModelConfig { backbone, head, seed };
        model.validate()?;

        let d = TrainConfig::default();
        let split = match &a.split {
            Some(v) => SplitFractions::new(v[0], v[1], v[2])?,
            None => d.split,
        };
        let train = TrainConfig {
            learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
            rms_discount: a.rms_discount.unwrap_or(d.rms_discount),
            epsilon: a.epsilon.unwrap_or(d.epsilon),
            momentum: a.momentum.unwrap_or(d.momentum),
            weight_decay: a.weight_decay.unwrap_or(d.weight_decay),
            batch_size: a.batch_size.unwrap_or(d.batch_size),
            max_epochs: a.max_epochs.unwrap_or(d.max_epochs),
            early_stop_patience: a.early_stop_patience.unwrap_or(d.early_stop_patience),
            seed,
            freeze_backbone: a.freeze_backbone.unwrap_or(false),
            split,
        };
        train.validate()?;
        Ok(RunConfig {
            manifest: resolve_data_path(&manifest),
            model,
            train,
            out: a.out.clone().unwrap_or_else(|| PathBuf::from("nutripred-run")),
            resume: a.resume,
        })
    }
}

/// Fully resolved settings of one training run; echoed as JSON.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
    pub resume: bool,
}

/// Relative paths that do not exist are retried under `$NUTRIPRED_DATA_DIR`.
pub fn resolve_data_path(path: &std::path::Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to evaluate; repeat to build a comparison table.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// train | val | test | all. Splits are recomputed from each
    /// checkpoint's stored split fractions and seed.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// text | csv | markdown | json
    #[arg(long, default_value = "text")]
    pub format: String,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Row labels, one per checkpoint.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Also write the output to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvaluateArgs {
    pub fn subset(&self) -> Result<Subset> {
        self.split
            .parse::<Subset>()
            .map_err(|_| Error::Config(format!("unknown split `{}`", self.split)))
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}
