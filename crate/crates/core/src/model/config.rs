use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataio::DEFAULT_RESOLUTION;
use crate::{Error, Result};

// Upper bounds on architecture sizes; anything larger is treated as a
// malformed configuration.
const MAX_WIDTH: usize = 65_536;
const MAX_DEPTH: usize = 256;
const MAX_HEADS: usize = 256;
const MAX_IMAGE_SIZE: usize = 4_096;

/// Which feature extractor feeds the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Vision transformer, class-token features by default.
    Vit,
    /// Masked-autoencoder encoder run with no masking.
    MaeEncoder,
    /// Convolutional residual network with global average pooling.
    ConvResidual,
    /// Small randomly initialised extractor for tests.
    TinyTest,
}

impl BackboneKind {
    pub fn is_transformer(self) -> bool {
        matches!(self, BackboneKind::Vit | BackboneKind::MaeEncoder)
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vit" => Ok(BackboneKind::Vit),
            "mae" | "mae_encoder" | "mae-encoder" => Ok(BackboneKind::MaeEncoder),
            "conv-residual" | "conv_residual" => Ok(BackboneKind::ConvResidual),
            "tiny" | "tiny_test" | "tiny-test" => Ok(BackboneKind::TinyTest),
            other => Err(Error::Config(format!(
                "unknown backbone `{other}` (expected vit, mae, conv-residual or tiny)"
            ))),
        }
    }
}

/// How transformer token outputs are reduced to one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    ClassToken,
    MeanPatch,
}

/// Masked-autoencoder decoder dimensions. The decoder is never executed;
/// it is only used to validate pretrained weight files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub attention_heads: usize,
    pub hidden_layers: usize,
    pub dim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            attention_heads: 16,
            hidden_layers: 8,
            dim: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub attention_heads: usize,
    /// Transformer blocks, or residual blocks for `conv_residual`.
    pub hidden_layers: usize,
    /// Width of the feature vector handed to the head.
    pub feature_dim: usize,
    /// Square input side length in pixels.
    pub image_size: usize,
    /// Transformer patch side length.
    pub patch_size: usize,
    /// Transformer MLP hidden width as a multiple of `feature_dim`.
    pub mlp_ratio: usize,
    pub pooling: Pooling,
    #[serde(default)]
    pub decoder: Option<DecoderConfig>,
    #[serde(default)]
    pub pretrained_weights: Option<PathBuf>,
}

impl BackboneConfig {
    /// Defaults for each kind. Transformers use 12 attention heads and 12
    /// hidden layers at ViT-Base width.
    pub fn new(kind: BackboneKind) -> Self {
        let base = Self {
            kind,
            attention_heads: 12,
            hidden_layers: 12,
            feature_dim: 768,
            image_size: DEFAULT_RESOLUTION,
            patch_size: 16,
            mlp_ratio: 4,
            pooling: Pooling::ClassToken,
            decoder: None,
            pretrained_weights: None,
        };
        match kind {
            BackboneKind::Vit => base,
            BackboneKind::MaeEncoder => Self {
                pooling: Pooling::MeanPatch,
                decoder: Some(DecoderConfig::default()),
                ..base
            },
            BackboneKind::ConvResidual => Self {
                attention_heads: 0,
                hidden_layers: 8,
                feature_dim: 1536,
                patch_size: 0,
                mlp_ratio: 0,
                ..base
            },
            BackboneKind::TinyTest => Self {
                attention_heads: 0,
                hidden_layers: 1,
                feature_dim: 16,
                patch_size: 0,
                mlp_ratio: 0,
                ..base
            },
        }
    }

    pub fn with_image_size(mut self, size: usize) -> Self {
        self.image_size = size;
        self
    }

    pub fn with_feature_dim(mut self, dim: usize) -> Self {
        self.feature_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.feature_dim == 0 || self.feature_dim > MAX_WIDTH {
            return fail(format!("feature_dim must be in 1..={MAX_WIDTH}, got {}", self.feature_dim));
        }
        if self.image_size == 0 || self.image_size > MAX_IMAGE_SIZE {
            return fail(format!("image_size must be in 1..={MAX_IMAGE_SIZE}, got {}", self.image_size));
        }
        if self.hidden_layers > MAX_DEPTH {
            return fail(format!("hidden_layers must be at most {MAX_DEPTH}"));
        }
        match self.kind {
            BackboneKind::Vit | BackboneKind::MaeEncoder => {
                if self.attention_heads == 0 || self.attention_heads > MAX_HEADS {
                    return fail(format!("attention_heads must be in 1..={MAX_HEADS}"));
                }
                if !self.feature_dim.is_multiple_of(self.attention_heads) {
                    return fail(format!(
                        "feature_dim {} is not divisible by attention_heads {}",
                        self.feature_dim, self.attention_heads
                    ));
                }
                if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
                    return fail(format!(
                        "image_size {} must be a positive multiple of patch_size {}",
                        self.image_size, self.patch_size
                    ));
                }
                if self.mlp_ratio == 0 || self.mlp_ratio * self.feature_dim > MAX_WIDTH * 4 {
                    return fail("mlp_ratio out of range".to_string());
                }
                if let Some(d) = &self.decoder {
                    if self.kind == BackboneKind::Vit {
                        return fail("decoder is only meaningful for mae_encoder".to_string());
                    }
                    if d.attention_heads == 0
                        || d.attention_heads > MAX_HEADS
                        || d.dim == 0
                        || d.dim > MAX_WIDTH
                        || d.dim % d.attention_heads != 0
                        || d.hidden_layers > MAX_DEPTH
                    {
                        return fail(format!("invalid decoder configuration {d:?}"));
                    }
                }
            }
            BackboneKind::ConvResidual => {
                if !self.feature_dim.is_multiple_of(8) {
                    return fail(format!(
                        "conv_residual feature_dim must be a multiple of 8, got {}",
                        self.feature_dim
                    ));
                }
            }
            BackboneKind::TinyTest => {
                if self.image_size < super::backbone::TINY_STRIDE {
                    return fail(format!(
                        "tiny_test needs image_size >= {}",
                        super::backbone::TINY_STRIDE
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Fully connected layers between the features and the five outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "snake_case")]
pub enum HeadTopology {
    /// Two shared layers, then per task one hidden layer and a linear output.
    Full {
        shared_widths: Vec<usize>,
        task_width: usize,
    },
    /// One shared layer feeding five linear outputs.
    Compressed { shared_widths: Vec<usize> },
}

impl HeadTopology {
    pub fn full() -> Self {
        HeadTopology::Full {
            shared_widths: vec![4096, 4096],
            task_width: 4096,
        }
    }

    pub fn compressed() -> Self {
        HeadTopology::Compressed {
            shared_widths: vec![4096],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HeadTopology::Full { .. } => "full",
            HeadTopology::Compressed { .. } => "compressed",
        }
    }

    pub fn shared_widths(&self) -> &[usize] {
        match self {
            HeadTopology::Full { shared_widths, .. } | HeadTopology::Compressed { shared_widths } => {
                shared_widths
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (expected, widths) = match self {
            HeadTopology::Full {
                shared_widths,
                task_width,
            } => {
                if *task_width == 0 || *task_width > MAX_WIDTH {
                    return Err(Error::Config(format!(
                        "task_width must be in 1..={MAX_WIDTH}, got {task_width}"
                    )));
                }
                (2, shared_widths)
            }
            HeadTopology::Compressed { shared_widths } => (1, shared_widths),
        };
        if widths.len() != expected {
            return Err(Error::Config(format!(
                "{} head needs exactly {expected} shared width(s), got {}",
                self.name(),
                widths.len()
            )));
        }
        if widths.iter().any(|&w| w == 0 || w > MAX_WIDTH) {
            return Err(Error::Config(format!(
                "shared widths must be in 1..={MAX_WIDTH}, got {widths:?}"
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for HeadTopology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(HeadTopology::full()),
            "compressed" => Ok(HeadTopology::compressed()),
            other => Err(Error::Config(format!(
                "unknown head `{other}` (expected full or compressed)"
            ))),
        }
    }
}

/// Everything needed to construct a network and its initial weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub head: HeadTopology,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.head.validate()
    }
}
