use candle_core::{IndexOp, Tensor};

use super::{BackboneSummary, FeatureExtractor};
use crate::model::config::{BackboneConfig, DecoderConfig, Pooling};
use crate::model::layers::{softmax_last, Conv2d, LayerNorm, Linear};
use crate::model::params::{Init, ParamSpec, ParamStore};
use crate::{Error, Result};

const EMBED_INIT: Init = Init::Uniform(0.02);

fn block_specs(prefix: &str, dim: usize, mlp_dim: usize) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    s.extend(LayerNorm::specs(&format!("{prefix}.norm1"), dim));
    s.extend(Linear::specs(&format!("{prefix}.attn.qkv"), dim, 3 * dim));
    s.extend(Linear::specs(&format!("{prefix}.attn.proj"), dim, dim));
    s.extend(LayerNorm::specs(&format!("{prefix}.norm2"), dim));
    s.extend(Linear::specs(&format!("{prefix}.mlp.fc1"), dim, mlp_dim));
    s.extend(Linear::specs(&format!("{prefix}.mlp.fc2"), mlp_dim, dim));
    s
}

fn num_patches(c: &BackboneConfig) -> usize {
    let side = c.image_size / c.patch_size;
    side * side
}

pub(super) fn encoder_specs(c: &BackboneConfig) -> Vec<ParamSpec> {
    let d = c.feature_dim;
    let mut s = Vec::new();
    s.extend(Conv2d::specs("patch_embed.proj", 3, d, c.patch_size, Init::Zeros));
    s.push(ParamSpec::new("cls_token", &[1, 1, d], EMBED_INIT));
    s.push(ParamSpec::new("pos_embed", &[1, num_patches(c) + 1, d], EMBED_INIT));
    for i in 0..c.hidden_layers {
        s.extend(block_specs(&format!("blocks.{i}"), d, d * c.mlp_ratio));
    }
    s.extend(LayerNorm::specs("norm", d));
    s
}

pub(super) fn decoder_specs(c: &BackboneConfig, dec: &DecoderConfig) -> Vec<ParamSpec> {
    let dd = dec.dim;
    let mut s = Vec::new();
    s.extend(Linear::specs("decoder_embed", c.feature_dim, dd));
    s.push(ParamSpec::new("mask_token", &[1, 1, dd], EMBED_INIT));
    s.push(ParamSpec::new("decoder_pos_embed", &[1, num_patches(c) + 1, dd], EMBED_INIT));
    for i in 0..dec.hidden_layers {
        s.extend(block_specs(&format!("decoder_blocks.{i}"), dd, dd * c.mlp_ratio));
    }
    s.extend(LayerNorm::specs("decoder_norm", dd));
    s.extend(Linear::specs("decoder_pred", dd, c.patch_size * c.patch_size * 3));
    s
}

struct Block {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    heads: usize,
}

impl Block {
    fn load(store: &ParamStore, name: &str, heads: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::load(store, &format!("{name}.norm1"))?,
            qkv: Linear::load(store, &format!("{name}.attn.qkv"))?,
            proj: Linear::load(store, &format!("{name}.attn.proj"))?,
            norm2: LayerNorm::load(store, &format!("{name}.norm2"))?,
            fc1: Linear::load(store, &format!("{name}.mlp.fc1"))?,
            fc2: Linear::load(store, &format!("{name}.mlp.fc2"))?,
            heads,
        })
    }

    fn attention(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let hd = d / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((b, t, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.i(0)?.contiguous()?;
        let k = qkv.i(1)?.contiguous()?;
        let v = qkv.i(2)?.contiguous()?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (hd as f64).sqrt()))?;
        let attn = softmax_last(&scores)?;
        let y = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, t, d))?;
        self.proj.forward(&y)
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = (x + self.attention(&self.norm1.forward(x)?)?)?;
        let h = self.fc1.forward(&self.norm2.forward(&x)?)?.gelu()?;
        Ok((&x + self.fc2.forward(&h)?)?)
    }
}

/// Pre-norm transformer encoder over non-overlapping patches with a
/// prepended class token. Used for both ViT and the masked-autoencoder
/// encoder; the latter simply keeps every patch (mask ratio 0).
pub(super) struct Encoder {
    config: BackboneConfig,
    patch_embed: Conv2d,
    cls_token: Tensor,
    pos_embed: Tensor,
    blocks: Vec<Block>,
    norm: LayerNorm,
}

impl Encoder {
    pub fn load(config: &BackboneConfig, store: &ParamStore, prefix: &str) -> Result<Self> {
        let p = |n: &str| format!("{prefix}{n}");
        Ok(Self {
            config: config.clone(),
            patch_embed: Conv2d::load(store, &p("patch_embed.proj"), config.patch_size, 0)?,
            cls_token: store.get(&p("cls_token"))?,
            pos_embed: store.get(&p("pos_embed"))?,
            blocks: (0..config.hidden_layers)
                .map(|i| Block::load(store, &p(&format!("blocks.{i}")), config.attention_heads))
                .collect::<Result<_>>()?,
            norm: LayerNorm::load(store, &p("norm"))?,
        })
    }

    /// Token sequence after the final norm, `(B, 1 + patches, D)`.
    pub fn tokens(&self, images: &Tensor) -> Result<Tensor> {
        let b = images.dim(0)?;
        let d = self.config.feature_dim;
        let patches = self.patch_embed.forward(images)?.flatten_from(2)?.transpose(1, 2)?;
        let cls = self.cls_token.broadcast_as((b, 1, d))?;
        let mut x = Tensor::cat(&[&cls, &patches], 1)?.broadcast_add(&self.pos_embed)?;
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        self.norm.forward(&x)
    }
}

impl FeatureExtractor for Encoder {
    fn features(&self, images: &Tensor) -> Result<Tensor> {
        let x = self.tokens(images)?;
        let t = x.dim(1)?;
        match self.config.pooling {
            Pooling::ClassToken => Ok(x.i((.., 0, ..))?),
            Pooling::MeanPatch => {
                if t < 2 {
                    return Err(Error::Shape {
                        expected: "at least one patch token".to_string(),
                        actual: format!("{t} tokens"),
                    });
                }
                Ok(x.narrow(1, 1, t - 1)?.mean(1)?)
            }
        }
    }

    fn summary(&self) -> BackboneSummary {
        BackboneSummary {
            kind: self.config.kind,
            attention_heads: self.config.attention_heads,
            blocks: self.blocks.len(),
            feature_dim: self.config.feature_dim,
            image_size: self.config.image_size,
        }
    }
}
