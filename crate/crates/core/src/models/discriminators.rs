//! Patch discriminators. Each maps `(B, C, H, W)` to a `(B, 1, h, w)` map of
//! per-patch real/fake scores.

use candle_core::{Module, Tensor};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use super::layers::{Act, BlockOpts, Conv2d, ConvBlock};
use super::{Family, ModelConfig};
use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorRole {
    Primary,
    /// Judges cycled outputs against real inputs.
    SecondAdversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorSpec {
    pub family: Family,
    pub role: DiscriminatorRole,
    /// 2 for the conditional discriminator that sees (input, output) pairs.
    pub in_channels: usize,
    pub base_channels: usize,
    pub n_layers: usize,
}

impl DiscriminatorSpec {
    pub fn new(family: Family, role: DiscriminatorRole, model: &ModelConfig) -> Self {
        Self {
            family,
            role,
            in_channels: if family == Family::Speech2Speech { 2 } else { 1 },
            base_channels: model.disc_channels,
            n_layers: model.disc_layers,
        }
    }
}

/// Stack of strided convolutions. With three strided layers and 4x4 kernels
/// the receptive field of each output score is 70x70.
#[derive(Debug, Clone)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    blocks: Vec<ConvBlock>,
    out: Conv2d,
}

pub fn build_discriminator(spec: &DiscriminatorSpec, vb: VarBuilder) -> Result<Discriminator> {
    if spec.n_layers == 0 || spec.base_channels == 0 || spec.in_channels == 0 {
        return Err(config_err!("discriminator needs layers, channels and inputs"));
    }
    let c = spec.base_channels;
    let ch = |i: usize| c * (1usize << i.min(3));
    let mut blocks = Vec::with_capacity(spec.n_layers + 1);
    match spec.family {
        Family::MaskCycleGan => {
            // gated variant: 3x3 kernels and GLU activations
            blocks.push(ConvBlock::new(
                spec.in_channels,
                c,
                BlockOpts::new(3, 1, Act::Glu).no_norm(),
                vb.pp("blocks.0"),
            )?);
            for i in 1..=spec.n_layers {
                blocks.push(ConvBlock::new(
                    ch(i - 1),
                    ch(i),
                    BlockOpts::new(3, 2, Act::Glu),
                    vb.pp(format!("blocks.{i}")),
                )?);
            }
            let last = ch(spec.n_layers);
            blocks.push(ConvBlock::new(
                last,
                last,
                BlockOpts::new(3, 1, Act::Glu).kernel(1, 5),
                vb.pp(format!("blocks.{}", spec.n_layers + 1)),
            )?);
            let out = Conv2d::new(last, 1, (1, 3), 1, vb.pp("out"))?;
            Ok(Discriminator {
                spec: spec.clone(),
                blocks,
                out,
            })
        }
        _ => {
            blocks.push(ConvBlock::new(
                spec.in_channels,
                c,
                BlockOpts::new(4, 2, Act::LeakyRelu).no_norm(),
                vb.pp("blocks.0"),
            )?);
            for i in 1..spec.n_layers {
                blocks.push(ConvBlock::new(
                    ch(i - 1),
                    ch(i),
                    BlockOpts::new(4, 2, Act::LeakyRelu),
                    vb.pp(format!("blocks.{i}")),
                )?);
            }
            let last = ch(spec.n_layers);
            blocks.push(ConvBlock::new(
                ch(spec.n_layers - 1),
                last,
                BlockOpts::new(4, 1, Act::LeakyRelu),
                vb.pp(format!("blocks.{}", spec.n_layers)),
            )?);
            let out = Conv2d::with_padding(last, 1, (4, 4), 1, (1, 1), vb.pp("out"))?;
            Ok(Discriminator {
                spec: spec.clone(),
                blocks,
                out,
            })
        }
    }
}

impl Discriminator {
    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }
}

impl Module for Discriminator {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block
                .forward(&h)
                .map_err(|e| candle_core::Error::Msg(e.to_string()))?;
        }
        self.out.forward(&h)
    }
}
