//! The four generator architectures.

use candle_core::{Module, Tensor};
use candle_nn::VarBuilder;

use super::layers::{pixel_shuffle, Act, BlockOpts, Conv1d, Conv2d, ConvBlock, ResBlock1d, ResBlock2d};
use super::{Family, ModelConfig};
use crate::error::{config_err, shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    /// 1, or 2 when a FIF mask channel is appended.
    pub in_channels: usize,
    pub n_freq: usize,
    pub width: usize,
    pub base_channels: usize,
    pub res_blocks: usize,
    /// Foreground attention/content masks (attention family only).
    pub attention_heads: usize,
    pub unet_depth: usize,
}

impl GeneratorSpec {
    pub fn new(family: Family, model: &ModelConfig, n_freq: usize, width: usize) -> Self {
        Self {
            family,
            in_channels: if family.uses_fif() { 2 } else { 1 },
            n_freq,
            width,
            base_channels: model.base_channels,
            res_blocks: model.res_blocks,
            attention_heads: model.attention_heads,
            unet_depth: model.unet_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.in_channels) {
            return Err(config_err!("in_channels must be 1 or 2, got {}", self.in_channels));
        }
        let factor = match self.family {
            Family::Speech2Speech => 1usize << self.unet_depth,
            _ => 4,
        };
        if self.n_freq % factor != 0 || self.width % factor != 0 {
            return Err(config_err!(
                "{} generator needs component sides divisible by {factor}, got {}x{}",
                self.family,
                self.n_freq,
                self.width
            ));
        }
        if self.base_channels == 0 || self.attention_heads == 0 {
            return Err(config_err!("channel and head counts must be positive"));
        }
        Ok(())
    }
}

/// Encoder, residual blocks, then separate content and attention decoders.
/// The output mixes `attention_heads` content maps and the input spectrogram
/// with per-pixel softmax weights.
#[derive(Debug, Clone)]
pub struct AttentionGenerator {
    encoder: Vec<ConvBlock>,
    res: Vec<ResBlock2d>,
    content: Vec<ConvBlock>,
    attention: Vec<ConvBlock>,
    content_out: Conv2d,
    attention_out: Conv2d,
}

impl AttentionGenerator {
    fn new(spec: &GeneratorSpec, vb: VarBuilder) -> Result<Self> {
        let c = spec.base_channels;
        let encoder = vec![
            ConvBlock::new(spec.in_channels, c, BlockOpts::new(7, 1, Act::Relu), vb.pp("enc.0"))?,
            ConvBlock::new(c, 2 * c, BlockOpts::new(3, 2, Act::Relu), vb.pp("enc.1"))?,
            ConvBlock::new(2 * c, 4 * c, BlockOpts::new(3, 2, Act::Relu), vb.pp("enc.2"))?,
        ];
        let res = (0..spec.res_blocks)
            .map(|i| ResBlock2d::new(4 * c, vb.pp(format!("res.{i}"))))
            .collect::<Result<_>>()?;
        let decoder = |name: &str| -> Result<Vec<ConvBlock>> {
            Ok(vec![
                ConvBlock::new(4 * c, 2 * c, BlockOpts::up(3, Act::Relu), vb.pp(format!("{name}.0")))?,
                ConvBlock::new(2 * c, c, BlockOpts::up(3, Act::Relu), vb.pp(format!("{name}.1")))?,
            ])
        };
        Ok(Self {
            encoder,
            res,
            content: decoder("content")?,
            attention: decoder("attention")?,
            content_out: Conv2d::square(c, spec.attention_heads, 7, 1, vb.pp("content.out"))?,
            attention_out: Conv2d::square(c, spec.attention_heads + 1, 1, 1, vb.pp("attention.out"))?,
        })
    }

    /// Output and the `(B, heads + 1, H, W)` attention maps; the last map
    /// weights the input spectrogram.
    pub fn forward_with_attention(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = x.clone();
        for block in &self.encoder {
            h = block.forward(&h)?;
        }
        for block in &self.res {
            h = block.forward(&h)?;
        }
        let mut content = h.clone();
        for block in &self.content {
            content = block.forward(&content)?;
        }
        let content = self.content_out.forward(&content)?.tanh()?;
        let mut attn = h;
        for block in &self.attention {
            attn = block.forward(&attn)?;
        }
        let attn = candle_nn::ops::softmax(&self.attention_out.forward(&attn)?, 1)?;
        let heads = content.dim(1)?;
        let spectrogram = x.narrow(1, 0, 1)?;
        let foreground = (&content * attn.narrow(1, 0, heads)?)?.sum_keepdim(1)?;
        let background = (spectrogram * attn.narrow(1, heads, 1)?)?;
        Ok(((foreground + background)?, attn))
    }
}

/// 2-1-2D convolutional generator with gated activations: 2-D downsampling,
/// 1-D residual blocks over time with frequency folded into channels, 2-D
/// upsampling through pixel shuffle.
#[derive(Debug, Clone)]
pub struct MaskCycleGenerator {
    stem: ConvBlock,
    down: Vec<ConvBlock>,
    to_1d: Conv1d,
    to_1d_norm: candle_nn::GroupNorm,
    res: Vec<ResBlock1d>,
    to_2d: Conv1d,
    to_2d_norm: candle_nn::GroupNorm,
    up: Vec<(Conv2d, candle_nn::GroupNorm)>,
    out: Conv2d,
    folded: (usize, usize),
}

impl MaskCycleGenerator {
    fn new(spec: &GeneratorSpec, vb: VarBuilder) -> Result<Self> {
        let c = spec.base_channels;
        let c2 = 2 * c;
        let hidden = 4 * c;
        let f4 = spec.n_freq / 4;
        let folded = c2 * f4;
        let up_block = |c_in: usize, c_out: usize, name: &str| -> Result<(Conv2d, candle_nn::GroupNorm)> {
            Ok((
                Conv2d::square(c_in, 4 * 2 * c_out, 5, 1, vb.pp(format!("{name}.conv")))?,
                super::layers::instance_norm(2 * c_out, vb.pp(format!("{name}.norm")))?,
            ))
        };
        Ok(Self {
            stem: ConvBlock::new(
                spec.in_channels,
                c,
                BlockOpts::new(5, 1, Act::Glu).kernel(5, 15).no_norm(),
                vb.pp("stem"),
            )?,
            down: vec![
                ConvBlock::new(c, c2, BlockOpts::new(5, 2, Act::Glu), vb.pp("down.0"))?,
                ConvBlock::new(c2, c2, BlockOpts::new(5, 2, Act::Glu), vb.pp("down.1"))?,
            ],
            to_1d: Conv1d::new(folded, hidden, 1, vb.pp("to_1d.conv"))?,
            to_1d_norm: super::layers::instance_norm(hidden, vb.pp("to_1d.norm"))?,
            res: (0..spec.res_blocks)
                .map(|i| ResBlock1d::new(hidden, vb.pp(format!("res.{i}"))))
                .collect::<Result<_>>()?,
            to_2d: Conv1d::new(hidden, folded, 1, vb.pp("to_2d.conv"))?,
            to_2d_norm: super::layers::instance_norm(folded, vb.pp("to_2d.norm"))?,
            up: vec![up_block(c2, c2, "up.0")?, up_block(c2, c, "up.1")?],
            out: Conv2d::new(c, 1, (5, 15), 1, vb.pp("out"))?,
            folded: (c2, f4),
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.stem.forward(x)?;
        for block in &self.down {
            h = block.forward(&h)?;
        }
        let (b, _, _, t) = h.dims4()?;
        let (c2, f4) = self.folded;
        let mut h1 = self.to_1d_norm.forward(&self.to_1d.forward(&h.reshape((b, c2 * f4, t))?)?)?;
        for block in &self.res {
            h1 = block.forward(&h1)?;
        }
        let h2 = self.to_2d_norm.forward(&self.to_2d.forward(&h1)?)?;
        let mut h = h2.reshape((b, c2, f4, t))?;
        for (conv, norm) in &self.up {
            let y = pixel_shuffle(&conv.forward(&h)?, 2)?;
            h = super::layers::glu(&norm.forward(&y)?)?;
        }
        Ok(self.out.forward(&h)?.tanh()?)
    }
}

/// ResNet encoder-decoder whose encoder stages can be tapped for patch
/// features.
#[derive(Debug, Clone)]
pub struct ResnetGenerator {
    encoder: Vec<ConvBlock>,
    res: Vec<ResBlock2d>,
    decoder: Vec<ConvBlock>,
    out: Conv2d,
    base_channels: usize,
}

impl ResnetGenerator {
    fn new(spec: &GeneratorSpec, vb: VarBuilder) -> Result<Self> {
        let c = spec.base_channels;
        Ok(Self {
            encoder: vec![
                ConvBlock::new(spec.in_channels, c, BlockOpts::new(7, 1, Act::Relu), vb.pp("enc.0"))?,
                ConvBlock::new(c, 2 * c, BlockOpts::new(3, 2, Act::Relu), vb.pp("enc.1"))?,
                ConvBlock::new(2 * c, 4 * c, BlockOpts::new(3, 2, Act::Relu), vb.pp("enc.2"))?,
            ],
            res: (0..spec.res_blocks)
                .map(|i| ResBlock2d::new(4 * c, vb.pp(format!("res.{i}"))))
                .collect::<Result<_>>()?,
            decoder: vec![
                ConvBlock::new(4 * c, 2 * c, BlockOpts::up(3, Act::Relu), vb.pp("dec.0"))?,
                ConvBlock::new(2 * c, c, BlockOpts::up(3, Act::Relu), vb.pp("dec.1"))?,
            ],
            out: Conv2d::square(c, 1, 7, 1, vb.pp("out"))?,
            base_channels: c,
        })
    }

    /// Channel count of encoder stage `stage`.
    pub fn stage_channels(&self, stage: usize) -> usize {
        let c = self.base_channels;
        match stage {
            0 => c,
            1 => 2 * c,
            _ => 4 * c,
        }
    }

    /// Activations after the requested encoder stages, in request order.
    pub fn encode(&self, x: &Tensor, stages: &[usize]) -> Result<Vec<Tensor>> {
        let last = stages.iter().copied().max().unwrap_or(0);
        let n_stages = self.encoder.len() + self.res.len();
        if last >= n_stages {
            return Err(shape_err!("encoder has {n_stages} stages, tap {last} requested"));
        }
        let mut taps = vec![None; last + 1];
        let mut h = x.clone();
        for (i, tap) in taps.iter_mut().enumerate() {
            h = if i < self.encoder.len() {
                self.encoder[i].forward(&h)?
            } else {
                self.res[i - self.encoder.len()].forward(&h)?
            };
            *tap = Some(h.clone());
        }
        Ok(stages
            .iter()
            .map(|&s| taps[s].clone().expect("computed above"))
            .collect())
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for block in &self.encoder {
            h = block.forward(&h)?;
        }
        for block in &self.res {
            h = block.forward(&h)?;
        }
        for block in &self.decoder {
            h = block.forward(&h)?;
        }
        Ok(self.out.forward(&h)?.tanh()?)
    }
}

/// Encoder-decoder with skip connections between mirrored levels.
#[derive(Debug, Clone)]
pub struct UnetGenerator {
    down: Vec<ConvBlock>,
    up: Vec<ConvBlock>,
}

impl UnetGenerator {
    fn new(spec: &GeneratorSpec, vb: VarBuilder) -> Result<Self> {
        let depth = spec.unet_depth;
        let ch = |i: usize| spec.base_channels * (1usize << i.min(3));
        let mut down = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i == 0 { spec.in_channels } else { ch(i - 1) };
            let act = if i + 1 == depth { Act::Relu } else { Act::LeakyRelu };
            let mut opts = BlockOpts::new(4, 2, act);
            if i == 0 || i + 1 == depth {
                opts = opts.no_norm();
            }
            down.push(ConvBlock::new(c_in, ch(i), opts, vb.pp(format!("down.{i}")))?);
        }
        let mut up = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i + 1 == depth { ch(i) } else { 2 * ch(i) };
            let block = if i == 0 {
                ConvBlock::new(c_in, 1, BlockOpts::up(3, Act::Tanh).no_norm(), vb.pp("up.0"))?
            } else {
                ConvBlock::new(c_in, ch(i - 1), BlockOpts::up(3, Act::Relu), vb.pp(format!("up.{i}")))?
            };
            up.push(block);
        }
        Ok(Self { down, up })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        // each down block ends in the activation its decoder partner expects
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = x.clone();
        for block in &self.down {
            h = block.forward(&h)?;
            skips.push(h.clone());
        }
        let depth = self.down.len();
        let mut h = skips[depth - 1].clone();
        for i in (0..depth).rev() {
            if i + 1 < depth {
                h = Tensor::cat(&[&h, &skips[i]], 1)?;
            }
            h = self.up[i].forward(&h)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
enum Net {
    Attention(AttentionGenerator),
    MaskCycle(MaskCycleGenerator),
    Resnet(ResnetGenerator),
    Unet(UnetGenerator),
}

#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    net: Net,
}

pub fn build_generator(spec: &GeneratorSpec, vb: VarBuilder) -> Result<Generator> {
    spec.validate()?;
    let net = match spec.family {
        Family::SpeechAttention => Net::Attention(AttentionGenerator::new(spec, vb)?),
        Family::MaskCycleGan => Net::MaskCycle(MaskCycleGenerator::new(spec, vb)?),
        Family::SimuGan => Net::Resnet(ResnetGenerator::new(spec, vb)?),
        Family::Speech2Speech => Net::Unet(UnetGenerator::new(spec, vb)?),
    };
    Ok(Generator {
        spec: spec.clone(),
        net,
    })
}

impl Generator {
    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Raw forward pass on a tensor that already has `in_channels` channels.
    pub fn forward_raw(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.spec.in_channels || h != self.spec.n_freq || w != self.spec.width {
            return Err(shape_err!(
                "generator expects (B, {}, {}, {}), got {:?}",
                self.spec.in_channels,
                self.spec.n_freq,
                self.spec.width,
                x.dims()
            ));
        }
        match &self.net {
            Net::Attention(g) => Ok(g.forward_with_attention(x)?.0),
            Net::MaskCycle(g) => g.forward(x),
            Net::Resnet(g) => g.forward(x),
            Net::Unet(g) => g.forward(x),
        }
    }

    /// Builds the network input from a one-channel spectrogram batch. Two
    /// channel generators get `x * mask` plus the mask; without a mask the
    /// inference mask (all ones) is used.
    pub fn input(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        if self.spec.in_channels == 1 {
            return Ok(x.clone());
        }
        let ones;
        let mask = match mask {
            Some(m) => m,
            None => {
                ones = x.ones_like()?;
                &ones
            }
        };
        if mask.dims() != x.dims() {
            return Err(shape_err!("mask {:?} vs input {:?}", mask.dims(), x.dims()));
        }
        Ok(Tensor::cat(&[&(x * mask)?, mask], 1)?)
    }

    /// Translates a `(B, 1, H, W)` batch, optionally with a FIF mask.
    pub fn translate(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        self.forward_raw(&self.input(x, mask)?)
    }

    /// Attention maps of the attention family, `None` otherwise.
    pub fn attention_maps(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Option<Tensor>> {
        match &self.net {
            Net::Attention(g) => Ok(Some(g.forward_with_attention(&self.input(x, mask)?)?.1)),
            _ => Ok(None),
        }
    }

    pub fn as_resnet(&self) -> Option<&ResnetGenerator> {
        match &self.net {
            Net::Resnet(g) => Some(g),
            _ => None,
        }
    }
}

impl Module for Generator {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        self.translate(x, None)
            .map_err(|e| candle_core::Error::Msg(e.to_string()))
    }
}
