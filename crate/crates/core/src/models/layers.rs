//! Building blocks shared by the generators and discriminators.

use candle_core::{Module, Tensor};
use candle_nn::{GroupNorm, VarBuilder};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    None,
    Relu,
    LeakyRelu,
    Tanh,
    /// Gated linear unit over the channel axis; halves the channel count.
    Glu,
}

impl Act {
    pub fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Act::None => x.clone(),
            Act::Relu => x.relu()?,
            Act::LeakyRelu => candle_nn::ops::leaky_relu(x, 0.2)?,
            Act::Tanh => x.tanh()?,
            Act::Glu => glu(x)?,
        })
    }
}

pub fn glu(x: &Tensor) -> Result<Tensor> {
    let c = x.dim(1)? / 2;
    let a = x.narrow(1, 0, c)?;
    let b = x.narrow(1, c, c)?;
    Ok((a * candle_nn::ops::sigmoid(&b)?)?)
}

/// `(B, C*r*r, H, W) -> (B, C, H*r, W*r)`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let out_c = c / (r * r);
    Ok(x.reshape((b, out_c, r, r, h, w))?
        .permute((0, 1, 4, 2, 5, 3))?
        .reshape((b, out_c, h * r, w * r))?)
}

/// Nearest-neighbour 2x upsampling as a broadcast, so its gradient is a sum.
pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    Ok(x.reshape((b, c, h, 1, w, 1))?
        .broadcast_as((b, c, h, 2, w, 2))?
        .reshape((b, c, 2 * h, 2 * w))?)
}

/// Instance normalization with a learned affine transform.
pub fn instance_norm(channels: usize, vb: VarBuilder) -> Result<GroupNorm> {
    Ok(candle_nn::group_norm(channels, channels, 1e-5, vb)?)
}

/// 2-D convolution with rectangular kernels and zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    pad: (usize, usize),
}

impl Conv2d {
    /// "Same" padding for odd kernels, `k / 2 - 1` for even ones.
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let pad = |k: usize| if k % 2 == 1 { k / 2 } else { k / 2 - 1 };
        Self::with_padding(c_in, c_out, kernel, stride, (pad(kernel.0), pad(kernel.1)), vb)
    }

    pub fn with_padding(
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: (usize, usize),
        vb: VarBuilder,
    ) -> Result<Self> {
        Ok(Self {
            weight: vb.get((c_out, c_in, kernel.0, kernel.1), "weight")?,
            bias: vb.get(c_out, "bias")?,
            stride,
            pad,
        })
    }

    pub fn square(c_in: usize, c_out: usize, k: usize, stride: usize, vb: VarBuilder) -> Result<Self> {
        Self::new(c_in, c_out, (k, k), stride, vb)
    }
}

impl Module for Conv2d {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        super::unfold::conv2d(x, &self.weight, self.stride, self.pad)?
            .broadcast_add(&self.bias.reshape((1, (), 1, 1))?)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    weight: Tensor,
    bias: Tensor,
    pad: usize,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, k: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get((c_out, c_in, k), "weight")?,
            bias: vb.get(c_out, "bias")?,
            pad: k / 2,
        })
    }
}

impl Module for Conv1d {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, c, l) = x.dims3()?;
        let (o, _, k) = self.weight.dims3()?;
        super::unfold::conv2d(
            &x.reshape((b, c, 1, l))?,
            &self.weight.reshape((o, c, 1, k))?,
            1,
            (0, self.pad),
        )?
        .reshape((b, o, l))?
        .broadcast_add(&self.bias.reshape((1, (), 1))?)
    }
}

/// Optional nearest-neighbour 2x upsampling, convolution, optional
/// normalization, activation.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    upsample: bool,
    conv: Conv2d,
    norm: Option<GroupNorm>,
    act: Act,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockOpts {
    pub kernel: (usize, usize),
    pub stride: usize,
    pub upsample: bool,
    pub norm: bool,
    pub act: Act,
}

impl BlockOpts {
    pub fn new(k: usize, stride: usize, act: Act) -> Self {
        Self {
            kernel: (k, k),
            stride,
            upsample: false,
            norm: true,
            act,
        }
    }

    pub fn up(k: usize, act: Act) -> Self {
        Self {
            upsample: true,
            ..Self::new(k, 1, act)
        }
    }

    pub fn kernel(mut self, kh: usize, kw: usize) -> Self {
        self.kernel = (kh, kw);
        self
    }

    pub fn no_norm(mut self) -> Self {
        self.norm = false;
        self
    }
}

impl ConvBlock {
    /// `c_out` is the channel count after the activation; GLU blocks
    /// convolve to twice that.
    pub fn new(c_in: usize, c_out: usize, opts: BlockOpts, vb: VarBuilder) -> Result<Self> {
        let conv_out = if opts.act == Act::Glu { 2 * c_out } else { c_out };
        Ok(Self {
            upsample: opts.upsample,
            conv: Conv2d::new(c_in, conv_out, opts.kernel, opts.stride, vb.pp("conv"))?,
            norm: if opts.norm {
                Some(instance_norm(conv_out, vb.pp("norm"))?)
            } else {
                None
            },
            act: opts.act,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = if self.upsample {
            upsample2x(x)?
        } else {
            x.clone()
        };
        let mut y = self.conv.forward(&x)?;
        if let Some(norm) = &self.norm {
            y = norm.forward(&y)?;
        }
        self.act.apply(&y)
    }
}

/// Two 3x3 convolutions with instance norm and an identity shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock2d {
    a: ConvBlock,
    b: ConvBlock,
}

impl ResBlock2d {
    pub fn new(c: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            a: ConvBlock::new(c, c, BlockOpts::new(3, 1, Act::Relu), vb.pp("a"))?,
            b: ConvBlock::new(c, c, BlockOpts::new(3, 1, Act::None), vb.pp("b"))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok((x + self.b.forward(&self.a.forward(x)?)?)?)
    }
}

/// 1-D residual block with a gated first convolution.
#[derive(Debug, Clone)]
pub struct ResBlock1d {
    conv_a: Conv1d,
    norm_a: GroupNorm,
    conv_b: Conv1d,
    norm_b: GroupNorm,
}

impl ResBlock1d {
    pub fn new(c: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            conv_a: Conv1d::new(c, 2 * c, 3, vb.pp("a.conv"))?,
            norm_a: instance_norm(2 * c, vb.pp("a.norm"))?,
            conv_b: Conv1d::new(c, c, 3, vb.pp("b.conv"))?,
            norm_b: instance_norm(c, vb.pp("b.norm"))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = glu(&self.norm_a.forward(&self.conv_a.forward(x)?)?)?;
        let h = self.norm_b.forward(&self.conv_b.forward(&h)?)?;
        Ok((x + h)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use candle_nn::VarMap;

    #[test]
    fn pixel_shuffle_moves_channels_to_space() {
        let x = Tensor::arange(0f32, 8.0, &Device::Cpu)
            .unwrap()
            .reshape((1, 4, 1, 2))
            .unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 4]);
        // channel k of the input lands at offset (k / 2, k % 2) of each 2x2 cell
        let rows: Vec<Vec<f32>> = y.squeeze(0).unwrap().squeeze(0).unwrap().to_vec2().unwrap();
        assert_eq!(rows, vec![vec![0.0, 2.0, 1.0, 3.0], vec![4.0, 6.0, 5.0, 7.0]]);
    }

    #[test]
    fn broadcast_upsample_matches_nearest() {
        let x = Tensor::randn(0f32, 1.0, (2, 3, 4, 5), &Device::Cpu).unwrap();
        let a = upsample2x(&x).unwrap();
        let b = x.upsample_nearest2d(8, 10).unwrap();
        let diff: f32 = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn glu_halves_channels() {
        let x = Tensor::zeros((2, 6, 3, 3), DType::F32, &Device::Cpu).unwrap();
        let y = glu(&x).unwrap();
        assert_eq!(y.dims(), &[2, 3, 3, 3]);
    }

    #[test]
    fn rectangular_conv_keeps_size() {
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        let conv = Conv2d::new(1, 2, (5, 15), 1, vb).unwrap();
        let x = Tensor::zeros((1, 1, 16, 20), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(conv.forward(&x).unwrap().dims(), &[1, 2, 16, 20]);
    }
}
