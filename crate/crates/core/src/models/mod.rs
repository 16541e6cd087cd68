//! Generator, discriminator and patch-feature networks for the four GAN
//! families. Every network consumes and produces `(B, C, n_freq, width)`
//! tensors in the symmetric `[-1, 1]` model range.

pub mod discriminators;
pub mod generators;
pub mod layers;
pub mod patch;
pub mod unfold;

use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Tensor};
use candle_nn::VarMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub use discriminators::{build_discriminator, Discriminator, DiscriminatorRole, DiscriminatorSpec};
pub use generators::{build_generator, Generator, GeneratorSpec};
pub use patch::{extract_patch_features, sample_locations, tap_sizes, FeatureExtractorSpec, PatchHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "speech_attention")]
    SpeechAttention,
    #[serde(rename = "mask_cyclegan")]
    MaskCycleGan,
    #[serde(rename = "simugan")]
    SimuGan,
    #[serde(rename = "speech2speech")]
    Speech2Speech,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::SpeechAttention,
        Family::MaskCycleGan,
        Family::SimuGan,
        Family::Speech2Speech,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::SpeechAttention => "speech_attention",
            Family::MaskCycleGan => "mask_cyclegan",
            Family::SimuGan => "simugan",
            Family::Speech2Speech => "speech2speech",
        }
    }

    /// Families whose generators take a FIF mask channel.
    pub fn uses_fif(self) -> bool {
        matches!(self, Family::SpeechAttention | Family::MaskCycleGan)
    }

    /// Families trained with two generators and a cycle path.
    pub fn is_cycle(self) -> bool {
        self.uses_fif()
    }

    pub fn requires_parallel(self) -> bool {
        self == Family::Speech2Speech
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                config_err!(
                    "unknown model family {s:?}; expected speech_attention, mask_cyclegan, simugan or speech2speech"
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub res_blocks: usize,
    /// Foreground attention/content masks of the attention generator.
    pub attention_heads: usize,
    /// Down/up levels of the speech2speech encoder-decoder.
    pub unet_depth: usize,
    pub disc_channels: usize,
    pub disc_layers: usize,
    /// Encoder stages tapped for PatchNCE: 0 is the stem, 1 and 2 the
    /// downsampling convolutions, 3.. the residual blocks.
    pub nce_layers: Vec<usize>,
    pub nce_patches: usize,
    pub nce_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            res_blocks: 9,
            attention_heads: 10,
            unet_depth: 8,
            disc_channels: 64,
            disc_layers: 3,
            nce_layers: vec![0, 1, 2, 3],
            nce_patches: 256,
            nce_dim: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.disc_channels == 0 {
            return Err(config_err!("channel counts must be positive"));
        }
        if self.attention_heads == 0 {
            return Err(config_err!("attention_heads must be positive"));
        }
        if self.unet_depth == 0 || self.disc_layers == 0 {
            return Err(config_err!("unet_depth and disc_layers must be positive"));
        }
        if self.nce_layers.is_empty() || self.nce_patches == 0 || self.nce_dim == 0 {
            return Err(config_err!("PatchNCE needs taps, patches and a dimension"));
        }
        if let Some(&l) = self.nce_layers.iter().find(|&&l| l >= 3 + self.res_blocks) {
            return Err(config_err!(
                "nce layer {l} is past the encoder ({} stages)",
                3 + self.res_blocks
            ));
        }
        Ok(())
    }
}

/// Re-draws every variable of `varmap` from a seeded generator, visiting
/// variables in name order: biases 0, normalization gains N(1, 0.02), other
/// weights N(0, 0.02).
pub fn init_weights(varmap: &VarMap, seed: u64) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Normal::new(0.0f32, 0.02).expect("valid normal");
    for name in names {
        let var = &data[name];
        let shape = var.shape().clone();
        let n = shape.elem_count();
        let values: Vec<f32> = if name.ends_with("bias") {
            vec![0.0; n]
        } else if shape.rank() == 1 {
            (0..n).map(|_| 1.0 + weights.sample(&mut rng)).collect()
        } else {
            (0..n).map(|_| weights.sample(&mut rng)).collect()
        };
        let t = Tensor::from_vec(values, shape, var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
    }
    Ok(())
}

/// Sorted `(name, shape)` list of the variables under `prefix`.
pub fn parameter_shapes(varmap: &VarMap, prefix: &str) -> Vec<(String, Vec<usize>)> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let dot = format!("{prefix}.");
    let mut out: Vec<(String, Vec<usize>)> = data
        .iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(&dot)
                .map(|rest| (rest.to_string(), v.dims().to_vec()))
        })
        .collect();
    out.sort();
    out
}

/// Byte-scaled components to a `(N, 1, n_freq, width)` model-range tensor.
pub fn components_to_tensor(
    components: &[ndarray::Array2<f32>],
    device: &candle_core::Device,
) -> Result<Tensor> {
    let first = components
        .first()
        .ok_or_else(|| Error::Shape("no components".into()))?;
    let (h, w) = first.dim();
    let mut flat = Vec::with_capacity(components.len() * h * w);
    for c in components {
        if c.dim() != (h, w) {
            return Err(Error::Shape(format!(
                "component {:?} differs from {:?}",
                c.dim(),
                (h, w)
            )));
        }
        flat.extend(c.iter().map(|&v| crate::pipeline::byte_to_unit(v)));
    }
    Ok(Tensor::from_vec(flat, (components.len(), 1, h, w), device)?)
}

/// Inverse of [`components_to_tensor`]; values are clamped to the byte range.
pub fn tensor_to_components(t: &Tensor) -> Result<Vec<ndarray::Array2<f32>>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(Error::Shape(format!("expected one channel, got {c}")));
    }
    let flat: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    Ok(flat
        .chunks_exact(h * w)
        .take(n)
        .map(|chunk| {
            ndarray::Array2::from_shape_fn((h, w), |(r, col)| {
                crate::pipeline::unit_to_byte(chunk[r * w + col])
            })
        })
        .collect())
}
