//! Patch embeddings for the contrastive objective: features are gathered at
//! chosen spatial locations of tapped encoder stages, projected by a
//! two-layer MLP and L2-normalized.

use candle_core::{Module, Tensor};
use candle_nn::{Linear, VarBuilder};
use rand::seq::index;
use rand::Rng;

use super::Generator;
use crate::error::{config_err, shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractorSpec {
    /// Encoder stages of the generator to tap.
    pub layers: Vec<usize>,
    pub patches_per_layer: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct PatchHead {
    spec: FeatureExtractorSpec,
    mlps: Vec<(Linear, Linear)>,
}

impl PatchHead {
    pub fn new(spec: &FeatureExtractorSpec, generator: &Generator, vb: VarBuilder) -> Result<Self> {
        let resnet = generator
            .as_resnet()
            .ok_or_else(|| config_err!("patch features need the resnet generator"))?;
        let mlps = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, &stage)| {
                let c = resnet.stage_channels(stage);
                Ok((
                    candle_nn::linear(c, spec.dim, vb.pp(format!("mlp.{i}.0")))?,
                    candle_nn::linear(spec.dim, spec.dim, vb.pp(format!("mlp.{i}.1")))?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: spec.clone(),
            mlps,
        })
    }

    pub fn spec(&self) -> &FeatureExtractorSpec {
        &self.spec
    }

    /// Projects `(B, C, H, W)` features at flat indices `locations` to
    /// `(B, N, dim)` unit vectors.
    fn project(&self, layer: usize, feat: &Tensor, locations: &[usize]) -> Result<Tensor> {
        let (b, c, h, w) = feat.dims4()?;
        if let Some(&bad) = locations.iter().find(|&&l| l >= h * w) {
            return Err(shape_err!("location {bad} outside a {h}x{w} feature map"));
        }
        let idx: Vec<u32> = locations.iter().map(|&l| l as u32).collect();
        let idx = Tensor::from_vec(idx, locations.len(), feat.device())?;
        let picked = feat
            .reshape((b, c, h * w))?
            .transpose(1, 2)?
            .contiguous()?
            .index_select(&idx, 1)?
            .reshape((b * locations.len(), c))?;
        let (l1, l2) = &self.mlps[layer];
        let z = l2.forward(&l1.forward(&picked)?.relu()?)?;
        // clamp before the square root so all-zero rows keep a finite gradient
        let norm = z.sqr()?.sum_keepdim(1)?.maximum(1e-24)?.sqrt()?;
        Ok(z.broadcast_div(&norm)?.reshape((b, locations.len(), self.spec.dim))?)
    }
}

/// Spatial size `(H, W)` of each tapped stage for an input batch shape.
pub fn tap_sizes(generator: &Generator, head: &PatchHead) -> Vec<(usize, usize)> {
    let spec = generator.spec();
    head.spec
        .layers
        .iter()
        .map(|&s| match s {
            0 => (spec.n_freq, spec.width),
            1 => (spec.n_freq / 2, spec.width / 2),
            _ => (spec.n_freq / 4, spec.width / 4),
        })
        .collect()
}

/// Draws up to `n` distinct flat locations per tap.
pub fn sample_locations<R: Rng + ?Sized>(
    sizes: &[(usize, usize)],
    n: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    sizes
        .iter()
        .map(|&(h, w)| index::sample(rng, h * w, n.min(h * w)).into_vec())
        .collect()
}

/// Per-layer `(B, N, dim)` embeddings of `image` (already in generator input
/// form) at `locations`.
pub fn extract_patch_features(
    head: &PatchHead,
    generator: &Generator,
    image: &Tensor,
    locations: &[Vec<usize>],
) -> Result<Vec<Tensor>> {
    let resnet = generator
        .as_resnet()
        .ok_or_else(|| config_err!("patch features need the resnet generator"))?;
    if locations.len() != head.spec.layers.len() {
        return Err(shape_err!(
            "{} location sets for {} layers",
            locations.len(),
            head.spec.layers.len()
        ));
    }
    let feats = resnet.encode(image, &head.spec.layers)?;
    feats
        .iter()
        .zip(locations)
        .enumerate()
        .map(|(i, (f, loc))| head.project(i, f, loc))
        .collect()
}
