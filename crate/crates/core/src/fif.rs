//! Filling-in-Frames masks: a random contiguous band of time frames is zeroed
//! across all frequencies during training, and the generator has to infer the
//! missing content. At inference the mask is all ones.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FifConfig {
    pub enabled: bool,
    pub max_band_width: usize,
}

impl Default for FifConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_band_width: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FifMask {
    pub mask: Array2<f32>,
    pub band_start: usize,
    pub band_width: usize,
}

impl FifMask {
    fn with_band(n_freq: usize, width: usize, band_start: usize, band_width: usize) -> Self {
        let mut mask = Array2::ones((n_freq, width));
        for t in band_start..band_start + band_width {
            mask.column_mut(t).fill(0.0);
        }
        Self {
            mask,
            band_start,
            band_width,
        }
    }

    pub fn component_width(&self) -> usize {
        self.mask.ncols()
    }

    /// Elementwise product with `component`.
    pub fn apply(&self, component: &Array2<f32>) -> Result<Array2<f32>> {
        if component.dim() != self.mask.dim() {
            return Err(shape_err!(
                "mask {:?} does not match component {:?}",
                self.mask.dim(),
                component.dim()
            ));
        }
        Ok(component * &self.mask)
    }
}

/// Draws `band_width ~ U{0..=max_band_width}`, then
/// `band_start ~ U{0..=component_width - band_width}`.
pub fn sample_mask<R: Rng + ?Sized>(
    n_freq: usize,
    component_width: usize,
    max_band_width: usize,
    rng: &mut R,
) -> Result<FifMask> {
    if max_band_width > component_width {
        return Err(config_err!(
            "max_band_width {max_band_width} exceeds component width {component_width}"
        ));
    }
    let band_width = rng.random_range(0..=max_band_width);
    let band_start = rng.random_range(0..=component_width - band_width);
    Ok(FifMask::with_band(n_freq, component_width, band_start, band_width))
}

pub fn sample_mask_seeded(
    n_freq: usize,
    component_width: usize,
    max_band_width: usize,
    seed: u64,
) -> Result<FifMask> {
    sample_mask(
        n_freq,
        component_width,
        max_band_width,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

pub fn inference_mask(n_freq: usize, component_width: usize) -> FifMask {
    FifMask::with_band(n_freq, component_width, 0, 0)
}
