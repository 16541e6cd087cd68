//! Conversion between linear magnitude spectrograms and the fixed-size,
//! 8-bit-scaled, vertically flipped components the models consume.

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::error::{shape_err, Result};

/// Reference levels of the linear dB -> [0, 255] map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbScale {
    pub min_db: f64,
    pub max_db: f64,
}

impl DbScale {
    pub fn range(&self) -> f64 {
        self.max_db - self.min_db
    }

    fn to_byte(&self, db: f64) -> f32 {
        let v = (db.clamp(self.min_db, self.max_db) - self.min_db) / self.range() * 255.0;
        v.round() as f32
    }

    fn from_byte(&self, v: f32) -> f64 {
        self.min_db + (v.clamp(0.0, 255.0) as f64) / 255.0 * self.range()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentBatch {
    /// Each component is `(n_freq, component_width)` with values in `[0, 255]`.
    pub components: Vec<Array2<f32>>,
    pub pad_frames: usize,
    pub scale: DbScale,
    pub flipped: bool,
}

impl ComponentBatch {
    pub fn component_width(&self) -> usize {
        self.components.first().map_or(0, |c| c.ncols())
    }

    /// Same metadata, new component values (e.g. a model's output).
    pub fn with_components(&self, components: Vec<Array2<f32>>) -> Result<Self> {
        if components.len() != self.components.len() {
            return Err(shape_err!(
                "expected {} components, got {}",
                self.components.len(),
                components.len()
            ));
        }
        for (a, b) in components.iter().zip(&self.components) {
            if a.dim() != b.dim() {
                return Err(shape_err!("component {:?} != {:?}", a.dim(), b.dim()));
            }
        }
        Ok(Self {
            components,
            ..self.clone()
        })
    }
}

/// Splits `frames` (freq x time) into components of exactly `width` frames.
///
/// The last component is completed with frames taken from the start of the
/// spectrogram, wrapping around again if the spectrogram is shorter than the
/// padding. Returns the components and the number of borrowed frames.
pub fn componentize<T: Clone>(frames: &Array2<T>, width: usize) -> (Vec<Array2<T>>, usize) {
    assert!(width > 0, "component width must be positive");
    let n = frames.ncols();
    assert!(n > 0, "cannot componentize an empty spectrogram");
    let pad = (width - n % width) % width;
    let count = n.div_ceil(width);
    let mut out = Vec::with_capacity(count);
    for c in 0..count {
        let start = c * width;
        if start + width <= n {
            out.push(frames.slice(s![.., start..start + width]).to_owned());
        } else {
            let cols: Vec<usize> = (start..start + width).map(|i| if i < n { i } else { (i - n) % n }).collect();
            out.push(frames.select(Axis(1), &cols));
        }
    }
    (out, pad)
}

/// Concatenates components along time and drops the final `pad_frames`.
pub fn decomponentize<T: Clone>(components: &[Array2<T>], pad_frames: usize) -> Result<Array2<T>> {
    let first = components
        .first()
        .ok_or_else(|| shape_err!("no components to concatenate"))?;
    let width = first.ncols();
    if pad_frames >= width {
        return Err(shape_err!("pad_frames {pad_frames} must be below component width {width}"));
    }
    if let Some(bad) = components.iter().find(|c| c.dim() != first.dim()) {
        return Err(shape_err!("component {:?} differs from {:?}", bad.dim(), first.dim()));
    }
    let views: Vec<_> = components.iter().map(|c| c.view()).collect();
    let full = concatenate(Axis(1), &views).map_err(|e| shape_err!("{e}"))?;
    let keep = full.ncols() - pad_frames;
    Ok(full.slice(s![.., ..keep]).to_owned())
}

fn flip_rows(m: &Array2<f32>) -> Array2<f32> {
    m.slice(s![..;-1, ..]).to_owned()
}

/// Linear magnitude -> dB -> clamp to `[max - db_floor, max]` -> [0, 255]
/// (rounded) -> flip so that the DC row is last -> componentize.
pub fn to_model_space(magnitude: &Array2<f64>, cfg: &PipelineConfig) -> ComponentBatch {
    let db = magnitude.mapv(|m| 20.0 * (m.max(0.0) + cfg.epsilon).log10());
    let max_db = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = DbScale {
        min_db: max_db - cfg.db_floor,
        max_db,
    };
    let bytes = db.mapv(|d| scale.to_byte(d));
    let flipped = flip_rows(&bytes);
    let (components, pad_frames) = componentize(&flipped, cfg.component_width);
    ComponentBatch {
        components,
        pad_frames,
        scale,
        flipped: true,
    }
}

/// Inverse of [`to_model_space`] up to 8-bit quantization.
pub fn from_model_space(
    batch: &ComponentBatch,
    original_n_frames: usize,
    cfg: &PipelineConfig,
) -> Result<Array2<f64>> {
    let joined = decomponentize(&batch.components, batch.pad_frames)?;
    if joined.ncols() != original_n_frames {
        return Err(shape_err!(
            "batch holds {} frames after removing padding, expected {original_n_frames}",
            joined.ncols()
        ));
    }
    let unflipped = if batch.flipped { flip_rows(&joined) } else { joined };
    Ok(unflipped.mapv(|v| (10f64.powf(batch.scale.from_byte(v) / 20.0) - cfg.epsilon).max(0.0)))
}

/// Maps byte-scaled values to the `[-1, 1]` range fed to the networks.
pub fn byte_to_unit(v: f32) -> f32 {
    v / 127.5 - 1.0
}

pub fn unit_to_byte(v: f32) -> f32 {
    ((v + 1.0) * 127.5).clamp(0.0, 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(rows: usize, cols: usize) -> Array2<u32> {
        Array::from_shape_fn((rows, cols), |(r, c)| (r * 10_000 + c) as u32)
    }

    #[test]
    fn componentize_600_by_256() {
        let m = ramp(3, 600);
        let (parts, pad) = componentize(&m, 256);
        assert_eq!(parts.len(), 3);
        assert_eq!(pad, 168);
        let last = &parts[2];
        // 600 - 512 = 88 real frames then frames [0, 168)
        assert_eq!(last.slice(s![.., ..88]), m.slice(s![.., 512..600]));
        assert_eq!(last.slice(s![.., 88..]), m.slice(s![.., ..168]));
    }

    #[test]
    fn componentize_exact_multiple() {
        let (parts, pad) = componentize(&ramp(2, 512), 256);
        assert_eq!((parts.len(), pad), (2, 0));
    }

    #[test]
    fn componentize_short_input_wraps() {
        let m = ramp(2, 100);
        let (parts, pad) = componentize(&m, 256);
        assert_eq!((parts.len(), pad), (1, 156));
        for c in 0..256 {
            assert_eq!(parts[0][[1, c]], m[[1, c % 100]]);
        }
    }

    #[test]
    fn decomponentize_inverts_examples() {
        for n in [600, 512, 100] {
            let m = ramp(4, n);
            let (parts, pad) = componentize(&m, 256);
            assert_eq!(decomponentize(&parts, pad).unwrap(), m);
        }
    }

    #[test]
    fn decomponentize_errors() {
        let parts = vec![ramp(2, 8)];
        assert_eq!(decomponentize(&parts, 0).unwrap(), parts[0]);
        assert!(decomponentize(&parts, 8).is_err());
        assert!(decomponentize::<u32>(&[], 0).is_err());
    }

    proptest! {
        #[test]
        fn componentize_round_trip(n in 1usize..=1000, width in 1usize..300) {
            let m = ramp(2, n);
            let (parts, pad) = componentize(&m, width);
            prop_assert_eq!(parts.len(), n.div_ceil(width));
            prop_assert!(pad < width);
            prop_assert!(parts.iter().all(|p| p.dim() == (2, width)));
            prop_assert_eq!(decomponentize(&parts, pad).unwrap(), m);
        }
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn constant_magnitude_maps_to_top() {
        let batch = to_model_space(&Array2::from_elem((256, 300), 0.3), &cfg());
        assert!(batch.components.iter().all(|c| c.iter().all(|&v| v == 255.0)));
    }

    #[test]
    fn dc_row_becomes_last_row() {
        let mut mag = Array2::from_elem((256, 256), 1e-3);
        mag.row_mut(0).fill(1.0);
        let batch = to_model_space(&mag, &cfg());
        let c = &batch.components[0];
        assert!(c.row(255).iter().all(|&v| v == 255.0));
        assert!(c.row(0).iter().all(|&v| v < 255.0));
    }

    #[test]
    fn model_space_round_trip_within_quantization() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mag = Array2::from_shape_fn((256, 300), |_| 10f64.powf(rng.random_range(-2.9..1.0)));
        let batch = to_model_space(&mag, &cfg);
        assert!(batch.flipped);
        assert!(batch.components.iter().all(|c| c.iter().all(|&v| (0.0..=255.0).contains(&v))));
        let back = from_model_space(&batch, 300, &cfg).unwrap();
        let bound = cfg.db_floor / 255.0 / 2.0 + 1e-9;
        for (a, b) in mag.iter().zip(back.iter()) {
            let err = (20.0 * (a + cfg.epsilon).log10() - 20.0 * (b + cfg.epsilon).log10()).abs();
            assert!(err <= bound, "{err} > {bound}");
        }
    }

    #[test]
    fn from_model_space_checks_frame_count() {
        let cfg = cfg();
        let batch = to_model_space(&Array2::from_elem((8, 300), 1.0), &cfg);
        assert_eq!(from_model_space(&batch, 300, &cfg).unwrap().ncols(), 300);
        assert!(from_model_space(&batch, 299, &cfg).is_err());
        assert!(from_model_space(&batch, 512, &cfg).is_err());
    }

    #[test]
    fn unit_range_mapping() {
        assert_eq!(byte_to_unit(0.0), -1.0);
        assert_eq!(byte_to_unit(255.0), 1.0);
        assert_eq!(unit_to_byte(byte_to_unit(100.0)), 100.0);
        assert_eq!(unit_to_byte(3.0), 255.0);
    }
}
