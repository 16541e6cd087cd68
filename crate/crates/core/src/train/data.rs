//! Training pools of full-length model-space spectrograms and the random
//! fixed-width crops drawn from them each step.

use candle_core::{Device, Tensor};
use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::audio::AudioClip;
use crate::error::{data_err, shape_err, Result};
use crate::pipeline::{self, byte_to_unit, decomponentize, PipelineConfig};

/// Byte-scaled, flipped `(n_freq, frames)` spectrograms of the clean (A) and
/// noisy (B) domains.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub clean: Vec<Array2<f32>>,
    pub noisy: Vec<Array2<f32>>,
    /// `clean[i]` and `noisy[i]` are frame-aligned versions of one utterance.
    pub paired: bool,
}

/// One step's crops as `(B, 1, n_freq, width)` tensors in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub clean: Tensor,
    pub noisy: Tensor,
}

/// Full model-space spectrogram of a clip: the componentized analysis with
/// its wrap padding removed again.
pub fn model_space_frames(clip: &AudioClip, cfg: &PipelineConfig) -> Result<Array2<f32>> {
    let analysis = pipeline::analyze(clip, cfg)?;
    decomponentize(&analysis.batch.components, analysis.batch.pad_frames)
}

impl TrainData {
    pub fn new(clean: Vec<Array2<f32>>, noisy: Vec<Array2<f32>>, paired: bool) -> Result<Self> {
        if clean.is_empty() || noisy.is_empty() {
            return Err(data_err!(
                "training needs clips in both domains (clean {}, noisy {})",
                clean.len(),
                noisy.len()
            ));
        }
        let rows = clean[0].nrows();
        if let Some(bad) = clean.iter().chain(&noisy).find(|m| m.nrows() != rows || m.ncols() == 0) {
            return Err(shape_err!("spectrogram {:?} does not match {rows} bins", bad.dim()));
        }
        if paired {
            if clean.len() != noisy.len() {
                return Err(data_err!(
                    "parallel data needs one noisy twin per clean clip ({} vs {})",
                    clean.len(),
                    noisy.len()
                ));
            }
            for (i, (c, n)) in clean.iter().zip(&noisy).enumerate() {
                if c.ncols() != n.ncols() {
                    return Err(data_err!(
                        "pair {i} is misaligned: {} clean frames vs {} noisy frames",
                        c.ncols(),
                        n.ncols()
                    ));
                }
            }
        }
        Ok(Self { clean, noisy, paired })
    }

    /// Analyses clips through the pipeline. Paired clips must have equal
    /// sample counts.
    pub fn from_clips(
        clean: &[AudioClip],
        noisy: &[AudioClip],
        paired: bool,
        cfg: &PipelineConfig,
    ) -> Result<Self> {
        if paired {
            for (c, n) in clean.iter().zip(noisy) {
                if c.len() != n.len() {
                    return Err(data_err!(
                        "pair {} / {} is misaligned: {} vs {} samples",
                        c.clip_id,
                        n.clip_id,
                        c.len(),
                        n.len()
                    ));
                }
            }
        }
        let frames = |clips: &[AudioClip]| {
            clips
                .iter()
                .map(|c| model_space_frames(c, cfg))
                .collect::<Result<Vec<_>>>()
        };
        Self::new(frames(clean)?, frames(noisy)?, paired)
    }

    pub fn n_freq(&self) -> usize {
        self.clean[0].nrows()
    }

    /// Total frames of the larger domain.
    pub fn max_frames(&self) -> usize {
        let total = |v: &[Array2<f32>]| v.iter().map(|m| m.ncols()).sum::<usize>();
        total(&self.clean).max(total(&self.noisy))
    }

    /// Random crops of `width` frames. Paired data uses the same clip and
    /// offset on both sides; unpaired data draws each side independently.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        width: usize,
        batch: usize,
        device: &Device,
    ) -> Result<Batch> {
        let mut a = Vec::with_capacity(batch);
        let mut b = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = rng.random_range(0..self.clean.len());
            let off = random_offset(rng, self.clean[i].ncols(), width);
            a.push(crop(&self.clean[i], off, width));
            if self.paired {
                b.push(crop(&self.noisy[i], off, width));
            } else {
                let j = rng.random_range(0..self.noisy.len());
                let off = random_offset(rng, self.noisy[j].ncols(), width);
                b.push(crop(&self.noisy[j], off, width));
            }
        }
        Ok(Batch {
            clean: stack(&a, device)?,
            noisy: stack(&b, device)?,
        })
    }
}

fn random_offset<R: Rng + ?Sized>(rng: &mut R, frames: usize, width: usize) -> usize {
    if frames > width {
        rng.random_range(0..=frames - width)
    } else {
        0
    }
}

/// `width` frames starting at `offset`, wrapping to the start like
/// componentization does for short spectrograms.
pub fn crop(m: &Array2<f32>, offset: usize, width: usize) -> Array2<f32> {
    let n = m.ncols();
    if offset + width <= n {
        m.slice(s![.., offset..offset + width]).to_owned()
    } else {
        let cols: Vec<usize> = (offset..offset + width).map(|i| i % n).collect();
        m.select(Axis(1), &cols)
    }
}

fn stack(crops: &[Array2<f32>], device: &Device) -> Result<Tensor> {
    let (h, w) = crops[0].dim();
    let flat: Vec<f32> = crops.iter().flat_map(|c| c.iter().map(|&v| byte_to_unit(v))).collect();
    Ok(Tensor::from_vec(flat, (crops.len(), 1, h, w), device)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(frames: usize, base: f32) -> Array2<f32> {
        Array2::from_shape_fn((4, frames), |(r, c)| (base + r as f32 + c as f32).min(255.0))
    }

    #[test]
    fn paired_crops_share_offsets() {
        let data = TrainData::new(vec![ramp(40, 0.0)], vec![ramp(40, 100.0)], true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let batch = data.sample(&mut rng, 8, 2, &Device::Cpu).unwrap();
            let diff = (batch.noisy - batch.clean).unwrap();
            let d: Vec<f32> = diff.flatten_all().unwrap().to_vec1().unwrap();
            // noisy is clean shifted by 100 bytes at every aligned position
            assert!(d.iter().all(|v| (v - 100.0 / 127.5).abs() < 1e-5));
        }
    }

    #[test]
    fn misaligned_pairs_are_data_errors() {
        let err = TrainData::new(vec![ramp(40, 0.0)], vec![ramp(41, 0.0)], true).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        let err = TrainData::new(vec![ramp(40, 0.0)], vec![], false).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(TrainData::new(vec![ramp(40, 0.0)], vec![ramp(41, 0.0)], false).is_ok());
    }

    #[test]
    fn short_spectrograms_wrap() {
        let m = ramp(3, 0.0);
        let c = crop(&m, 0, 7);
        let first_row: Vec<f32> = c.row(0).to_vec();
        assert_eq!(first_row, vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn crops_stay_in_range_and_are_seeded() {
        let data = TrainData::new(vec![ramp(30, 0.0), ramp(50, 10.0)], vec![ramp(20, 0.0)], false).unwrap();
        let draw = |seed| {
            let b = data
                .sample(&mut ChaCha8Rng::seed_from_u64(seed), 16, 3, &Device::Cpu)
                .unwrap();
            b.clean.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        };
        assert_eq!(draw(4), draw(4));
        assert!(draw(4).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
