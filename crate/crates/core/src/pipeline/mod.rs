//! Clean audio -> model space -> noisy audio.
//!
//! The forward path is: loudness normalization, STFT, dB conversion and byte
//! scaling, vertical flip, componentization. A [`Translator`] maps every
//! component, after which the path is undone and the generated magnitude is
//! inverted with the clean clip's phase.

pub mod model_space;
pub mod stft;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use model_space::{
    byte_to_unit, componentize, decomponentize, from_model_space, to_model_space, unit_to_byte,
    ComponentBatch, DbScale,
};
pub use stft::{istft, stft, SpectrogramPair, StftParams};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// How byte-scaled components are presented to the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelInputRange {
    /// `v / 127.5 - 1`, i.e. `[-1, 1]`.
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop_length: usize,
    pub window_length: usize,
    pub component_width: usize,
    pub target_rms_dbfs: f64,
    /// Dynamic range kept below the per-clip maximum, in dB.
    pub db_floor: f64,
    pub epsilon: f64,
    pub model_input_range: ModelInputRange,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 510,
            hop_length: 128,
            window_length: 510,
            component_width: 256,
            target_rms_dbfs: -20.0,
            db_floor: 80.0,
            epsilon: 1e-9,
            model_input_range: ModelInputRange::Symmetric,
        }
    }
}

impl PipelineConfig {
    pub fn stft_params(&self) -> StftParams {
        StftParams {
            n_fft: self.n_fft,
            hop: self.hop_length,
            win_length: self.window_length,
        }
    }

    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        self.stft_params().validate()?;
        if self.component_width == 0 {
            return Err(Error::Config("component_width must be positive".into()));
        }
        if self.db_floor <= 0.0 || self.epsilon <= 0.0 || self.sample_rate == 0 {
            return Err(Error::Config(
                "db_floor, epsilon and sample_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Scales `clip` by a single positive gain so its RMS equals `target_rms_dbfs`.
pub fn normalize_loudness(clip: &AudioClip, target_rms_dbfs: f64) -> Result<AudioClip> {
    let rms = clip.rms();
    if !(rms > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "clip {} is silent, cannot normalize loudness",
            clip.clip_id
        )));
    }
    let gain = 10f64.powf((target_rms_dbfs - 20.0 * rms.log10()) / 20.0);
    if (gain - 1.0).abs() < 1e-9 {
        return Ok(clip.clone());
    }
    Ok(clip.map_samples(|s| (s as f64 * gain) as f32))
}

/// Anything that maps byte-scaled components to byte-scaled components of the
/// same shape.
pub trait Translator {
    fn translate(&self, components: &[Array2<f32>]) -> Result<Vec<Array2<f32>>>;
}

/// Returns its input; used to measure what the pipeline alone does.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, components: &[Array2<f32>]) -> Result<Vec<Array2<f32>>> {
        Ok(components.to_vec())
    }
}

/// Emits the bottom of the byte range everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTranslator;

impl Translator for ZeroTranslator {
    fn translate(&self, components: &[Array2<f32>]) -> Result<Vec<Array2<f32>>> {
        Ok(components.iter().map(|c| Array2::zeros(c.dim())).collect())
    }
}

impl<T: Translator + ?Sized> Translator for &T {
    fn translate(&self, components: &[Array2<f32>]) -> Result<Vec<Array2<f32>>> {
        (**self).translate(components)
    }
}

/// Normalized clip plus everything needed to rebuild audio from new components.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub normalized: AudioClip,
    pub spectrogram: SpectrogramPair,
    pub batch: ComponentBatch,
}

pub fn analyze(clip: &AudioClip, cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "clip {} is {} Hz, pipeline expects {} Hz",
            clip.clip_id, clip.sample_rate, cfg.sample_rate
        )));
    }
    let normalized = normalize_loudness(clip, cfg.target_rms_dbfs)?;
    let spectrogram = stft(&normalized.samples, cfg.stft_params())?;
    let batch = to_model_space(&spectrogram.magnitude, cfg);
    Ok(Analysis {
        normalized,
        spectrogram,
        batch,
    })
}

/// Inverts generated components using the analysed clip's phase.
pub fn synthesize(
    analysis: &Analysis,
    generated: Vec<Array2<f32>>,
    cfg: &PipelineConfig,
) -> Result<AudioClip> {
    let batch = analysis.batch.with_components(generated)?;
    let magnitude = from_model_space(&batch, analysis.spectrogram.n_frames(), cfg)?;
    let spec = analysis.spectrogram.with_magnitude(magnitude)?;
    let samples = istft(&spec, analysis.normalized.samples.len())?;
    Ok(analysis.normalized.with_samples(samples))
}

/// End-to-end simulation of a noisy version of `clean`.
pub fn simulate<T: Translator + ?Sized>(
    clean: &AudioClip,
    model: &T,
    cfg: &PipelineConfig,
) -> Result<AudioClip> {
    let analysis = analyze(clean, cfg)?;
    let generated = model.translate(&analysis.batch.components)?;
    synthesize(&analysis, generated, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::si_snr;
    use std::f64::consts::PI;

    fn sine(amplitude: f64, len: usize) -> AudioClip {
        let samples = (0..len)
            .map(|n| (amplitude * (2.0 * PI * 440.0 * n as f64 / 16_000.0).sin()) as f32)
            .collect();
        AudioClip::new(samples, 16_000, "spk", "sine").unwrap()
    }

    #[test]
    fn normalize_from_minus_30_to_minus_20() {
        // RMS of a sine is A / sqrt(2)
        let a = 10f64.powf(-30.0 / 20.0) * 2f64.sqrt();
        let clip = sine(a, 16_000);
        assert!((clip.rms_dbfs() + 30.0).abs() < 1e-3);
        let out = normalize_loudness(&clip, -20.0).unwrap();
        assert!((out.rms_dbfs() + 20.0).abs() < 0.01);
        let gain = out.samples[100] as f64 / clip.samples[100] as f64;
        assert!((gain - 10f64.powf(0.5)).abs() < 1e-4);
    }

    #[test]
    fn normalize_at_target_is_identity() {
        let clip = sine(0.1, 8000);
        let once = normalize_loudness(&clip, -20.0).unwrap();
        let twice = normalize_loudness(&once, once.rms_dbfs()).unwrap();
        assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn normalize_rejects_silence() {
        let clip = AudioClip::new(vec![0.0; 1000], 16_000, "s", "z").unwrap();
        assert!(matches!(
            normalize_loudness(&clip, -20.0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn identity_simulation_reconstructs_clean_clip() {
        let cfg = PipelineConfig::default();
        let clip = sine(0.3, 40_000);
        let out = simulate(&clip, &IdentityTranslator, &cfg).unwrap();
        let reference = normalize_loudness(&clip, cfg.target_rms_dbfs).unwrap();
        assert_eq!(out.samples.len(), clip.samples.len());
        assert!(si_snr(&reference.samples, &out.samples) >= 25.0);
    }

    #[test]
    fn zero_model_is_near_silent() {
        let cfg = PipelineConfig::default();
        let clip = sine(0.3, 20_000);
        let out = simulate(&clip, &ZeroTranslator, &cfg).unwrap();
        assert!(out.rms_dbfs() < cfg.target_rms_dbfs - 50.0, "{}", out.rms_dbfs());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = PipelineConfig::default();
        let clip = sine(0.2, 20_000);
        let a = simulate(&clip, &IdentityTranslator, &cfg).unwrap();
        let b = simulate(&clip, &IdentityTranslator, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
