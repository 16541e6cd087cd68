//! Non-learned reference augmenter: aggregated noise mixed into clean speech,
//! followed by a G.726 encode/decode round trip at 8 kHz.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip};
use crate::dataset::{self, Codec};
use crate::error::{config_err, data_err, Result};
use crate::g726::{self, G726Rate};

pub const G726_SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub rate: G726Rate,
    pub crossfade_ms: f64,
    /// Mixing SNR range; the data section's range is used when absent.
    pub snr_db: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            rate: G726Rate::Kbps32,
            crossfade_ms: 10.0,
            snr_db: None,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crossfade_ms >= 0.0) {
            return Err(config_err!("crossfade_ms must be non-negative"));
        }
        if let Some([lo, hi]) = self.snr_db {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(config_err!("baseline snr_db must be a finite [low, high] range"));
            }
        }
        Ok(())
    }
}

/// Joins noise clips in a shuffled cyclic order with equal-power crossfades
/// of `crossfade` samples until `target_len` samples are filled.
pub fn aggregate_noise<R: Rng + ?Sized>(
    clips: &[AudioClip],
    target_len: usize,
    crossfade: usize,
    rng: &mut R,
) -> Result<AudioClip> {
    let first = clips.first().ok_or_else(|| data_err!("no noise clips to aggregate"))?;
    if let Some(bad) = clips.iter().find(|c| c.sample_rate != first.sample_rate) {
        return Err(data_err!(
            "noise clip {} is {} Hz, expected {} Hz",
            bad.clip_id,
            bad.sample_rate,
            first.sample_rate
        ));
    }
    if clips.iter().all(|c| c.is_empty()) {
        return Err(data_err!("all noise clips are empty"));
    }
    let mut order: Vec<&AudioClip> = clips.iter().filter(|c| !c.is_empty()).collect();
    order.shuffle(rng);
    let mut out: Vec<f32> = Vec::with_capacity(target_len + crossfade);
    let mut i = 0;
    while out.len() < target_len {
        let next = &order[i % order.len()].samples;
        i += 1;
        let overlap = crossfade.min(out.len()).min(next.len() / 2);
        let start = out.len() - overlap;
        for k in 0..overlap {
            let theta = std::f64::consts::FRAC_PI_2 * (k as f64 + 0.5) / overlap as f64;
            let mixed = out[start + k] as f64 * theta.cos() + next[k] as f64 * theta.sin();
            out[start + k] = mixed as f32;
        }
        out.extend_from_slice(&next[overlap..]);
    }
    out.truncate(target_len);
    AudioClip::new(out, first.sample_rate, "noise", "aggregate")
}

/// G.726 encode/decode at 8 kHz, resampled back to the clip's rate and
/// length.
pub fn g726_roundtrip(clip: &AudioClip, rate: G726Rate) -> Result<AudioClip> {
    let low = audio::resample(&clip.samples, clip.sample_rate, G726_SAMPLE_RATE)?;
    let pcm: Vec<i16> = low.iter().map(|&s| audio::to_i16(s)).collect();
    let decoded: Vec<f32> = g726::roundtrip_8k(&pcm, rate).into_iter().map(audio::from_i16).collect();
    let mut back = audio::resample(&decoded, G726_SAMPLE_RATE, clip.sample_rate)?;
    back.resize(clip.len(), 0.0);
    Ok(clip.with_samples(back))
}

/// Parses a mode name such as `32k`; unsupported modes are configuration
/// errors.
pub fn parse_mode(s: &str) -> Result<G726Rate> {
    s.parse()
}

#[derive(Debug, Clone, Copy)]
pub struct G726Codec(pub G726Rate);

impl Codec for G726Codec {
    fn name(&self) -> String {
        format!("g726-{}", self.0.bits() * 8)
    }

    fn roundtrip(&self, clip: &AudioClip) -> Result<AudioClip> {
        g726_roundtrip(clip, self.0)
    }
}

/// Aggregated noise mixed at `snr_db`, then the codec round trip.
pub fn baseline_simulate<R: Rng + ?Sized>(
    clean: &AudioClip,
    noise_clips: &[AudioClip],
    snr_db: f64,
    cfg: &BaselineConfig,
    rng: &mut R,
) -> Result<AudioClip> {
    let crossfade = (cfg.crossfade_ms * 1e-3 * clean.sample_rate as f64).round() as usize;
    let noise = aggregate_noise(noise_clips, clean.len(), crossfade, rng)?;
    let mixed = dataset::mix_noise(clean, &noise, snr_db, rng)?;
    g726_roundtrip(&mixed, cfg.rate)
}
