//! Log Spectral Distance and Multi-Scale Spectral Loss between a reference
//! (target noisy) clip and a candidate (generated) clip. Lower is better.

use std::f64::consts::PI;

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{config_err, data_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsdConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub epsilon: f64,
}

impl Default for LsdConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop: 128,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsslConfig {
    pub fft_sizes: Vec<usize>,
    /// Hop as a fraction of each FFT size.
    pub hop_ratio: f64,
    /// Weight of the log-magnitude term.
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for MsslConfig {
    fn default() -> Self {
        Self {
            fft_sizes: vec![2048, 1024, 512, 256, 128, 64],
            hop_ratio: 0.25,
            alpha: 1.0,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub lsd: LsdConfig,
    pub mssl: MsslConfig,
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mssl.fft_sizes.is_empty() {
            return Err(config_err!("mssl.fft_sizes is empty"));
        }
        if let Some(bad) = self.mssl.fft_sizes.iter().find(|n| !n.is_power_of_two()) {
            return Err(config_err!("mssl fft size {bad} is not a power of two"));
        }
        if self.mssl.alpha < 0.0 || self.mssl.hop_ratio <= 0.0 || self.mssl.hop_ratio > 1.0 {
            return Err(config_err!("mssl needs alpha >= 0 and 0 < hop_ratio <= 1"));
        }
        if self.lsd.n_fft == 0 || self.lsd.hop == 0 {
            return Err(config_err!("lsd n_fft and hop must be positive"));
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude spectrogram of non-padded Hann-windowed frames; `frames[t][f]`.
pub fn magnitude_frames(samples: &[f32], n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    if samples.len() < n_fft {
        return Vec::new();
    }
    let window = hann(n_fft);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut input = fft.make_input_vec();
    let mut output = fft.make_output_vec();
    let n_frames = 1 + (samples.len() - n_fft) / hop;
    (0..n_frames)
        .map(|t| {
            let start = t * hop;
            for (i, slot) in input.iter_mut().enumerate() {
                *slot = samples[start + i] as f64 * window[i];
            }
            fft.process(&mut input, &mut output)
                .expect("buffer sizes come from the planner");
            output.iter().map(|c| c.norm()).collect()
        })
        .collect()
}

fn overlap<'a>(reference: &'a AudioClip, candidate: &'a AudioClip) -> Result<(&'a [f32], &'a [f32])> {
    if reference.sample_rate != candidate.sample_rate {
        return Err(data_err!(
            "sample rates differ: {} vs {}",
            reference.sample_rate,
            candidate.sample_rate
        ));
    }
    let n = reference.len().min(candidate.len());
    if n == 0 {
        return Err(data_err!("clips have no overlapping samples"));
    }
    Ok((&reference.samples[..n], &candidate.samples[..n]))
}

/// Mean over frames of the RMS (over bins) of the dB difference.
pub fn lsd(reference: &AudioClip, candidate: &AudioClip, cfg: &LsdConfig) -> Result<f64> {
    let (r, c) = overlap(reference, candidate)?;
    let fr = magnitude_frames(r, cfg.n_fft, cfg.hop);
    let fc = magnitude_frames(c, cfg.n_fft, cfg.hop);
    if fr.is_empty() {
        return Err(data_err!(
            "overlap of {} samples is shorter than the LSD frame ({})",
            r.len(),
            cfg.n_fft
        ));
    }
    let eps = cfg.epsilon;
    let total: f64 = fr
        .iter()
        .zip(&fc)
        .map(|(a, b)| {
            let mean_sq = a
                .iter()
                .zip(b)
                .map(|(x, y)| (20.0 * ((x + eps) / (y + eps)).log10()).powi(2))
                .sum::<f64>()
                / a.len() as f64;
            mean_sq.sqrt()
        })
        .sum();
    Ok(total / fr.len() as f64)
}

/// Linear plus `alpha`-weighted natural-log L1 distance between two
/// magnitude spectrograms, each averaged over elements.
pub fn spectral_distance(a: &[Vec<f64>], b: &[Vec<f64>], alpha: f64, eps: f64) -> f64 {
    let mut lin = 0.0;
    let mut log = 0.0;
    let mut count = 0usize;
    for (fa, fb) in a.iter().zip(b) {
        for (x, y) in fa.iter().zip(fb) {
            lin += (x - y).abs();
            log += ((x + eps).ln() - (y + eps).ln()).abs();
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    (lin + alpha * log) / count as f64
}

pub fn mssl(reference: &AudioClip, candidate: &AudioClip, cfg: &MsslConfig) -> Result<f64> {
    let (r, c) = overlap(reference, candidate)?;
    let largest = cfg.fft_sizes.iter().copied().max().unwrap_or(0);
    if r.len() < largest {
        return Err(data_err!(
            "overlap of {} samples is shorter than the largest MSSL frame ({largest})",
            r.len()
        ));
    }
    Ok(cfg
        .fft_sizes
        .iter()
        .map(|&n| {
            let hop = ((n as f64 * cfg.hop_ratio).round() as usize).max(1);
            let sr = magnitude_frames(r, n, hop);
            let sc = magnitude_frames(c, n, hop);
            spectral_distance(&sr, &sc, cfg.alpha, cfg.epsilon)
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub lsd: f64,
    pub mssl: f64,
}

pub fn score(reference: &AudioClip, candidate: &AudioClip, cfg: &MetricConfig) -> Result<MetricPair> {
    Ok(MetricPair {
        lsd: lsd(reference, candidate, &cfg.lsd)?,
        mssl: mssl(reference, candidate, &cfg.mssl)?,
    })
}

/// Arithmetic mean of LSD and MSSL over `(reference, candidate)` pairs.
pub fn mean_metrics<'a, I>(pairs: I, cfg: &MetricConfig) -> Result<MetricPair>
where
    I: IntoIterator<Item = (&'a AudioClip, &'a AudioClip)>,
{
    let scores = pairs
        .into_iter()
        .map(|(r, c)| score(r, c, cfg))
        .collect::<Result<Vec<_>>>()?;
    mean_of(&scores)
}

pub fn mean_of(scores: &[MetricPair]) -> Result<MetricPair> {
    if scores.is_empty() {
        return Err(data_err!("cannot average an empty set of metrics"));
    }
    let n = scores.len() as f64;
    Ok(MetricPair {
        lsd: scores.iter().map(|s| s.lsd).sum::<f64>() / n,
        mssl: scores.iter().map(|s| s.mssl).sum::<f64>() / n,
    })
}

/// Scale-invariant signal-to-noise ratio in dB (zero-mean signals).
pub fn si_snr(reference: &[f32], estimate: &[f32]) -> f64 {
    let n = reference.len().min(estimate.len());
    let mean = |x: &[f32]| x[..n].iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let (mr, me) = (mean(reference), mean(estimate));
    let r: Vec<f64> = reference[..n].iter().map(|&v| v as f64 - mr).collect();
    let e: Vec<f64> = estimate[..n].iter().map(|&v| v as f64 - me).collect();
    let dot: f64 = r.iter().zip(&e).map(|(a, b)| a * b).sum();
    let energy: f64 = r.iter().map(|a| a * a).sum();
    let target: Vec<f64> = r.iter().map(|a| a * dot / energy).collect();
    let signal: f64 = target.iter().map(|t| t * t).sum();
    let noise: f64 = target.iter().zip(&e).map(|(t, x)| (x - t).powi(2)).sum();
    10.0 * (signal / noise.max(1e-300)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, len: usize, amp: f32) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len).map(|_| rng.random_range(-amp..amp)).collect();
        AudioClip::new(s, 16_000, "s", format!("n{seed}")).unwrap()
    }

    #[test]
    fn identical_clips_score_zero() {
        let cfg = MetricConfig::default();
        let x = noise(1, 8000, 0.3);
        assert_eq!(lsd(&x, &x, &cfg.lsd).unwrap(), 0.0);
        assert_eq!(mssl(&x, &x, &cfg.mssl).unwrap(), 0.0);
    }

    #[test]
    fn tenfold_gain_is_20_db() {
        let x = noise(2, 8000, 0.05);
        let y = x.map_samples(|s| s * 10.0);
        let d = lsd(&x, &y, &LsdConfig::default()).unwrap();
        assert!((d - 20.0).abs() < 1e-4, "{d}");
    }

    #[test]
    fn mssl_is_symmetric() {
        let cfg = MsslConfig::default();
        let (a, b) = (noise(3, 6000, 0.2), noise(4, 6000, 0.4));
        let ab = mssl(&a, &b, &cfg).unwrap();
        assert_eq!(ab, mssl(&b, &a, &cfg).unwrap());
        assert!(ab > 0.0);
    }

    #[test]
    fn errors_on_short_or_mismatched_input() {
        let cfg = MetricConfig::default();
        let short = noise(5, 1000, 0.1);
        assert!(mssl(&short, &short, &cfg.mssl).is_err());
        let other_rate = AudioClip::new(vec![0.0; 4000], 8000, "s", "r").unwrap();
        assert!(lsd(&noise(6, 4000, 0.1), &other_rate, &cfg.lsd).is_err());
        assert!(mean_metrics(std::iter::empty(), &cfg).is_err());
    }

    #[test]
    fn mean_metrics_is_arithmetic_mean_and_order_free() {
        let cfg = MetricConfig::default();
        let (a, b, c, d) = (noise(7, 5000, 0.1), noise(8, 5000, 0.2), noise(9, 5000, 0.3), noise(10, 5000, 0.1));
        let s1 = score(&a, &b, &cfg).unwrap();
        let s2 = score(&c, &d, &cfg).unwrap();
        let single = mean_metrics([(&a, &b)], &cfg).unwrap();
        assert_eq!(single, s1);
        let m = mean_metrics([(&a, &b), (&c, &d)], &cfg).unwrap();
        assert!((m.lsd - (s1.lsd + s2.lsd) / 2.0).abs() < 1e-12);
        assert!((m.mssl - (s1.mssl + s2.mssl) / 2.0).abs() < 1e-12);
        let rev = mean_metrics([(&c, &d), (&a, &b)], &cfg).unwrap();
        assert!((m.lsd - rev.lsd).abs() < 1e-12 && (m.mssl - rev.mssl).abs() < 1e-12);
    }

    #[test]
    fn spectral_distance_ignores_phase() {
        // same magnitudes, independently drawn phases
        let x = noise(11, 4096, 0.3);
        let frames = magnitude_frames(&x.samples, 256, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rephased: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&m| {
                        let phi: f64 = rng.random_range(-PI..PI);
                        realfft::num_complex::Complex64::from_polar(m, phi).norm()
                    })
                    .collect()
            })
            .collect();
        assert!(spectral_distance(&frames, &rephased, 1.0, 1e-9) < 1e-12);
    }

    #[test]
    fn si_snr_of_scaled_copy_is_large() {
        let x = noise(13, 2000, 0.3);
        let y: Vec<f32> = x.samples.iter().map(|s| s * 0.5).collect();
        assert!(si_snr(&x.samples, &y) > 100.0);
    }
}
