//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames are centered: the signal is reflect-padded by `n_fft / 2` on both
//! sides, so frame `t` is centered on sample `t * hop`. The analysis window is
//! a periodic Hann window of `win_length` samples, zero-padded (centered) to
//! `n_fft`.

use std::f64::consts::PI;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
}

impl StftParams {
    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of centered frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win_length == 0 || self.n_fft < self.win_length {
            return Err(Error::Config(format!(
                "invalid STFT parameters {self:?}: need hop > 0 and n_fft >= win_length > 0"
            )));
        }
        Ok(())
    }

    /// Periodic Hann window of `win_length`, centered inside `n_fft` zeros.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_length) / 2;
        for i in 0..self.win_length {
            w[offset + i] = 0.5 - 0.5 * (2.0 * PI * i as f64 / self.win_length as f64).cos();
        }
        w
    }
}

/// Magnitude and phase from a single STFT; phase is kept so that a
/// modified magnitude can be inverted with the original phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramPair {
    pub magnitude: Array2<f64>,
    pub phase: Array2<f64>,
    pub params: StftParams,
}

impl SpectrogramPair {
    pub fn n_frames(&self) -> usize {
        self.magnitude.ncols()
    }

    /// Replaces the magnitude, keeping phase and parameters.
    pub fn with_magnitude(&self, magnitude: Array2<f64>) -> Result<Self> {
        if magnitude.dim() != self.phase.dim() {
            return Err(shape_err!(
                "magnitude {:?} does not match phase {:?}",
                magnitude.dim(),
                self.phase.dim()
            ));
        }
        Ok(Self {
            magnitude,
            phase: self.phase.clone(),
            params: self.params,
        })
    }
}

fn reflect_pad(samples: &[f32], pad: usize) -> Vec<f64> {
    let n = samples.len();
    let reflect = |i: isize| -> f64 {
        // single reflection is enough whenever n > pad; fall back to
        // repeated mirroring for very short inputs
        let period = 2 * (n as isize - 1).max(1);
        let mut j = i.rem_euclid(period);
        if j >= n as isize {
            j = period - j;
        }
        samples[j as usize] as f64
    };
    (0..n + 2 * pad)
        .map(|k| reflect(k as isize - pad as isize))
        .collect()
}

/// Centered STFT of `samples`. Returns magnitude and phase matrices of shape
/// `(n_fft / 2 + 1, 1 + len / hop)`.
pub fn stft(samples: &[f32], params: StftParams) -> Result<SpectrogramPair> {
    params.validate()?;
    if samples.len() < params.win_length {
        return Err(Error::TooShort {
            needed: params.win_length,
            got: samples.len(),
        });
    }
    let spec = complex_stft(samples, params);
    let magnitude = spec.mapv(|c| c.norm());
    let phase = spec.mapv(|c| c.arg());
    Ok(SpectrogramPair {
        magnitude,
        phase,
        params,
    })
}

fn complex_stft(samples: &[f32], params: StftParams) -> Array2<Complex64> {
    let pad = params.n_fft / 2;
    let padded = reflect_pad(samples, pad);
    let window = params.window();
    let n_frames = params.n_frames(samples.len());
    let n_freq = params.n_freq();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(params.n_fft);
    let mut input = fft.make_input_vec();
    let mut output = fft.make_output_vec();
    let mut spec = Array2::<Complex64>::zeros((n_freq, n_frames));
    for t in 0..n_frames {
        let start = t * params.hop;
        for (i, slot) in input.iter_mut().enumerate() {
            *slot = padded[start + i] * window[i];
        }
        fft.process(&mut input, &mut output)
            .expect("buffer sizes come from the planner");
        for (f, c) in output.iter().enumerate() {
            spec[[f, t]] = *c;
        }
    }
    spec
}

/// Inverse STFT by windowed overlap-add, using `spec.phase` unchanged.
/// The output is trimmed or zero-extended to `out_length` samples.
pub fn istft(spec: &SpectrogramPair, out_length: usize) -> Result<Vec<f32>> {
    let params = spec.params;
    params.validate()?;
    let (n_freq, n_frames) = spec.magnitude.dim();
    if spec.phase.dim() != (n_freq, n_frames) || n_freq != params.n_freq() {
        return Err(shape_err!(
            "spectrogram shape {:?} / phase {:?} inconsistent with n_fft {}",
            spec.magnitude.dim(),
            spec.phase.dim(),
            params.n_fft
        ));
    }
    if n_frames == 0 {
        return Err(shape_err!("spectrogram has no frames"));
    }

    let window = params.window();
    let pad = params.n_fft / 2;
    let total = params.n_fft + params.hop * (n_frames - 1);
    let mut acc = vec![0.0f64; total];
    let mut norm = vec![0.0f64; total];

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(params.n_fft);
    let mut bins = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let scale = 1.0 / params.n_fft as f64;
    for t in 0..n_frames {
        for (f, b) in bins.iter_mut().enumerate() {
            *b = Complex64::from_polar(spec.magnitude[[f, t]], spec.phase[[f, t]]);
        }
        // DC (and Nyquist for even n_fft) must be real for a real signal
        bins[0].im = 0.0;
        if params.n_fft % 2 == 0 {
            bins[n_freq - 1].im = 0.0;
        }
        ifft.process(&mut bins, &mut frame)
            .expect("buffer sizes come from the planner");
        let start = t * params.hop;
        for i in 0..params.n_fft {
            acc[start + i] += frame[i] * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let mut out = Vec::with_capacity(out_length);
    for k in 0..out_length {
        let idx = k + pad;
        let v = if idx < total && norm[idx] > 1e-11 {
            acc[idx] / norm[idx]
        } else {
            0.0
        };
        out.push(v as f32);
    }
    Ok(out)
}
