//! Mono audio clips, WAV input/output and sample-rate conversion.

use std::path::Path;

use rubato::{FftFixedIn, Resampler};

use crate::error::{Error, Result};

/// A mono waveform with its sample rate and source identity.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub clip_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        speaker_id: impl Into<String>,
        clip_id: impl Into<String>,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::DegenerateInput("clip contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            speaker_id: speaker_id.into(),
            clip_id: clip_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// RMS level relative to a full-scale DC signal.
    pub fn rms_dbfs(&self) -> f64 {
        20.0 * self.rms().log10()
    }

    /// Same identity, new samples.
    pub fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            speaker_id: self.speaker_id.clone(),
            clip_id: self.clip_id.clone(),
        }
    }

    pub fn map_samples(&self, f: impl Fn(f32) -> f32) -> Self {
        self.with_samples(self.samples.iter().map(|&s| f(s)).collect())
    }

    /// Resampled copy; identity when the rate already matches.
    pub fn resampled(&self, sample_rate: u32) -> Result<Self> {
        if sample_rate == self.sample_rate {
            return Ok(self.clone());
        }
        let samples = resample(&self.samples, self.sample_rate, sample_rate)?;
        Ok(Self {
            samples,
            sample_rate,
            ..self.clone()
        })
    }
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Band-limited resampling of a whole signal. The output has
/// `round(len * to / from)` samples and is aligned with the input.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Result<Vec<f32>> {
    if from == 0 || to == 0 {
        return Err(Error::Config("sample rates must be positive".into()));
    }
    if from == to || samples.is_empty() {
        return Ok(samples.to_vec());
    }
    let out_len = (samples.len() as u64 * to as u64 + from as u64 / 2) / from as u64;
    let chunk = 1024;
    let mut resampler = FftFixedIn::<f64>::new(from as usize, to as usize, chunk, 2, 1)
        .map_err(|e| Error::Config(format!("resampler: {e}")))?;
    let delay = resampler.output_delay();

    let input: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let mut out: Vec<f64> = Vec::with_capacity(out_len as usize + delay + chunk);
    let mut pos = 0;
    while out.len() < out_len as usize + delay {
        let needed = resampler.input_frames_next();
        let block = if pos < input.len() {
            let end = (pos + needed).min(input.len());
            &input[pos..end]
        } else {
            &[][..]
        };
        pos += needed;
        let produced = if block.len() == needed {
            resampler.process(&[block], None)
        } else if block.is_empty() {
            resampler.process_partial(None::<&[&[f64]]>, None)
        } else {
            resampler.process_partial(Some(&[block]), None)
        }
        .map_err(|e| Error::Config(format!("resampler: {e}")))?;
        out.extend_from_slice(&produced[0]);
    }
    Ok(out[delay..delay + out_len as usize]
        .iter()
        .map(|&s| s as f32)
        .collect())
}

/// Reads a PCM or float WAV file, mixes it down to mono and resamples it to
/// `target_rate`.
pub fn read_wav(path: &Path, target_rate: u32) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()?
        }
    };
    let mono: Vec<f32> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    let clip_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clip = AudioClip::new(mono, spec.sample_rate, "", clip_id)?;
    clip.resampled(target_rate)
}

/// Every `.wav` file under `dir`, recursively, in path order.
pub fn list_wavs(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Writes 16-bit mono PCM; samples outside [-1, 1] are clipped.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        writer.write_sample(to_i16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn to_i16(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn from_i16(s: i16) -> f32 {
    s as f32 / 32768.0
}
