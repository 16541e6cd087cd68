//! Corpus preparation: noise mixing at a target SNR, codec distortion through
//! an external codec, speaker-disjoint train/val/test splits, JSONL manifests
//! and a synthetic toy corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip};
use crate::error::{config_err, data_err, Error, Result};

/// Environment variable naming the directory that holds `c2enc` and `c2dec`.
pub const CODEC2_DIR_ENV: &str = "NOISYSIM_CODEC2_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Parallel,
    #[default]
    NonParallel,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Parallel => "parallel",
            Mode::NonParallel => "non_parallel",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Mode::Parallel),
            "non_parallel" | "non-parallel" => Ok(Mode::NonParallel),
            _ => Err(config_err!("unknown mode {s:?}; expected parallel or non_parallel")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseType {
    /// Radio channel recordings that already come as clean/noisy pairs.
    UhfVhf,
    #[default]
    Stationary,
    NonStationary,
    Codec,
}

impl NoiseType {
    pub fn name(self) -> &'static str {
        match self {
            NoiseType::UhfVhf => "uhf_vhf",
            NoiseType::Stationary => "stationary",
            NoiseType::NonStationary => "non_stationary",
            NoiseType::Codec => "codec",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            NoiseType::UhfVhf,
            NoiseType::Stationary,
            NoiseType::NonStationary,
            NoiseType::Codec,
        ]
        .into_iter()
        .find(|n| n.name() == s)
        .ok_or_else(|| {
            config_err!("unknown noise type {s:?}; expected uhf_vhf, stationary, non_stationary or codec")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Target duration per split and domain, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitTargets {
    pub train_secs: f64,
    pub val_secs: f64,
    pub test_secs: f64,
    /// Allowed relative deviation from each target.
    pub tolerance: f64,
}

impl Default for SplitTargets {
    fn default() -> Self {
        Self {
            train_secs: 180.0,
            val_secs: 100.0,
            test_secs: 200.0,
            tolerance: 0.2,
        }
    }
}

impl SplitTargets {
    pub fn target(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train_secs,
            Split::Val => self.val_secs,
            Split::Test => self.test_secs,
        }
    }

    pub fn bounds(&self, split: Split) -> (f64, f64) {
        let t = self.target(split);
        (t * (1.0 - self.tolerance), t * (1.0 + self.tolerance))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub encoder: PathBuf,
    pub decoder: PathBuf,
    /// Bit-rate mode passed to both executables.
    pub mode: String,
    /// Sample rate the codec runs at.
    pub sample_rate: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            encoder: "c2enc".into(),
            decoder: "c2dec".into(),
            mode: "3200".into(),
            sample_rate: 8000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub noise_type: NoiseType,
    /// Mixing SNR is drawn uniformly from this range per clip.
    pub snr_db: [f64; 2],
    pub targets: SplitTargets,
    pub codec: CodecConfig,
    pub manifest: Option<PathBuf>,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            noise_type: NoiseType::default(),
            snr_db: [0.0, 10.0],
            targets: SplitTargets::default(),
            codec: CodecConfig::default(),
            manifest: None,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.snr_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(config_err!("snr_db must be a finite [low, high] range"));
        }
        let t = &self.targets;
        if t.train_secs <= 0.0 || t.val_secs <= 0.0 || t.test_secs <= 0.0 || !(0.0..1.0).contains(&t.tolerance) {
            return Err(config_err!("split targets must be positive with tolerance in [0, 1)"));
        }
        Ok(())
    }
}

/// `clean + g * noise` with `g` chosen so that the clean-to-noise power
/// ratio is `snr_db`. The noise is read cyclically from `offset`. If the sum
/// would clip, the whole mixture is scaled down to a peak of 1, which keeps
/// the ratio.
pub fn mix_noise_at(clean: &AudioClip, noise: &AudioClip, snr_db: f64, offset: usize) -> Result<AudioClip> {
    if clean.sample_rate != noise.sample_rate {
        return Err(data_err!(
            "clean is {} Hz but noise is {} Hz",
            clean.sample_rate,
            noise.sample_rate
        ));
    }
    if noise.is_empty() || noise.rms() == 0.0 {
        return Err(Error::DegenerateInput(format!("noise clip {} is silent", noise.clip_id)));
    }
    let segment: Vec<f64> = (0..clean.len())
        .map(|i| noise.samples[(offset + i) % noise.len()] as f64)
        .collect();
    let p_noise = segment.iter().map(|v| v * v).sum::<f64>() / segment.len().max(1) as f64;
    if p_noise == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "noise clip {} is silent over the mixing window",
            noise.clip_id
        )));
    }
    let p_clean = clean.rms().powi(2);
    let g = if snr_db == f64::INFINITY {
        0.0
    } else {
        (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
    };
    let mut mixed: Vec<f64> = clean
        .samples
        .iter()
        .zip(&segment)
        .map(|(&c, &n)| c as f64 + g * n)
        .collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        mixed.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(clean.with_samples(mixed.into_iter().map(|v| v as f32).collect()))
}

/// [`mix_noise_at`] with a random noise offset.
pub fn mix_noise<R: Rng + ?Sized>(
    clean: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<AudioClip> {
    let offset = if noise.is_empty() { 0 } else { rng.random_range(0..noise.len()) };
    mix_noise_at(clean, noise, snr_db, offset)
}

/// Lossy encode/decode round trip.
pub trait Codec {
    fn name(&self) -> String;
    fn roundtrip(&self, clip: &AudioClip) -> Result<AudioClip>;
}

/// Runs an external encoder/decoder pair on 16-bit raw audio over pipes:
/// `encoder MODE - -` then `decoder MODE - -`.
#[derive(Debug, Clone)]
pub struct CommandCodec {
    pub config: CodecConfig,
}

impl CommandCodec {
    /// Resolves relative executable names against [`CODEC2_DIR_ENV`] when set.
    pub fn new(mut config: CodecConfig) -> Self {
        if let Ok(dir) = std::env::var(CODEC2_DIR_ENV) {
            for exe in [&mut config.encoder, &mut config.decoder] {
                if exe.is_relative() {
                    *exe = Path::new(&dir).join(&*exe);
                }
            }
        }
        Self { config }
    }

    fn run(&self, exe: &Path, input: Vec<u8>) -> Result<Vec<u8>> {
        let mut child = Command::new(exe)
            .args([self.config.mode.as_str(), "-", "-"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                Error::Environment(format!(
                    "cannot run codec executable {}: {e}; install codec2 or set {CODEC2_DIR_ENV} \
                     or data.codec.encoder/decoder to its location",
                    exe.display()
                ))
            })?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Environment(format!("codec {} failed: {e}", exe.display())))?;
        writer
            .join()
            .expect("codec writer thread panicked")
            .map_err(|e| Error::Environment(format!("writing to {}: {e}", exe.display())))?;
        if !out.status.success() {
            return Err(Error::Environment(format!(
                "codec {} exited with {}: {}",
                exe.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(out.stdout)
    }
}

impl Codec for CommandCodec {
    fn name(&self) -> String {
        format!("codec2-{}", self.config.mode)
    }

    fn roundtrip(&self, clip: &AudioClip) -> Result<AudioClip> {
        let rate = self.config.sample_rate;
        let low = audio::resample(&clip.samples, clip.sample_rate, rate)?;
        let pcm: Vec<u8> = low.iter().flat_map(|&s| audio::to_i16(s).to_le_bytes()).collect();
        let bits = self.run(&self.config.encoder, pcm)?;
        let decoded = self.run(&self.config.decoder, bits)?;
        let samples: Vec<f32> = decoded
            .chunks_exact(2)
            .map(|b| audio::from_i16(i16::from_le_bytes([b[0], b[1]])))
            .collect();
        Ok(clip.with_samples(audio::resample(&samples, rate, clip.sample_rate)?))
    }
}

/// Codec round trip trimmed or zero-padded to the input length.
pub fn apply_codec(clean: &AudioClip, codec: &dyn Codec) -> Result<AudioClip> {
    let mut out = codec.roundtrip(clean)?;
    out.samples.resize(clean.len(), 0.0);
    out.sample_rate = clean.sample_rate;
    Ok(out)
}

/// Where the noisy twin of a clean utterance comes from.
pub enum NoiseSource<'a> {
    /// One of these clips, mixed in at a random offset and an SNR drawn
    /// uniformly from the configured range.
    Mix(&'a [AudioClip]),
    /// A codec round trip.
    Codec(&'a dyn Codec),
}

pub fn noisy_twin<R: Rng + ?Sized>(
    clean: &AudioClip,
    source: &NoiseSource,
    snr_db: [f64; 2],
    rng: &mut R,
) -> Result<AudioClip> {
    match source {
        NoiseSource::Mix(clips) => {
            let noise = clips.choose(rng).ok_or_else(|| data_err!("no noise clips to mix"))?;
            let [lo, hi] = snr_db;
            let snr = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            mix_noise(clean, noise, snr, rng)
        }
        NoiseSource::Codec(codec) => apply_codec(clean, *codec),
    }
}

/// One source utterance with its processed noisy twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceUtterance {
    pub speaker: String,
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub split: Split,
    /// Absent for rows of the noisy-only training pool.
    pub clean: Option<PathBuf>,
    /// Absent for rows of the clean-only training pool.
    pub noisy: Option<PathBuf>,
    pub speaker: String,
    pub duration: f64,
    pub noise_type: NoiseType,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub mode: Mode,
    pub noise_type: NoiseType,
    pub records: Vec<ManifestRecord>,
}

impl SplitManifest {
    pub fn records(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn speakers(&self, split: Split) -> BTreeSet<&str> {
        self.records(split).map(|r| r.speaker.as_str()).collect()
    }

    /// Seconds of clean and noisy audio in `split`.
    pub fn durations(&self, split: Split) -> (f64, f64) {
        self.records(split).fold((0.0, 0.0), |(c, n), r| {
            (
                c + if r.clean.is_some() { r.duration } else { 0.0 },
                n + if r.noisy.is_some() { r.duration } else { 0.0 },
            )
        })
    }

    /// Aligned (clean, noisy) pairs of a split.
    pub fn pairs(&self, split: Split) -> Vec<(PathBuf, PathBuf)> {
        self.records(split)
            .filter_map(|r| Some((r.clean.clone()?, r.noisy.clone()?)))
            .collect()
    }

    pub fn clean_paths(&self, split: Split) -> Vec<PathBuf> {
        self.records(split).filter_map(|r| r.clean.clone()).collect()
    }

    pub fn noisy_paths(&self, split: Split) -> Vec<PathBuf> {
        self.records(split).filter_map(|r| r.noisy.clone()).collect()
    }

    /// Checks durations, speaker disjointness and pairing.
    pub fn validate(&self, targets: &SplitTargets) -> Result<()> {
        for split in Split::ALL {
            let (lo, hi) = targets.bounds(split);
            let (c, n) = self.durations(split);
            for (domain, secs) in [("clean", c), ("noisy", n)] {
                if secs < lo || secs > hi {
                    return Err(data_err!(
                        "{split} {domain} holds {secs:.1} s, outside [{lo:.1}, {hi:.1}]"
                    ));
                }
            }
        }
        for (i, a) in Split::ALL.iter().enumerate() {
            for b in &Split::ALL[i + 1..] {
                let shared: Vec<_> = self.speakers(*a).intersection(&self.speakers(*b)).copied().collect();
                if !shared.is_empty() {
                    return Err(data_err!("speakers {shared:?} appear in both {a} and {b}"));
                }
            }
        }
        for r in &self.records {
            let paired = r.clean.is_some() && r.noisy.is_some();
            if (self.mode == Mode::Parallel || r.split != Split::Train) && !paired {
                return Err(data_err!("{} row of speaker {} lacks a twin", r.split, r.speaker));
            }
            if r.clean.is_none() && r.noisy.is_none() {
                return Err(data_err!("row of speaker {} has no audio", r.speaker));
            }
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| data_err!("{}:{}: {e}", path.display(), i + 1))?;
            records.push(r);
        }
        let first = records
            .first()
            .ok_or_else(|| data_err!("manifest {} is empty", path.display()))?;
        let (mode, noise_type) = (first.mode, first.noise_type);
        if records.iter().any(|r| r.mode != mode || r.noise_type != noise_type) {
            return Err(data_err!("manifest {} mixes modes or noise types", path.display()));
        }
        Ok(Self {
            mode,
            noise_type,
            records,
        })
    }
}

/// Assigns whole speakers to splits, then picks utterances until each
/// split's duration target is met. Non-parallel training draws its clean and
/// noisy pools from different utterances.
pub fn build_splits(
    corpus: &[SourceUtterance],
    noise_type: NoiseType,
    mode: Mode,
    targets: &SplitTargets,
    seed: u64,
) -> Result<SplitManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_speaker: BTreeMap<&str, Vec<&SourceUtterance>> = BTreeMap::new();
    for u in corpus {
        by_speaker.entry(u.speaker.as_str()).or_default().push(u);
    }
    let mut speakers: Vec<&str> = by_speaker.keys().copied().collect();
    speakers.shuffle(&mut rng);

    let need = |split: Split| {
        let t = targets.target(split);
        if split == Split::Train && mode == Mode::NonParallel {
            2.0 * t
        } else {
            t
        }
    };
    let mut assigned: BTreeMap<Split, Vec<&str>> = BTreeMap::new();
    let mut have: BTreeMap<Split, f64> = Split::ALL.iter().map(|&s| (s, 0.0)).collect();
    for spk in speakers {
        let open = Split::ALL
            .iter()
            .map(|&s| (s, (need(s) - have[&s]) / need(s)))
            .filter(|&(_, deficit)| deficit > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((split, _)) = open else { break };
        *have.get_mut(&split).expect("split") += by_speaker[spk].iter().map(|u| u.duration).sum::<f64>();
        assigned.entry(split).or_default().push(spk);
    }

    let mut records = Vec::new();
    for split in Split::ALL {
        let mut utts: Vec<&SourceUtterance> = assigned
            .get(&split)
            .into_iter()
            .flatten()
            .flat_map(|s| by_speaker[s].iter().copied())
            .collect();
        utts.shuffle(&mut rng);
        let (lo, hi) = targets.bounds(split);
        let two_pools = split == Split::Train && mode == Mode::NonParallel;
        let mut pools = [0.0f64; 2];
        for u in utts {
            let k = if two_pools && pools[1] < pools[0] { 1 } else { 0 };
            if pools[k] >= targets.target(split) {
                if !two_pools || pools[1 - k] >= targets.target(split) {
                    break;
                }
                continue;
            }
            if pools[k] + u.duration > hi {
                continue;
            }
            pools[k] += u.duration;
            let (clean, noisy) = match (two_pools, k) {
                (false, _) => (Some(u.clean.clone()), Some(u.noisy.clone())),
                (true, 0) => (Some(u.clean.clone()), None),
                (true, _) => (None, Some(u.noisy.clone())),
            };
            records.push(ManifestRecord {
                split,
                clean,
                noisy,
                speaker: u.speaker.clone(),
                duration: u.duration,
                noise_type,
                mode,
            });
        }
        let got = if two_pools { pools[0].min(pools[1]) } else { pools[0] };
        if got < lo {
            return Err(data_err!(
                "not enough audio for the {split} split: {got:.1} s of the {lo:.1} s minimum \
                 (shortfall {:.1} s) from {} speakers",
                lo - got,
                assigned.get(&split).map_or(0, Vec::len)
            ));
        }
    }
    let manifest = SplitManifest {
        mode,
        noise_type,
        records,
    };
    manifest.validate(targets)?;
    Ok(manifest)
}

/// A synthetic speaker's utterance: a few sinusoids near a speaker-specific
/// fundamental under a syllable-rate envelope.
pub fn toy_utterance(speaker: usize, index: usize, secs: f64, sample_rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((speaker as u64) << 32) ^ index as u64);
    let f0 = 100.0 + 15.0 * speaker as f64;
    let n = (secs * sample_rate as f64).round() as usize;
    let partials: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let harmonic = rng.random_range(1..8) as f64;
            let freq = f0 * harmonic * rng.random_range(0.97..1.03);
            (freq, rng.random_range(0.2..1.0), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let rate = rng.random_range(2.0..5.0);
    let norm: f64 = partials.iter().map(|p| p.1).sum();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let env = 0.55 + 0.45 * (2.0 * PI * rate * t).sin();
            let s: f64 = partials.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum();
            (0.5 * env * s / norm) as f32
        })
        .collect();
    AudioClip::new(samples, sample_rate, format!("spk{speaker:02}"), format!("spk{speaker:02}_{index:03}"))
        .expect("toy clip is valid")
}

/// White Gaussian noise of unit variance.
pub fn white_noise(len: usize, sample_rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 1.0).expect("valid normal");
    let samples = (0..len).map(|_| normal.sample(&mut rng)).collect();
    AudioClip::new(samples, sample_rate, "noise", format!("white_{seed}")).expect("noise clip is valid")
}

/// Toy noisy twin: the clean clip plus white noise at `snr_db`.
pub fn toy_noisy(clean: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip> {
    let noise = white_noise(clean.len(), clean.sample_rate, seed);
    mix_noise_at(clean, &noise, snr_db, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyCorpusSpec {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub utterance_secs: f64,
    pub sample_rate: u32,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            speakers: 16,
            utterances_per_speaker: 14,
            utterance_secs: 4.0,
            sample_rate: 16_000,
            snr_db: 5.0,
            seed: 0,
        }
    }
}

/// Writes `clean/<speaker>/<id>.wav` and `noisy/<speaker>/<id>.wav` under
/// `dir` and returns the utterance list.
pub fn write_toy_corpus(dir: &Path, spec: &ToyCorpusSpec) -> Result<Vec<SourceUtterance>> {
    let mut out = Vec::with_capacity(spec.speakers * spec.utterances_per_speaker);
    for s in 0..spec.speakers {
        for i in 0..spec.utterances_per_speaker {
            let clean = toy_utterance(s, i, spec.utterance_secs, spec.sample_rate, spec.seed);
            let noisy = toy_noisy(&clean, spec.snr_db, spec.seed.wrapping_add((s * 1000 + i) as u64))?;
            let rel = Path::new(&clean.speaker_id).join(format!("{}.wav", clean.clip_id));
            let clean_path = dir.join("clean").join(&rel);
            let noisy_path = dir.join("noisy").join(&rel);
            for (path, clip) in [(&clean_path, &clean), (&noisy_path, &noisy)] {
                let parent = path.parent().expect("file has a parent");
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                audio::write_wav(path, clip)?;
            }
            out.push(SourceUtterance {
                speaker: clean.speaker_id.clone(),
                clean: clean_path,
                noisy: noisy_path,
                duration: clean.duration_secs(),
            });
        }
    }
    Ok(out)
}

/// In-memory toy corpus split like a real one.
#[derive(Debug, Clone)]
pub struct ToySplits {
    pub manifest: SplitManifest,
    pub train_clean: Vec<AudioClip>,
    pub train_noisy: Vec<AudioClip>,
    /// Aligned `(clean, noisy)` pairs.
    pub val: Vec<(AudioClip, AudioClip)>,
    pub test: Vec<(AudioClip, AudioClip)>,
}

/// Generates the toy corpus without touching disk and splits it with
/// [`build_splits`]. Paths in the manifest are `toy://` names.
pub fn toy_splits(spec: &ToyCorpusSpec, mode: Mode, targets: &SplitTargets, seed: u64) -> Result<ToySplits> {
    let mut clips: BTreeMap<PathBuf, AudioClip> = BTreeMap::new();
    let mut corpus = Vec::new();
    for s in 0..spec.speakers {
        for i in 0..spec.utterances_per_speaker {
            let clean = toy_utterance(s, i, spec.utterance_secs, spec.sample_rate, spec.seed);
            let noisy = toy_noisy(&clean, spec.snr_db, spec.seed.wrapping_add((s * 1000 + i) as u64))?;
            let c = PathBuf::from(format!("toy://clean/{}", clean.clip_id));
            let n = PathBuf::from(format!("toy://noisy/{}", clean.clip_id));
            corpus.push(SourceUtterance {
                speaker: clean.speaker_id.clone(),
                clean: c.clone(),
                noisy: n.clone(),
                duration: clean.duration_secs(),
            });
            clips.insert(c, clean);
            clips.insert(n, noisy);
        }
    }
    let manifest = build_splits(&corpus, NoiseType::Stationary, mode, targets, seed)?;
    let get = |p: &PathBuf| clips[p].clone();
    let pairs = |split| manifest.pairs(split).iter().map(|(c, n)| (get(c), get(n))).collect();
    Ok(ToySplits {
        train_clean: manifest.clean_paths(Split::Train).iter().map(get).collect(),
        train_noisy: manifest.noisy_paths(Split::Train).iter().map(get).collect(),
        val: pairs(Split::Val),
        test: pairs(Split::Test),
        manifest,
    })
}

/// Lists `<root>/<speaker>/*.wav` in name order as `(speaker, path)`.
pub fn scan_speaker_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let read = |p: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut out = Vec::new();
    for dir in read(root)?.into_iter().filter(|p| p.is_dir()) {
        let speaker = dir.file_name().expect("dir name").to_string_lossy().into_owned();
        for f in read(&dir)? {
            if f.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                out.push((speaker.clone(), f));
            }
        }
    }
    if out.is_empty() {
        return Err(data_err!(
            "no audio under {}; expected <speaker>/<utterance>.wav",
            root.display()
        ));
    }
    Ok(out)
}
