//! Command-line entry points: `prepare`, `train`, `evaluate`, `simulate` and
//! `baseline`. Every command takes an optional TOML config plus `--set
//! section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{list_wavs, read_wav, write_wav, AudioClip};
use crate::baseline::{baseline_simulate, parse_mode};
use crate::config::RunConfig;
use crate::dataset::{
    build_splits, noisy_twin, scan_speaker_dirs, write_toy_corpus, CommandCodec, Mode, NoiseSource, NoiseType,
    SourceUtterance, Split, SplitManifest, ToyCorpusSpec,
};
use crate::error::{config_err, data_err, Error, Result};
use crate::eval::{
    average_scores, render_report, score_output_clips, score_translator_clips, select_best, CheckpointScore,
    ClipScore, EvalPair, EvalReport, Protocol, ReportRow, RowMode,
};
use crate::metrics::{mean_of, MetricPair};
use crate::models::Family;
use crate::pipeline::{simulate, IdentityTranslator};
use crate::train::{list_checkpoints, train, Checkpoint, GanTranslator, RunLock, TrainData};

#[derive(Debug, Parser)]
#[command(name = "noisysim", version, about = "Simulate noisy speech from clean speech")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build noisy twins and speaker-disjoint train/val/test manifests.
    Prepare(PrepareArgs),
    /// Train one model family on a manifest's training split.
    Train(TrainArgs),
    /// Score a run's checkpoints under one of the two protocols.
    Evaluate(EvaluateArgs),
    /// Turn one clean WAV into a simulated noisy WAV.
    Simulate(SimulateArgs),
    /// Aggregated noise plus a G.726 round trip, without a model.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load_or(&self, fallback: Option<&Path>) -> Result<RunConfig> {
        let base = match (&self.config, fallback) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(p)) if p.exists() => RunConfig::load(p)?,
            _ => RunConfig::default(),
        };
        let cfg = base.with_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn load(&self) -> Result<RunConfig> {
        self.load_or(None)
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Output directory for noisy audio and `manifest.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_from_str::<NoiseType>)]
    pub noise_type: Option<NoiseType>,
    #[arg(long, value_parser = parse_from_str::<Mode>)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus root holding `clean/<speaker>/*.wav` (and, for uhf_vhf,
    /// matching `noisy/<speaker>/*.wav`).
    #[arg(long, conflicts_with = "toy", required_unless_present = "toy")]
    pub corpus: Option<PathBuf>,
    /// Noise clips mixed into clean speech for stationary and
    /// non_stationary sets.
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,
    /// Generate the synthetic tone corpus with white noise at 5 dB.
    #[arg(long)]
    pub toy: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = PossibleValuesParser::new(Family::ALL.map(Family::name)))]
    pub model: String,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Defaults to `data.manifest` of the config.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Continue from this checkpoint; the run directory's config is used
    /// unless `--config` is given.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value = "best", value_parser = ["best", "average"])]
    pub protocol: String,
    /// Add a row for the G.726 baseline on the test split.
    #[arg(long, requires = "noise_dir")]
    pub baseline: bool,
    /// Noise clips for the baseline row.
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,
    /// Dataset label in the report; defaults to the manifest's noise type.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Report directory; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, required_unless_present = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Pass spectrograms through unchanged, to hear what the pipeline alone
    /// does.
    #[arg(long, conflicts_with = "checkpoint")]
    pub identity: bool,
    #[arg(long)]
    pub output: PathBuf,
    /// Pipeline settings for `--identity`; a checkpoint carries its own.
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub noise_dir: PathBuf,
    /// Fixed mixing SNR in dB; otherwise drawn per clip from the configured
    /// range.
    #[arg(long)]
    pub snr: Option<f64>,
    /// G.726 rate: 16k, 24k, 32k or 40k.
    #[arg(long)]
    pub mode: Option<String>,
    /// A WAV file or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    /// A WAV file, or a directory mirroring `--input`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses the process arguments, runs the command and maps errors to exit
/// code 1 (usage errors exit with 2).
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Baseline(a) => cmd_baseline(&a),
    }
}

fn load_clips(paths: &[PathBuf], rate: u32) -> Result<Vec<AudioClip>> {
    paths.iter().map(|p| read_wav(p, rate)).collect()
}

fn load_pairs(manifest: &SplitManifest, split: Split, rate: u32) -> Result<Vec<EvalPair>> {
    manifest
        .pairs(split)
        .iter()
        .map(|(c, n)| {
            Ok(EvalPair {
                clean: read_wav(c, rate)?,
                noisy: read_wav(n, rate)?,
            })
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes noisy twins (or ingests existing ones), builds the splits and
/// writes `manifest.jsonl`. Returns the manifest path.
pub fn cmd_prepare(a: &PrepareArgs) -> Result<PathBuf> {
    let mut cfg = a.config.load()?;
    if let Some(t) = a.noise_type {
        cfg.data.noise_type = t;
    }
    if let Some(m) = a.mode {
        cfg.train.mode = m;
    }
    if let Some(s) = a.seed {
        cfg.data.seed = s;
    }
    let (noise_type, mode, seed) = (cfg.data.noise_type, cfg.train.mode, cfg.data.seed);
    create_dir(&a.out)?;
    let corpus = if a.toy {
        if noise_type != NoiseType::Stationary {
            return Err(config_err!("the toy corpus uses stationary white noise, not {noise_type}"));
        }
        let spec = ToyCorpusSpec {
            seed,
            sample_rate: cfg.pipeline.sample_rate,
            ..ToyCorpusSpec::default()
        };
        write_toy_corpus(&a.out.join("corpus"), &spec)?
    } else {
        let root = a.corpus.as_ref().expect("clap requires corpus without --toy");
        prepare_corpus(root, &a.out, noise_type, a.noise_dir.as_deref(), &cfg)?
    };
    let manifest = build_splits(&corpus, noise_type, mode, &cfg.data.targets, seed)?;
    let path = a.out.join("manifest.jsonl");
    manifest.write_jsonl(&path)?;
    cfg.data.manifest = Some(path.clone());
    cfg.save(&a.out.join("prepare.toml"))?;
    for split in Split::ALL {
        let (c, n) = manifest.durations(split);
        println!(
            "{split}: {} speakers, {c:.1} s clean, {n:.1} s noisy",
            manifest.speakers(split).len()
        );
    }
    println!("manifest: {}", path.display());
    Ok(path)
}

fn prepare_corpus(
    root: &Path,
    out: &Path,
    noise_type: NoiseType,
    noise_dir: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Vec<SourceUtterance>> {
    let clean_root = root.join("clean");
    if !clean_root.is_dir() {
        return Err(data_err!(
            "corpus {} has no clean/ directory; expected clean/<speaker>/<utterance>.wav",
            root.display()
        ));
    }
    let rate = cfg.pipeline.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data.seed);
    let pool = match noise_type {
        NoiseType::Stationary | NoiseType::NonStationary => {
            let dir = noise_dir.ok_or_else(|| config_err!("{noise_type} sets need --noise-dir"))?;
            let paths = list_wavs(dir)?;
            if paths.is_empty() {
                return Err(data_err!("no .wav noise clips under {}", dir.display()));
            }
            load_clips(&paths, rate)?
        }
        _ => Vec::new(),
    };
    let codec = CommandCodec::new(cfg.data.codec.clone());
    let mut corpus = Vec::new();
    for (speaker, clean_path) in scan_speaker_dirs(&clean_root)? {
        let name = clean_path.file_name().expect("wav file name");
        let clean = read_wav(&clean_path, rate)?;
        let noisy_path = match noise_type {
            NoiseType::UhfVhf => {
                let p = root.join("noisy").join(&speaker).join(name);
                if !p.is_file() {
                    return Err(data_err!("{} has no noisy twin at {}", clean_path.display(), p.display()));
                }
                p
            }
            _ => {
                let source = match noise_type {
                    NoiseType::Codec => NoiseSource::Codec(&codec),
                    _ => NoiseSource::Mix(&pool),
                };
                let noisy = noisy_twin(&clean, &source, cfg.data.snr_db, &mut rng)?;
                let p = out.join("noisy").join(&speaker).join(name);
                write_wav(&p, &noisy)?;
                p
            }
        };
        corpus.push(SourceUtterance {
            speaker,
            clean: clean_path,
            noisy: noisy_path,
            duration: clean.duration_secs(),
        });
    }
    Ok(corpus)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let config_path = a.run_dir.join("config.toml");
    let mut cfg = a.config.load_or(a.resume.as_ref().map(|_| config_path.as_path()))?;
    cfg.train.family = a.model.parse()?;
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| cfg.data.manifest.clone())
        .ok_or_else(|| config_err!("no manifest: pass --manifest or set data.manifest"))?;
    let manifest = SplitManifest::read_jsonl(&manifest_path)?;
    if cfg.train.mode != manifest.mode {
        log::info!("training in {} mode to match the manifest", manifest.mode);
        cfg.train.mode = manifest.mode;
    }
    cfg.validate()?;
    let rate = cfg.pipeline.sample_rate;
    let clean = load_clips(&manifest.clean_paths(Split::Train), rate)?;
    let noisy = load_clips(&manifest.noisy_paths(Split::Train), rate)?;
    let data = TrainData::from_clips(&clean, &noisy, manifest.mode == Mode::Parallel, &cfg.pipeline)?;

    create_dir(&a.run_dir)?;
    if a.run_dir.join(".lock").exists() {
        // checked before copying the manifest; train() takes the lock itself
        return Err(Error::Environment(format!("run directory {} is in use", a.run_dir.display())));
    }
    let copy = a.run_dir.join("manifest.jsonl");
    if fs::canonicalize(&manifest_path).ok() != fs::canonicalize(&copy).ok() {
        fs::copy(&manifest_path, &copy).map_err(|e| Error::io(&copy, e))?;
    }
    cfg.data.manifest = Some(copy);
    let resume = a.resume.as_deref().map(Checkpoint::open).transpose()?;
    let outcome = train(&cfg, &data, &a.run_dir, resume.as_ref())?;
    println!(
        "{}: {} steps, {} checkpoints under {}",
        cfg.train.family,
        outcome.steps,
        outcome.checkpoints.len(),
        a.run_dir.join("checkpoints").display()
    );
    Ok(())
}

/// One row of `per_clip.csv`.
#[derive(Debug, Clone, serde::Serialize)]
struct ClipRow<'a> {
    split: &'a str,
    model: &'a str,
    epoch: Option<usize>,
    clip: &'a str,
    lsd: f64,
    mssl: f64,
}

fn mean_clips(clips: &[ClipScore]) -> Result<MetricPair> {
    mean_of(&clips.iter().map(ClipScore::metrics).collect::<Vec<_>>())
}

/// Writes `report.csv`, `report.json` and `per_clip.csv`; returns the report.
pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<EvalReport> {
    let protocol: Protocol = a.protocol.parse()?;
    let _lock = RunLock::acquire(&a.run_dir)?;
    let cfg = RunConfig::load(&a.run_dir.join("config.toml"))?;
    let manifest = SplitManifest::read_jsonl(&a.run_dir.join("manifest.jsonl"))?;
    let ckpts = list_checkpoints(&a.run_dir.join("checkpoints"))?;
    if ckpts.is_empty() {
        return Err(data_err!("no checkpoints under {}", a.run_dir.join("checkpoints").display()));
    }
    let rate = cfg.pipeline.sample_rate;
    let val = load_pairs(&manifest, Split::Val, rate)?;
    let test = load_pairs(&manifest, Split::Test, rate)?;
    let model = cfg.train.family.name();
    let dataset = a.dataset.clone().unwrap_or_else(|| manifest.noise_type.to_string());

    let mut clip_rows: Vec<(String, Option<usize>, String, Vec<ClipScore>)> = Vec::new();
    let mut scores = Vec::with_capacity(ckpts.len());
    for ckpt in &ckpts {
        let translator = GanTranslator::from_checkpoint(ckpt)?;
        let clips = score_translator_clips(&translator, &val, &ckpt.meta.config.pipeline, &cfg.metrics)?;
        scores.push(CheckpointScore {
            epoch: ckpt.epoch(),
            path: Some(ckpt.path.clone()),
            metrics: mean_clips(&clips)?,
        });
        log::info!("epoch {}: validation {:?}", ckpt.epoch(), scores.last().map(|s| s.metrics));
        clip_rows.push(("val".into(), Some(ckpt.epoch()), model.into(), clips));
    }
    let mut rows = Vec::new();
    match protocol {
        Protocol::Best => {
            let best = select_best(&scores)?;
            let ckpt = ckpts
                .iter()
                .find(|c| Some(&c.path) == best.path.as_ref())
                .expect("scored checkpoint exists");
            let translator = GanTranslator::from_checkpoint(ckpt)?;
            let clips = score_translator_clips(&translator, &test, &ckpt.meta.config.pipeline, &cfg.metrics)?;
            let m = mean_clips(&clips)?;
            rows.push(ReportRow {
                dataset: dataset.clone(),
                model: model.into(),
                mean_lsd: m.lsd,
                mean_mssl: m.mssl,
                mode: manifest.mode.into(),
                epoch: Some(best.epoch),
            });
            clip_rows.push(("test".into(), Some(best.epoch), model.into(), clips));
        }
        Protocol::Average => {
            let m = average_scores(&scores)?;
            rows.push(ReportRow {
                dataset: dataset.clone(),
                model: model.into(),
                mean_lsd: m.lsd,
                mean_mssl: m.mssl,
                mode: manifest.mode.into(),
                epoch: None,
            });
        }
    }
    if a.baseline {
        let dir = a.noise_dir.as_ref().expect("clap requires --noise-dir with --baseline");
        let clips = baseline_clips(&test, dir, &cfg)?;
        let m = mean_clips(&clips)?;
        rows.push(ReportRow {
            dataset: dataset.clone(),
            model: "g726_baseline".into(),
            mean_lsd: m.lsd,
            mean_mssl: m.mssl,
            mode: RowMode::Baseline,
            epoch: None,
        });
        clip_rows.push(("test".into(), None, "g726_baseline".into(), clips));
    }

    let report = EvalReport { protocol, rows };
    let rendered = render_report(std::slice::from_ref(&report))?;
    let out = a.out.clone().unwrap_or_else(|| a.run_dir.clone());
    create_dir(&out)?;
    let write = |name: &str, text: &str| {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.csv", &rendered.csv)?;
    write("report.json", &rendered.json)?;
    let clip_path = out.join("per_clip.csv");
    let mut w = csv::Writer::from_path(&clip_path)?;
    for (split, epoch, model, clips) in &clip_rows {
        for c in clips {
            w.serialize(ClipRow {
                split,
                model,
                epoch: *epoch,
                clip: &c.clip_id,
                lsd: c.lsd,
                mssl: c.mssl,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&clip_path, e))?;
    print!("{}", rendered.table);
    Ok(report)
}

fn baseline_clips(pairs: &[EvalPair], noise_dir: &Path, cfg: &RunConfig) -> Result<Vec<ClipScore>> {
    let rate = cfg.pipeline.sample_rate;
    let pool = load_clips(&list_wavs(noise_dir)?, rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.baseline.seed);
    let [lo, hi] = cfg.baseline.snr_db.unwrap_or(cfg.data.snr_db);
    let mut outputs = Vec::with_capacity(pairs.len());
    for p in pairs {
        let snr = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        outputs.push(baseline_simulate(&p.clean, &pool, snr, &cfg.baseline, &mut rng)?);
    }
    let references: Vec<AudioClip> = pairs.iter().map(|p| p.noisy.clone()).collect();
    score_output_clips(&outputs, &references, &cfg.pipeline, &cfg.metrics)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let output = match &a.checkpoint {
        Some(path) => {
            if !path.is_file() {
                return Err(data_err!("checkpoint {} does not exist", path.display()));
            }
            let ckpt = Checkpoint::open(path)?;
            let pipeline = &ckpt.meta.config.pipeline;
            let clean = read_wav(&a.input, pipeline.sample_rate)?;
            simulate(&clean, &GanTranslator::from_checkpoint(&ckpt)?, pipeline)?
        }
        None => {
            let cfg = a.config.load()?;
            let clean = read_wav(&a.input, cfg.pipeline.sample_rate)?;
            simulate(&clean, &IdentityTranslator, &cfg.pipeline)?
        }
    };
    write_wav(&a.output, &output)?;
    println!("{} ({:.2} s)", a.output.display(), output.duration_secs());
    Ok(())
}

pub fn cmd_baseline(a: &BaselineArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(m) = &a.mode {
        cfg.baseline.rate = parse_mode(m)?;
    }
    if let Some(s) = a.seed {
        cfg.baseline.seed = s;
    }
    if let Some(snr) = a.snr {
        cfg.baseline.snr_db = Some([snr, snr]);
    }
    cfg.validate()?;
    let rate = cfg.pipeline.sample_rate;
    let noise_paths = list_wavs(&a.noise_dir)?;
    if noise_paths.is_empty() {
        return Err(data_err!("no .wav noise clips under {}", a.noise_dir.display()));
    }
    let pool = load_clips(&noise_paths, rate)?;
    let jobs: Vec<(PathBuf, PathBuf)> = if a.input.is_dir() {
        list_wavs(&a.input)?
            .into_iter()
            .map(|p| {
                let rel = p.strip_prefix(&a.input).expect("listed under input").to_path_buf();
                (p, a.output.join(rel))
            })
            .collect()
    } else {
        vec![(a.input.clone(), a.output.clone())]
    };
    if jobs.is_empty() {
        return Err(data_err!("no .wav files under {}", a.input.display()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.baseline.seed);
    let [lo, hi] = cfg.baseline.snr_db.unwrap_or(cfg.data.snr_db);
    for (input, output) in &jobs {
        let clean = read_wav(input, rate)?;
        let snr = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        write_wav(output, &baseline_simulate(&clean, &pool, snr, &cfg.baseline, &mut rng)?)?;
    }
    println!("{} clips written to {}", jobs.len(), a.output.display());
    Ok(())
}
