//! Training loops for the four families, periodic checkpoints, a per-step
//! loss log and checkpoint-backed inference.

pub mod adam;
pub mod checkpoint;
pub mod data;

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{VarBuilder, VarMap};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::Mode;
use crate::error::{config_err, data_err, shape_err, Error, Result};
use crate::fif;
use crate::losses::{self, scalar, Side};
use crate::models::{
    build_discriminator, build_generator, components_to_tensor, extract_patch_features, init_weights,
    sample_locations, tap_sizes, tensor_to_components, Discriminator, DiscriminatorRole,
    DiscriminatorSpec, Family, FeatureExtractorSpec, Generator, GeneratorSpec, PatchHead,
};
use crate::pipeline::Translator;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{checkpoint_name, list_checkpoints, Checkpoint, CheckpointMeta};
pub use data::{Batch, TrainData};

/// RNG stream used for crops, masks and patch locations; weights are drawn
/// from the seed directly.
const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub family: Family,
    pub mode: Mode,
    pub epochs: usize,
    pub checkpoint_interval: usize,
    pub batch_size: usize,
    /// Defaults to one pass over the larger domain's frames per epoch.
    pub steps_per_epoch: Option<usize>,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Second adversarial loss for the cycle families.
    pub second_adversarial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            family: Family::SpeechAttention,
            mode: Mode::NonParallel,
            epochs: 1000,
            checkpoint_interval: 50,
            batch_size: 1,
            steps_per_epoch: None,
            lr_generator: 2e-4,
            lr_discriminator: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            second_adversarial: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.checkpoint_interval == 0 || self.batch_size == 0 {
            return Err(config_err!("epochs, checkpoint_interval and batch_size must be at least 1"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(config_err!("steps_per_epoch must be at least 1"));
        }
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return Err(config_err!("learning rates must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(config_err!("beta1 and beta2 must lie in [0, 1)"));
        }
        if self.family.requires_parallel() && self.mode != Mode::Parallel {
            return Err(config_err!("{} trains on aligned pairs; set train.mode = \"parallel\"", self.family));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamParams {
        AdamParams {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    /// `⌊epochs / interval⌋` periodic checkpoints plus a final one when the
    /// last epoch is not a multiple of the interval.
    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        (1..=self.epochs)
            .filter(|e| e % self.checkpoint_interval == 0 || *e == self.epochs)
            .collect()
    }
}

pub fn loss_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::SpeechAttention | Family::MaskCycleGan => {
            &["g_total", "adv", "adv2", "cycle", "identity", "d_total"]
        }
        Family::SimuGan => &["g_total", "adv", "nce", "d_total"],
        Family::Speech2Speech => &["g_total", "adv", "l1", "d_total"],
    }
}

/// The networks of one run, all registered in a single variable map under
/// fixed prefixes. `g_ab` always maps clean to noisy.
struct Nets {
    varmap: VarMap,
    g_ab: Generator,
    g_ba: Option<Generator>,
    d_b: Discriminator,
    d_a: Option<Discriminator>,
    d2_a: Option<Discriminator>,
    d2_b: Option<Discriminator>,
    head: Option<PatchHead>,
}

const G_PREFIXES: [&str; 3] = ["g_ab", "g_ba", "head"];
const D_PREFIXES: [&str; 4] = ["d_a", "d_b", "d2_a", "d2_b"];

impl Nets {
    fn build(cfg: &RunConfig, n_freq: usize, device: &Device) -> Result<Self> {
        let family = cfg.train.family;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, device);
        let gspec = GeneratorSpec::new(family, &cfg.model, n_freq, cfg.pipeline.component_width);
        let dspec = |role| DiscriminatorSpec::new(family, role, &cfg.model);
        let g_ab = build_generator(&gspec, vb.pp("g_ab"))?;
        let d_b = build_discriminator(&dspec(DiscriminatorRole::Primary), vb.pp("d_b"))?;
        let (mut g_ba, mut d_a, mut d2_a, mut d2_b, mut head) = (None, None, None, None, None);
        if family.is_cycle() {
            g_ba = Some(build_generator(&gspec, vb.pp("g_ba"))?);
            d_a = Some(build_discriminator(&dspec(DiscriminatorRole::Primary), vb.pp("d_a"))?);
            if cfg.train.second_adversarial {
                let second = dspec(DiscriminatorRole::SecondAdversarial);
                d2_a = Some(build_discriminator(&second, vb.pp("d2_a"))?);
                d2_b = Some(build_discriminator(&second, vb.pp("d2_b"))?);
            }
        }
        if family == Family::SimuGan {
            let spec = FeatureExtractorSpec {
                layers: cfg.model.nce_layers.clone(),
                patches_per_layer: cfg.model.nce_patches,
                dim: cfg.model.nce_dim,
            };
            head = Some(PatchHead::new(&spec, &g_ab, vb.pp("head"))?);
        }
        init_weights(&varmap, cfg.train.seed)?;
        Ok(Self {
            varmap,
            g_ab,
            g_ba,
            d_b,
            d_a,
            d2_a,
            d2_b,
            head,
        })
    }
}

/// Trainer state for one run: networks, optimizers, step counters and the
/// sampling RNG.
pub struct Trainer {
    cfg: RunConfig,
    device: Device,
    n_freq: usize,
    nets: Nets,
    opt_g: Adam,
    opt_d: Adam,
    step: u64,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, n_freq: usize) -> Result<Self> {
        cfg.validate()?;
        let device = Device::Cpu;
        let nets = Nets::build(cfg, n_freq, &device)?;
        let opt_g = Adam::new(&nets.varmap, &G_PREFIXES, cfg.train.adam(cfg.train.lr_generator))?;
        let opt_d = Adam::new(&nets.varmap, &D_PREFIXES, cfg.train.adam(cfg.train.lr_discriminator))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self {
            cfg: cfg.clone(),
            device,
            n_freq,
            nets,
            opt_g,
            opt_d,
            step: 0,
            epoch: 0,
            rng,
        })
    }

    /// Restores networks, optimizer moments, counters and the RNG position.
    pub fn resume(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta.family != cfg.train.family {
            return Err(config_err!(
                "checkpoint {} is {}, the run is {}",
                ckpt.path.display(),
                ckpt.meta.family,
                cfg.train.family
            ));
        }
        if ckpt.meta.fingerprint != cfg.fingerprint() {
            log::warn!("resuming {} under a different configuration", ckpt.path.display());
        }
        let mut t = Self::new(cfg, ckpt.meta.n_freq)?;
        let tensors = ckpt.tensors(&t.device)?;
        {
            let data = t.nets.varmap.data().lock().expect("varmap lock poisoned");
            for (name, var) in data.iter() {
                let v = tensors
                    .get(name)
                    .ok_or_else(|| shape_err!("checkpoint lacks variable {name}"))?;
                if v.dims() != var.dims() {
                    return Err(shape_err!("{name}: {:?} in checkpoint, {:?} in model", v.dims(), var.dims()));
                }
                var.set(v)?;
            }
        }
        t.opt_g.load_state("opt_g", &tensors, ckpt.meta.opt_g_steps)?;
        t.opt_d.load_state("opt_d", &tensors, ckpt.meta.opt_d_steps)?;
        t.step = ckpt.meta.step;
        t.epoch = ckpt.meta.epoch;
        t.rng.set_word_pos(ckpt.rng_word_pos()?);
        Ok(t)
    }

    pub fn family(&self) -> Family {
        self.cfg.train.family
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn generator(&self) -> &Generator {
        &self.nets.g_ab
    }

    /// Whether a target-to-source generator exists.
    pub fn has_cycle_path(&self) -> bool {
        self.nets.g_ba.is_some()
    }

    /// Sorted names of all network variables.
    pub fn variable_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.nets.varmap.data().lock().expect("varmap lock poisoned").keys().cloned().collect();
        v.sort();
        v
    }

    /// One generator update followed by one discriminator update. Returns the
    /// values named by [`loss_names`].
    pub fn train_step(&mut self, data: &TrainData) -> Result<Vec<f64>> {
        if data.n_freq() != self.n_freq {
            return Err(shape_err!("data has {} bins, model {}", data.n_freq(), self.n_freq));
        }
        let width = self.cfg.pipeline.component_width;
        let batch = data.sample(&mut self.rng, width, self.cfg.train.batch_size, &self.device)?;
        let values = match self.family() {
            Family::SpeechAttention | Family::MaskCycleGan => self.cycle_step(&batch)?,
            Family::SimuGan => self.simugan_step(&batch)?,
            Family::Speech2Speech => self.paired_step(&batch)?,
        };
        self.step += 1;
        Ok(values)
    }

    /// `(B, 1, F, W)` FIF masks, or `None` when disabled.
    fn masks(&mut self, b: usize) -> Result<Option<Tensor>> {
        if !self.cfg.fif.enabled {
            return Ok(None);
        }
        let w = self.cfg.pipeline.component_width;
        let masks: Vec<Array2<f32>> = (0..b)
            .map(|_| Ok(fif::sample_mask(self.n_freq, w, self.cfg.fif.max_band_width, &mut self.rng)?.mask))
            .collect::<Result<_>>()?;
        let flat: Vec<f32> = masks.iter().flat_map(|m| m.iter().copied()).collect();
        Ok(Some(Tensor::from_vec(flat, (b, 1, self.n_freq, w), &self.device)?))
    }

    fn cycle_step(&mut self, batch: &Batch) -> Result<Vec<f64>> {
        let w = self.cfg.losses.clone();
        let b = batch.clean.dim(0)?;
        let mask_a = self.masks(b)?;
        let mask_b = self.masks(b)?;
        let n = &self.nets;
        let g_ba = n.g_ba.as_ref().expect("cycle family has g_ba");
        let d_a = n.d_a.as_ref().expect("cycle family has d_a");
        let (real_a, real_b) = (&batch.clean, &batch.noisy);

        let fake_b = n.g_ab.translate(real_a, mask_a.as_ref())?;
        let cyc_a = g_ba.translate(&fake_b, None)?;
        let fake_a = g_ba.translate(real_b, mask_b.as_ref())?;
        let cyc_b = n.g_ab.translate(&fake_a, None)?;

        let adv = (losses::lsgan_generator(&n.d_b.forward(&fake_b)?)?
            + losses::lsgan_generator(&d_a.forward(&fake_a)?)?)?;
        let cycle = (losses::cycle_loss(real_a, &cyc_a)? + losses::cycle_loss(real_b, &cyc_b)?)?;
        let mut g_total = ((&adv * w.adv)? + (&cycle * w.cycle)?)?;
        let mut adv2_value = 0.0;
        if let (Some(d2_a), Some(d2_b)) = (&n.d2_a, &n.d2_b) {
            let adv2 = (losses::second_adversarial_loss(real_a, &cyc_a, d2_a, Side::Generator)?
                + losses::second_adversarial_loss(real_b, &cyc_b, d2_b, Side::Generator)?)?;
            adv2_value = scalar(&adv2)?;
            g_total = (g_total + (adv2 * w.adv2)?)?;
        }
        let id_weight = w.identity_at(self.step as usize);
        let mut identity_value = 0.0;
        if id_weight > 0.0 {
            let identity = (losses::identity_loss(real_b, &n.g_ab.translate(real_b, None)?)?
                + losses::identity_loss(real_a, &g_ba.translate(real_a, None)?)?)?;
            identity_value = scalar(&identity)?;
            g_total = (g_total + (identity * id_weight)?)?;
        }
        let g_value = finite_value(&g_total, "generator total")?;
        self.opt_g.step(&g_total.backward()?)?;

        let (fake_a, fake_b) = (fake_a.detach(), fake_b.detach());
        let mut d_total = (losses::lsgan_discriminator(&n.d_b.forward(real_b)?, &n.d_b.forward(&fake_b)?)?
            + losses::lsgan_discriminator(&d_a.forward(real_a)?, &d_a.forward(&fake_a)?)?)?;
        if let (Some(d2_a), Some(d2_b)) = (&n.d2_a, &n.d2_b) {
            d_total = (d_total
                + losses::second_adversarial_loss(real_a, &cyc_a, d2_a, Side::Discriminator)?
                + losses::second_adversarial_loss(real_b, &cyc_b, d2_b, Side::Discriminator)?)?;
        }
        let d_total = (d_total * 0.5)?;
        let d_value = finite_value(&d_total, "discriminator total")?;
        self.opt_d.step(&d_total.backward()?)?;

        Ok(vec![g_value, scalar(&adv)?, adv2_value, scalar(&cycle)?, identity_value, d_value])
    }

    fn simugan_step(&mut self, batch: &Batch) -> Result<Vec<f64>> {
        let w = self.cfg.losses.clone();
        let head = self.nets.head.as_ref().expect("simugan has a patch head");
        let sizes = tap_sizes(&self.nets.g_ab, head);
        let locations = sample_locations(&sizes, self.cfg.model.nce_patches, &mut self.rng);
        let n = &self.nets;
        let (real_a, real_b) = (&batch.clean, &batch.noisy);

        let fake_b = n.g_ab.translate(real_a, None)?;
        let adv = losses::lsgan_generator(&n.d_b.forward(&fake_b)?)?;
        let mut nce = nce_between(n, real_a, &fake_b, &locations, w.nce_temperature)?;
        if w.nce_identity {
            let idt = n.g_ab.translate(real_b, None)?;
            nce = ((nce + nce_between(n, real_b, &idt, &locations, w.nce_temperature)?)? * 0.5)?;
        }
        let g_total = ((&adv * w.adv)? + (&nce * w.nce)?)?;
        let g_value = finite_value(&g_total, "generator total")?;
        self.opt_g.step(&g_total.backward()?)?;

        let d_total = (losses::lsgan_discriminator(&n.d_b.forward(real_b)?, &n.d_b.forward(&fake_b.detach())?)?
            * 0.5)?;
        let d_value = finite_value(&d_total, "discriminator total")?;
        self.opt_d.step(&d_total.backward()?)?;
        Ok(vec![g_value, scalar(&adv)?, scalar(&nce)?, d_value])
    }

    fn paired_step(&mut self, batch: &Batch) -> Result<Vec<f64>> {
        let w = self.cfg.losses.clone();
        let n = &self.nets;
        let (real_a, real_b) = (&batch.clean, &batch.noisy);
        let fake_b = n.g_ab.translate(real_a, None)?;
        let adv = losses::lsgan_generator(&n.d_b.forward(&Tensor::cat(&[real_a, &fake_b], 1)?)?)?;
        let l1 = losses::l1_supervised_loss(&fake_b, real_b)?;
        let g_total = ((&adv * w.adv)? + (&l1 * w.l1)?)?;
        let g_value = finite_value(&g_total, "generator total")?;
        self.opt_g.step(&g_total.backward()?)?;

        let real_pair = Tensor::cat(&[real_a, real_b], 1)?;
        let fake_pair = Tensor::cat(&[real_a, &fake_b.detach()], 1)?;
        let d_total =
            (losses::lsgan_discriminator(&n.d_b.forward(&real_pair)?, &n.d_b.forward(&fake_pair)?)? * 0.5)?;
        let d_value = finite_value(&d_total, "discriminator total")?;
        self.opt_d.step(&d_total.backward()?)?;
        Ok(vec![g_value, scalar(&adv)?, scalar(&l1)?, d_value])
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            family: self.family(),
            epoch: self.epoch,
            step: self.step,
            fingerprint: self.cfg.fingerprint(),
            config: self.cfg.clone(),
            n_freq: self.n_freq,
            opt_g_steps: self.opt_g.steps(),
            opt_d_steps: self.opt_d.steps(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<Checkpoint> {
        let mut tensors: Vec<(String, Tensor)> = {
            let data = self.nets.varmap.data().lock().expect("varmap lock poisoned");
            data.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect()
        };
        tensors.extend(self.opt_g.state("opt_g"));
        tensors.extend(self.opt_d.state("opt_d"));
        Checkpoint::write(path, tensors, self.meta())
    }
}

fn finite_value(t: &Tensor, what: &str) -> Result<f64> {
    let v = scalar(t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} loss is {v}")))
    }
}

/// PatchNCE between a generator input and its output: queries from the
/// output, detached keys from the input at the same locations, averaged over
/// taps and batch items.
fn nce_between(
    n: &Nets,
    input: &Tensor,
    output: &Tensor,
    locations: &[Vec<usize>],
    temperature: f64,
) -> Result<Tensor> {
    let head = n.head.as_ref().expect("simugan has a patch head");
    let q = extract_patch_features(head, &n.g_ab, &n.g_ab.input(output, None)?, locations)?;
    let k = extract_patch_features(head, &n.g_ab, &n.g_ab.input(input, None)?, locations)?;
    let mut terms = Vec::new();
    for (ql, kl) in q.iter().zip(&k) {
        for i in 0..ql.dim(0)? {
            terms.push(losses::patchnce_loss(&ql.get(i)?, &kl.get(i)?.detach(), temperature)?);
        }
    }
    let count = terms.len() as f64;
    Ok((Tensor::stack(&terms, 0)?.sum_all()? / count)?)
}

/// Exclusive lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock(PathBuf);

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Environment(format!(
                "run directory {} is in use (remove {} if no other run is active)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub steps: u64,
    pub last_losses: Vec<f64>,
}

/// Trains `cfg.train.family` on `data`, writing `config.toml`, `losses.csv`
/// and `checkpoints/epoch_*.safetensors` under `run_dir`. With `resume`, the
/// run continues from that checkpoint's epoch.
pub fn train(cfg: &RunConfig, data: &TrainData, run_dir: &Path, resume: Option<&Checkpoint>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let family = cfg.train.family;
    if (cfg.train.mode == Mode::Parallel || family.requires_parallel()) && !data.paired {
        return Err(data_err!("{family} in {} mode needs aligned clean/noisy pairs", cfg.train.mode));
    }
    let ckpt_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let _lock = RunLock::acquire(run_dir)?;
    cfg.save(&run_dir.join("config.toml"))?;

    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(cfg, ckpt)?,
        None => Trainer::new(cfg, data.n_freq())?,
    };
    let steps_per_epoch = cfg.train.steps_per_epoch.unwrap_or_else(|| {
        (data.max_frames() / (cfg.pipeline.component_width * cfg.train.batch_size)).max(1)
    });

    let log_path = run_dir.join("losses.csv");
    let append = resume.is_some() && log_path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut log = csv::Writer::from_writer(file);
    if !append {
        let mut header = vec!["step", "epoch"];
        header.extend(loss_names(family));
        log.write_record(&header)?;
    }

    let mut checkpoints = Vec::new();
    let mut last_losses = Vec::new();
    for epoch in trainer.epoch + 1..=cfg.train.epochs {
        trainer.epoch = epoch;
        for _ in 0..steps_per_epoch {
            let losses = match trainer.train_step(data) {
                Ok(v) => v,
                Err(Error::Numerical(msg)) => {
                    log.flush().map_err(|e| Error::io(&log_path, e))?;
                    return Err(nan_abort(&trainer, run_dir, &msg));
                }
                Err(e) => return Err(e),
            };
            let mut row = vec![trainer.step.to_string(), epoch.to_string()];
            row.extend(losses.iter().map(|v| format!("{v:.6e}")));
            log.write_record(&row)?;
            last_losses = losses;
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        if epoch % cfg.train.checkpoint_interval == 0 || epoch == cfg.train.epochs {
            let ckpt = trainer.save(&ckpt_dir.join(checkpoint_name(epoch)))?;
            log::info!("{family} epoch {epoch} step {}: {:?}", trainer.step, last_losses);
            checkpoints.push(ckpt);
        }
    }
    Ok(TrainOutcome {
        checkpoints,
        steps: trainer.step,
        last_losses,
    })
}

/// Saves the trainer state next to the loss log and turns the failure into
/// an error that names the snapshot.
fn nan_abort(trainer: &Trainer, run_dir: &Path, msg: &str) -> Error {
    let path = run_dir.join("nan_snapshot.safetensors");
    let saved = match trainer.save(&path) {
        Ok(_) => format!("snapshot at {}", path.display()),
        Err(e) => format!("snapshot failed: {e}"),
    };
    Error::Numerical(format!(
        "{msg} at step {} (epoch {}); {saved}",
        trainer.step + 1,
        trainer.epoch
    ))
}

fn with_family(cfg: &RunConfig, family: Family) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.train.family = family;
    if family.requires_parallel() {
        cfg.train.mode = Mode::Parallel;
    }
    cfg
}

pub fn train_speech_attention_gan(cfg: &RunConfig, data: &TrainData, run_dir: &Path) -> Result<Vec<Checkpoint>> {
    Ok(train(&with_family(cfg, Family::SpeechAttention), data, run_dir, None)?.checkpoints)
}

pub fn train_mask_cyclegan_augment(cfg: &RunConfig, data: &TrainData, run_dir: &Path) -> Result<Vec<Checkpoint>> {
    Ok(train(&with_family(cfg, Family::MaskCycleGan), data, run_dir, None)?.checkpoints)
}

pub fn train_simugan(cfg: &RunConfig, data: &TrainData, run_dir: &Path) -> Result<Vec<Checkpoint>> {
    Ok(train(&with_family(cfg, Family::SimuGan), data, run_dir, None)?.checkpoints)
}

pub fn train_speech2speech_augment(cfg: &RunConfig, data: &TrainData, run_dir: &Path) -> Result<Vec<Checkpoint>> {
    Ok(train(&with_family(cfg, Family::Speech2Speech), data, run_dir, None)?.checkpoints)
}

/// The clean-to-noisy generator of a checkpoint as a pipeline translator.
/// Components are translated with the all-ones inference mask.
pub struct GanTranslator {
    generator: Generator,
    device: Device,
    chunk: usize,
}

impl GanTranslator {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let device = Device::Cpu;
        let meta = &ckpt.meta;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let spec = GeneratorSpec::new(meta.family, &meta.config.model, meta.n_freq, meta.config.pipeline.component_width);
        let generator = build_generator(&spec, vb.pp("g_ab"))?;
        let tensors = ckpt.tensors(&device)?;
        {
            let data = varmap.data().lock().expect("varmap lock poisoned");
            for (name, var) in data.iter() {
                let v = tensors
                    .get(name)
                    .ok_or_else(|| shape_err!("{} lacks {name}", ckpt.path.display()))?;
                var.set(v)?;
            }
        }
        Ok(Self {
            generator,
            device,
            chunk: 8,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }
}

impl Translator for GanTranslator {
    fn translate(&self, components: &[Array2<f32>]) -> Result<Vec<Array2<f32>>> {
        let mut out = Vec::with_capacity(components.len());
        for chunk in components.chunks(self.chunk) {
            let x = components_to_tensor(chunk, &self.device)?;
            out.extend(tensor_to_components(&self.generator.translate(&x, None)?)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use crate::pipeline::PipelineConfig;

    /// Tiny networks on 32x32 components.
    pub(crate) fn tiny_config(family: Family) -> RunConfig {
        let mut cfg = RunConfig {
            pipeline: PipelineConfig {
                n_fft: 62,
                window_length: 62,
                hop_length: 16,
                component_width: 32,
                ..PipelineConfig::default()
            },
            model: ModelConfig {
                base_channels: 4,
                res_blocks: 1,
                attention_heads: 2,
                unet_depth: 3,
                disc_channels: 4,
                disc_layers: 2,
                nce_layers: vec![0, 2, 3],
                nce_patches: 16,
                nce_dim: 8,
            },
            ..RunConfig::default()
        };
        cfg.fif.max_band_width = 8;
        cfg.train = TrainConfig {
            family,
            mode: if family.requires_parallel() { Mode::Parallel } else { Mode::NonParallel },
            epochs: 2,
            checkpoint_interval: 1,
            steps_per_epoch: Some(2),
            ..TrainConfig::default()
        };
        cfg
    }

    fn toy_data(paired: bool) -> TrainData {
        let ramp = |k: f32| Array2::from_shape_fn((32, 40), |(r, c)| ((r * 7 + c * 3) as f32 * k) % 255.0);
        let clean = vec![ramp(1.0), ramp(1.3), ramp(0.7), ramp(2.0)];
        let noisy = clean.iter().map(|m| m.mapv(|v| (v + 40.0).min(255.0))).collect();
        TrainData::new(clean, noisy, paired).unwrap()
    }

    #[test]
    fn checkpoint_schedule_counts() {
        let mut t = TrainConfig {
            epochs: 1000,
            checkpoint_interval: 50,
            ..TrainConfig::default()
        };
        assert_eq!(t.checkpoint_epochs().len(), 20);
        t.epochs = 1001;
        assert_eq!(t.checkpoint_epochs().len(), 21);
        assert_eq!(*t.checkpoint_epochs().last().unwrap(), 1001);
    }

    #[test]
    fn simugan_has_no_cycle_path() {
        let t = Trainer::new(&tiny_config(Family::SimuGan), 32).unwrap();
        assert!(!t.has_cycle_path());
        assert!(t.variable_names().iter().all(|n| !n.starts_with("g_ba.")));
        assert!(!loss_names(Family::SimuGan).contains(&"cycle"));
        for f in [Family::SpeechAttention, Family::MaskCycleGan] {
            assert!(Trainer::new(&tiny_config(f), 32).unwrap().has_cycle_path());
        }
    }

    #[test]
    fn second_adversarial_is_switchable() {
        let mut cfg = tiny_config(Family::MaskCycleGan);
        let names = Trainer::new(&cfg, 32).unwrap().variable_names();
        assert!(names.iter().any(|n| n.starts_with("d2_a.")));
        cfg.train.second_adversarial = false;
        let names = Trainer::new(&cfg, 32).unwrap().variable_names();
        assert!(!names.iter().any(|n| n.starts_with("d2_")));
    }

    #[test]
    fn every_family_steps_with_finite_losses() {
        for family in Family::ALL {
            let cfg = tiny_config(family);
            let data = toy_data(family.requires_parallel());
            let mut t = Trainer::new(&cfg, 32).unwrap();
            for _ in 0..2 {
                let v = t.train_step(&data).unwrap_or_else(|e| panic!("{family}: {e}"));
                assert_eq!(v.len(), loss_names(family).len());
                assert!(v.iter().all(|x| x.is_finite()), "{family}: {v:?}");
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_losses() {
        for family in [Family::MaskCycleGan, Family::SimuGan] {
            let cfg = tiny_config(family);
            let data = toy_data(false);
            let run = || {
                let mut t = Trainer::new(&cfg, 32).unwrap();
                (0..3).map(|_| t.train_step(&data).unwrap()).collect::<Vec<_>>()
            };
            assert_eq!(run(), run(), "{family}");
        }
    }

    #[test]
    fn unpaired_data_is_rejected_for_parallel_training() {
        let cfg = tiny_config(Family::Speech2Speech);
        let dir = tempfile::tempdir().unwrap();
        let err = train(&cfg, &toy_data(false), dir.path(), None).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        let mut bad = tiny_config(Family::Speech2Speech);
        bad.train.mode = Mode::NonParallel;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn run_directory_is_locked() {
        let dir = tempfile::tempdir().unwrap();
        let _held = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(Error::Environment(_))));
    }

    #[test]
    fn nan_aborts_with_a_snapshot() {
        let mut cfg = tiny_config(Family::Speech2Speech);
        cfg.train.lr_generator = 1e30;
        cfg.train.lr_discriminator = 1e30;
        cfg.losses.l1 = 1e30;
        let dir = tempfile::tempdir().unwrap();
        cfg.train.steps_per_epoch = Some(20);
        match train(&cfg, &toy_data(true), dir.path(), None) {
            Err(Error::Numerical(msg)) => {
                assert!(msg.contains("snapshot at"), "{msg}");
                assert!(dir.path().join("nan_snapshot.safetensors").exists());
            }
            other => panic!("expected a numerical error, got {other:?}"),
        }
    }
}
