//! Trains one model family on the synthetic toy corpus at a small size,
//! picks the checkpoint with the lowest validation MSSL and compares it with
//! the identity translator.
//!
//! `cargo run --example toy_training -- [speech_attention|mask_cyclegan|simugan|speech2speech] [steps_per_epoch]`

use noisysim::config::RunConfig;
use noisysim::dataset::{toy_splits, Mode, SplitTargets, ToyCorpusSpec};
use noisysim::eval::{evaluate_translator, select_best_checkpoint, EvalPair};
use noisysim::models::Family;
use noisysim::pipeline::IdentityTranslator;
use noisysim::train::{train, TrainData};

const SMALL: [&str; 14] = [
    "pipeline.n_fft=254",
    "pipeline.window_length=254",
    "pipeline.hop_length=128",
    "pipeline.component_width=64",
    "fif.max_band_width=16",
    "model.base_channels=8",
    "model.res_blocks=3",
    "model.disc_channels=8",
    "model.nce_dim=32",
    "model.nce_patches=64",
    "model.unet_depth=5",
    "model.attention_heads=4",
    "train.epochs=3",
    "train.checkpoint_interval=1",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let family: Family = args.next().as_deref().unwrap_or("simugan").parse()?;
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let mode = if family.requires_parallel() { Mode::Parallel } else { Mode::NonParallel };

    let mut cfg = RunConfig::default().with_overrides(&SMALL)?;
    cfg.train.family = family;
    cfg.train.mode = mode;
    cfg.train.steps_per_epoch = Some(steps);

    let toy = toy_splits(&ToyCorpusSpec::default(), mode, &SplitTargets::default(), 0)?;
    let data = TrainData::from_clips(&toy.train_clean, &toy.train_noisy, mode == Mode::Parallel, &cfg.pipeline)?;
    let val: Vec<EvalPair> = toy
        .val
        .iter()
        .map(|(clean, noisy)| EvalPair {
            clean: clean.clone(),
            noisy: noisy.clone(),
        })
        .collect();

    let run_dir = std::env::temp_dir().join(format!("noisysim_toy_{family}"));
    let _ = std::fs::remove_dir_all(&run_dir);
    let outcome = train(&cfg, &data, &run_dir, None)?;
    println!("{family}: {} steps, last losses {:?}", outcome.steps, outcome.last_losses);

    let (best, m) = select_best_checkpoint(&outcome.checkpoints, &val, &cfg.metrics)?;
    let identity = evaluate_translator(&IdentityTranslator, &val, &cfg.pipeline, &cfg.metrics)?;
    println!("best epoch {}: val LSD {:.2} MSSL {:.2}", best.epoch(), m.lsd, m.mssl);
    println!("identity:     val LSD {:.2} MSSL {:.2}", identity.lsd, identity.mssl);
    println!("run directory {}", run_dir.display());
    Ok(())
}
