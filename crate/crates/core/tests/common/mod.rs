#![allow(dead_code)]

use noisysim::audio::AudioClip;
use noisysim::config::RunConfig;
use noisysim::dataset::{toy_noisy, toy_utterance};
use noisysim::models::Family;
use noisysim::train::TrainData;

/// Overrides that shrink every network and the spectrogram to test size.
pub fn tiny_overrides(family: Family) -> Vec<String> {
    let mode = if family.requires_parallel() { "parallel" } else { "non_parallel" };
    [
        "pipeline.n_fft=62",
        "pipeline.window_length=62",
        "pipeline.hop_length=16",
        "pipeline.component_width=32",
        "fif.max_band_width=8",
        "model.base_channels=4",
        "model.res_blocks=1",
        "model.attention_heads=2",
        "model.unet_depth=3",
        "model.disc_channels=4",
        "model.disc_layers=2",
        "model.nce_layers=[0, 2, 3]",
        "model.nce_patches=16",
        "model.nce_dim=8",
        "train.epochs=2",
        "train.checkpoint_interval=1",
        "train.steps_per_epoch=2",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("train.family=\"{family}\""), format!("train.mode=\"{mode}\"")])
    .collect()
}

pub fn tiny_config(family: Family) -> RunConfig {
    RunConfig::default().with_overrides(&tiny_overrides(family)).unwrap()
}

pub fn toy_pairs(n: usize, secs: f64) -> Vec<(AudioClip, AudioClip)> {
    (0..n)
        .map(|i| {
            let c = toy_utterance(i % 3, i, secs, 16_000, 11);
            let noisy = toy_noisy(&c, 5.0, 100 + i as u64).unwrap();
            (c, noisy)
        })
        .collect()
}

pub fn toy_train_data(cfg: &RunConfig, paired: bool) -> TrainData {
    let pairs = toy_pairs(4, 1.0);
    let clean: Vec<AudioClip> = pairs.iter().map(|p| p.0.clone()).collect();
    let noisy: Vec<AudioClip> = pairs.iter().map(|p| p.1.clone()).collect();
    TrainData::from_clips(&clean, &noisy, paired, &cfg.pipeline).unwrap()
}
