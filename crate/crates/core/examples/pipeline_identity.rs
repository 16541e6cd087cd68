//! Runs a synthetic utterance through analysis and resynthesis with the
//! identity translator and reports how much of it survives.
//!
//! `cargo run --example pipeline_identity`

use noisysim::dataset::toy_utterance;
use noisysim::metrics::si_snr;
use noisysim::pipeline::{analyze, normalize_loudness, simulate, IdentityTranslator, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PipelineConfig::default();
    let clip = toy_utterance(0, 0, 3.0, cfg.sample_rate, 7);
    let analysis = analyze(&clip, &cfg)?;
    println!(
        "{} samples -> {} components of {} bins x {} frames, {} padded frames",
        clip.len(),
        analysis.batch.components.len(),
        cfg.n_freq(),
        cfg.component_width,
        analysis.batch.pad_frames
    );
    let out = simulate(&clip, &IdentityTranslator, &cfg)?;
    let reference = normalize_loudness(&clip, cfg.target_rms_dbfs)?;
    println!("output {} samples at {:.1} dBFS", out.len(), out.rms_dbfs());
    println!("SI-SNR vs normalized input: {:.1} dB", si_snr(&reference.samples, &out.samples));
    Ok(())
}
