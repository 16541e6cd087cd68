//! Log-spectral distance and multi-scale spectral loss between a clean
//! utterance and noisy versions of it at several SNRs.
//!
//! `cargo run --example metrics`

use noisysim::dataset::{mix_noise_at, toy_utterance, white_noise};
use noisysim::metrics::{lsd, mssl, LsdConfig, MsslConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean = toy_utterance(3, 1, 2.0, 16_000, 1);
    let noise = white_noise(clean.len(), 16_000, 2);
    let (lcfg, mcfg) = (LsdConfig::default(), MsslConfig::default());
    println!("{:>8} {:>8} {:>8}", "SNR dB", "LSD", "MSSL");
    println!("{:>8} {:>8.3} {:>8.3}", "clean", lsd(&clean, &clean, &lcfg)?, mssl(&clean, &clean, &mcfg)?);
    for snr in [30.0, 20.0, 10.0, 5.0, 0.0] {
        let noisy = mix_noise_at(&clean, &noise, snr, 0)?;
        println!("{snr:>8} {:>8.3} {:>8.3}", lsd(&clean, &noisy, &lcfg)?, mssl(&clean, &noisy, &mcfg)?);
    }
    let louder = clean.map_samples(|v| 10.0 * v);
    println!("x vs 10x: LSD {:.4} dB", lsd(&clean, &louder, &lcfg)?);
    Ok(())
}
