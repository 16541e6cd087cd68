//! The G.726 codec on its own and the baseline augmenter built on it:
//! aggregated noise at a fixed SNR followed by an 8 kHz codec round trip.
//!
//! `cargo run --example g726_baseline`

use noisysim::baseline::{baseline_simulate, g726_roundtrip, BaselineConfig};
use noisysim::dataset::{toy_utterance, white_noise};
use noisysim::g726::G726Rate;
use noisysim::metrics::si_snr;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean = toy_utterance(2, 0, 2.0, 16_000, 5);
    for rate in [G726Rate::Kbps16, G726Rate::Kbps24, G726Rate::Kbps32, G726Rate::Kbps40] {
        let coded = g726_roundtrip(&clean, rate)?;
        println!("{:>2} kbit/s round trip: SI-SNR {:5.1} dB", rate.bits() * 8, si_snr(&clean.samples, &coded.samples));
    }
    let noise: Vec<_> = (0..3).map(|i| white_noise(6000 + 1000 * i, 16_000, i as u64)).collect();
    let cfg = BaselineConfig::default();
    for snr in [20.0, 10.0, 5.0] {
        let out = baseline_simulate(&clean, &noise, snr, &cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        println!("baseline at {snr:>4} dB SNR: SI-SNR {:5.1} dB", si_snr(&clean.samples, &out.samples));
    }
    Ok(())
}
