//! Writes a small speaker-directory corpus, splits it by speaker and
//! prints the manifest summary.
//!
//! `cargo run --example dataset_prep -- [out_dir]`

use std::path::PathBuf;

use noisysim::dataset::{build_splits, write_toy_corpus, Mode, NoiseType, Split, SplitTargets, ToyCorpusSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("noisysim_prep"));
    let spec = ToyCorpusSpec {
        utterance_secs: 2.0,
        utterances_per_speaker: 10,
        ..ToyCorpusSpec::default()
    };
    let corpus = write_toy_corpus(&out, &spec)?;
    let targets = SplitTargets {
        train_secs: 60.0,
        val_secs: 30.0,
        test_secs: 40.0,
        ..SplitTargets::default()
    };
    let manifest = build_splits(&corpus, NoiseType::Stationary, Mode::NonParallel, &targets, 0)?;
    manifest.validate(&targets)?;
    for split in Split::ALL {
        let (clean, noisy) = manifest.durations(split);
        let speakers: Vec<&str> = manifest.speakers(split).into_iter().collect();
        println!("{:>5}: {clean:6.1} s clean, {noisy:6.1} s noisy, speakers {speakers:?}", split.to_string());
    }
    let path = out.join("manifest.jsonl");
    manifest.write_jsonl(&path)?;
    println!("manifest written to {}", path.display());
    Ok(())
}
