//! Scores two reference systems on the toy test split, the identity
//! translator and the G.726 baseline, and renders the report table.
//!
//! `cargo run --example evaluation_report`

use noisysim::baseline::{baseline_simulate, BaselineConfig};
use noisysim::config::RunConfig;
use noisysim::dataset::{toy_splits, white_noise, Mode, SplitTargets, ToyCorpusSpec};
use noisysim::eval::{
    evaluate_outputs, evaluate_translator, improvement_pct, render_report, EvalPair, EvalReport, Protocol, ReportRow,
    RowMode,
};
use noisysim::pipeline::IdentityTranslator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let toy = toy_splits(&ToyCorpusSpec::default(), Mode::NonParallel, &SplitTargets::default(), 0)?;
    let test: Vec<EvalPair> = toy
        .test
        .iter()
        .map(|(clean, noisy)| EvalPair {
            clean: clean.clone(),
            noisy: noisy.clone(),
        })
        .collect();

    let identity = evaluate_translator(&IdentityTranslator, &test, &cfg.pipeline, &cfg.metrics)?;

    let noise: Vec<_> = (0..4).map(|i| white_noise(16_000, 16_000, 100 + i)).collect();
    let bcfg = BaselineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(bcfg.seed);
    let outputs = test
        .iter()
        .map(|p| baseline_simulate(&p.clean, &noise, 5.0, &bcfg, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let references: Vec<_> = test.iter().map(|p| p.noisy.clone()).collect();
    let baseline = evaluate_outputs(&outputs, &references, &cfg.pipeline, &cfg.metrics)?;

    let row = |model: &str, m: noisysim::metrics::MetricPair, mode| ReportRow {
        dataset: "toy_stationary".into(),
        model: model.into(),
        mean_lsd: m.lsd,
        mean_mssl: m.mssl,
        mode,
        epoch: None,
    };
    let report = EvalReport {
        protocol: Protocol::Best,
        rows: vec![
            row("g726_baseline", baseline, RowMode::Baseline),
            row("identity", identity, RowMode::NonParallel),
        ],
    };
    println!("{}", render_report(&[report])?.table);
    println!(
        "identity vs baseline: LSD {:+.1}%, MSSL {:+.1}%",
        improvement_pct(baseline.lsd, identity.lsd),
        improvement_pct(baseline.mssl, identity.mssl)
    );
    Ok(())
}
