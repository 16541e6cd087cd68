//! The two checkpoint evaluation protocols and report rendering.
//!
//! Protocol `best` scores every checkpoint on the validation pairs, keeps the
//! one with the lowest mean MSSL (earliest epoch on ties) and reports its
//! test-set metrics. Protocol `average` reports the arithmetic mean of the
//! per-checkpoint validation metrics. Both need parallel references.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{config_err, data_err, Error, Result};
use crate::metrics::{mean_of, score, MetricConfig, MetricPair};
use crate::pipeline::{normalize_loudness, simulate, PipelineConfig, Translator};
use crate::train::{Checkpoint, GanTranslator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[serde(rename = "best_checkpoint")]
    Best,
    #[serde(rename = "checkpoint_average")]
    Average,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" | "best_checkpoint" => Ok(Protocol::Best),
            "average" | "checkpoint_average" => Ok(Protocol::Average),
            _ => Err(config_err!("unknown protocol {s:?}; expected best or average")),
        }
    }
}

/// A clean clip and its real noisy twin.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub clean: AudioClip,
    pub noisy: AudioClip,
}

/// Metrics of one simulated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub lsd: f64,
    pub mssl: f64,
}

impl ClipScore {
    fn new(clip_id: &str, m: MetricPair) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            lsd: m.lsd,
            mssl: m.mssl,
        }
    }

    pub fn metrics(&self) -> MetricPair {
        MetricPair {
            lsd: self.lsd,
            mssl: self.mssl,
        }
    }
}

/// Simulates every clean clip and scores it against its noisy twin. Both
/// sides are at the pipeline's loudness target, so only spectral shape is
/// compared.
pub fn score_translator_clips<T: Translator + ?Sized>(
    model: &T,
    pairs: &[EvalPair],
    pipeline: &PipelineConfig,
    metrics: &MetricConfig,
) -> Result<Vec<ClipScore>> {
    if pairs.is_empty() {
        return Err(data_err!("no evaluation pairs"));
    }
    pairs
        .iter()
        .map(|p| {
            let generated = simulate(&p.clean, model, pipeline)?;
            let reference = normalize_loudness(&p.noisy, pipeline.target_rms_dbfs)?;
            Ok(ClipScore::new(&p.clean.clip_id, score(&reference, &generated, metrics)?))
        })
        .collect()
}

/// Mean of [`score_translator_clips`].
pub fn evaluate_translator<T: Translator + ?Sized>(
    model: &T,
    pairs: &[EvalPair],
    pipeline: &PipelineConfig,
    metrics: &MetricConfig,
) -> Result<MetricPair> {
    let clips = score_translator_clips(model, pairs, pipeline, metrics)?;
    mean_of(&clips.iter().map(ClipScore::metrics).collect::<Vec<_>>())
}

/// Scores already-simulated clips against their references.
pub fn score_output_clips(
    outputs: &[AudioClip],
    references: &[AudioClip],
    pipeline: &PipelineConfig,
    metrics: &MetricConfig,
) -> Result<Vec<ClipScore>> {
    if outputs.len() != references.len() || outputs.is_empty() {
        return Err(data_err!(
            "{} outputs for {} references",
            outputs.len(),
            references.len()
        ));
    }
    outputs
        .iter()
        .zip(references)
        .map(|(o, r)| {
            let o = normalize_loudness(o, pipeline.target_rms_dbfs)?;
            let r = normalize_loudness(r, pipeline.target_rms_dbfs)?;
            Ok(ClipScore::new(&r.clip_id, score(&r, &o, metrics)?))
        })
        .collect()
}

/// Mean of [`score_output_clips`].
pub fn evaluate_outputs(
    outputs: &[AudioClip],
    references: &[AudioClip],
    pipeline: &PipelineConfig,
    metrics: &MetricConfig,
) -> Result<MetricPair> {
    let clips = score_output_clips(outputs, references, pipeline, metrics)?;
    mean_of(&clips.iter().map(ClipScore::metrics).collect::<Vec<_>>())
}

/// Test-set metrics of one checkpoint's generator, under the pipeline of
/// the run that produced it.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, pairs: &[EvalPair], metrics: &MetricConfig) -> Result<MetricPair> {
    let model = GanTranslator::from_checkpoint(ckpt)?;
    evaluate_translator(&model, pairs, &ckpt.meta.config.pipeline, metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub epoch: usize,
    pub path: Option<PathBuf>,
    pub metrics: MetricPair,
}

/// Lowest mean MSSL; ties go to the earliest epoch.
pub fn select_best(scores: &[CheckpointScore]) -> Result<&CheckpointScore> {
    scores
        .iter()
        .min_by(|a, b| a.metrics.mssl.total_cmp(&b.metrics.mssl).then(a.epoch.cmp(&b.epoch)))
        .ok_or_else(|| data_err!("no checkpoints to select from"))
}

/// Arithmetic mean of per-checkpoint metrics.
pub fn average_scores(scores: &[CheckpointScore]) -> Result<MetricPair> {
    if scores.is_empty() {
        return Err(data_err!("no checkpoints to average"));
    }
    mean_of(&scores.iter().map(|s| s.metrics).collect::<Vec<_>>())
}

pub fn score_checkpoints(ckpts: &[Checkpoint], val: &[EvalPair], metrics: &MetricConfig) -> Result<Vec<CheckpointScore>> {
    if ckpts.is_empty() {
        return Err(data_err!("no checkpoints"));
    }
    ckpts
        .iter()
        .map(|c| {
            Ok(CheckpointScore {
                epoch: c.epoch(),
                path: Some(c.path.clone()),
                metrics: evaluate_checkpoint(c, val, metrics)?,
            })
        })
        .collect()
}

/// The checkpoint with the lowest validation MSSL and its validation
/// metrics.
pub fn select_best_checkpoint(
    ckpts: &[Checkpoint],
    val: &[EvalPair],
    metrics: &MetricConfig,
) -> Result<(Checkpoint, MetricPair)> {
    let scores = score_checkpoints(ckpts, val, metrics)?;
    let best = select_best(&scores)?;
    let ckpt = ckpts
        .iter()
        .find(|c| Some(&c.path) == best.path.as_ref())
        .expect("scored checkpoint exists")
        .clone();
    Ok((ckpt, best.metrics))
}

pub fn average_over_checkpoints(ckpts: &[Checkpoint], val: &[EvalPair], metrics: &MetricConfig) -> Result<MetricPair> {
    average_scores(&score_checkpoints(ckpts, val, metrics)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowMode {
    Parallel,
    NonParallel,
    Baseline,
}

impl fmt::Display for RowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowMode::Parallel => "parallel",
            RowMode::NonParallel => "non_parallel",
            RowMode::Baseline => "baseline",
        })
    }
}

impl From<crate::dataset::Mode> for RowMode {
    fn from(m: crate::dataset::Mode) -> Self {
        match m {
            crate::dataset::Mode::Parallel => RowMode::Parallel,
            crate::dataset::Mode::NonParallel => RowMode::NonParallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub mean_lsd: f64,
    pub mean_mssl: f64,
    pub mode: RowMode,
    /// Epoch of the selected checkpoint under the `best` protocol.
    pub epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub rows: Vec<ReportRow>,
}

/// Relative reduction of `model` against `baseline`, in percent.
pub fn improvement_pct(baseline: f64, model: f64) -> f64 {
    (baseline - model) / baseline * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub csv: String,
    pub json: String,
    pub table: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MinFlags {
    pub lsd: bool,
    pub mssl: bool,
}

/// Per row, whether it holds its dataset's minimum LSD or MSSL.
pub fn minimum_flags(rows: &[ReportRow]) -> Vec<MinFlags> {
    let mut mins: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in rows {
        let e = mins.entry(&r.dataset).or_insert((f64::INFINITY, f64::INFINITY));
        e.0 = e.0.min(r.mean_lsd);
        e.1 = e.1.min(r.mean_mssl);
    }
    rows.iter()
        .map(|r| {
            let (l, m) = mins[r.dataset.as_str()];
            MinFlags {
                lsd: r.mean_lsd == l,
                mssl: r.mean_mssl == m,
            }
        })
        .collect()
}

/// CSV, JSON and a text table grouped by dataset. Minima per dataset are
/// marked with `*`; model rows of a dataset with a baseline row also carry
/// their improvement over it.
pub fn render_report(reports: &[EvalReport]) -> Result<RenderedReport> {
    if reports.is_empty() || reports.iter().all(|r| r.rows.is_empty()) {
        return Err(data_err!("nothing to report"));
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "protocol", "dataset", "model", "mean_lsd", "mean_mssl", "mode", "epoch", "min_lsd", "min_mssl",
        "lsd_improvement_pct", "mssl_improvement_pct",
    ])?;
    let mut table = String::new();
    for report in reports {
        let flags = minimum_flags(&report.rows);
        let mut order: Vec<usize> = (0..report.rows.len()).collect();
        order.sort_by(|&a, &b| report.rows[a].dataset.cmp(&report.rows[b].dataset));
        let protocol = match report.protocol {
            Protocol::Best => "best_checkpoint",
            Protocol::Average => "checkpoint_average",
        };
        writeln!(table, "protocol: {protocol}").expect("string write");
        writeln!(
            table,
            "{:<16} {:<20} {:>10} {:>10} {:<13} {:>8} {:>8}",
            "Dataset", "Model", "Mean LSD", "Mean MSSL", "Mode", "dLSD%", "dMSSL%"
        )
        .expect("string write");
        let mut last = None;
        for i in order {
            let r = &report.rows[i];
            let base = report
                .rows
                .iter()
                .find(|b| b.dataset == r.dataset && b.mode == RowMode::Baseline);
            let (dl, dm) = match base {
                Some(b) if r.mode != RowMode::Baseline => (
                    Some(improvement_pct(b.mean_lsd, r.mean_lsd)),
                    Some(improvement_pct(b.mean_mssl, r.mean_mssl)),
                ),
                _ => (None, None),
            };
            let pct = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_default();
            csv.write_record([
                protocol.to_string(),
                r.dataset.clone(),
                r.model.clone(),
                format!("{:.4}", r.mean_lsd),
                format!("{:.4}", r.mean_mssl),
                r.mode.to_string(),
                r.epoch.map(|e| e.to_string()).unwrap_or_default(),
                flags[i].lsd.to_string(),
                flags[i].mssl.to_string(),
                pct(dl),
                pct(dm),
            ])?;
            let dataset = if last == Some(&r.dataset) { "" } else { r.dataset.as_str() };
            last = Some(&r.dataset);
            let mark = |v: f64, min: bool| format!("{v:.2}{}", if min { "*" } else { " " });
            writeln!(
                table,
                "{:<16} {:<20} {:>10} {:>10} {:<13} {:>8} {:>8}",
                dataset,
                r.model,
                mark(r.mean_lsd, flags[i].lsd),
                mark(r.mean_mssl, flags[i].mssl),
                r.mode.to_string(),
                pct(dl),
                pct(dm)
            )
            .expect("string write");
        }
        table.push('\n');
    }
    let csv = String::from_utf8(csv.into_inner().map_err(|e| data_err!("{e}"))?).expect("csv is utf-8");
    Ok(RenderedReport {
        csv,
        json: serde_json::to_string_pretty(reports)?,
        table,
    })
}
