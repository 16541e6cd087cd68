//! The run configuration: one TOML file covering every stage, with
//! `key.path=value` overrides and a content fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::BaselineConfig;
use crate::dataset::DataConfig;
use crate::error::{config_err, Error, Result};
use crate::fif::FifConfig;
use crate::losses::LossWeights;
use crate::metrics::MetricConfig;
use crate::models::ModelConfig;
use crate::pipeline::PipelineConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub fif: FifConfig,
    pub model: ModelConfig,
    pub losses: LossWeights,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
    pub data: DataConfig,
    pub baseline: BaselineConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => config_err!("{}: {msg}", path.display()),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_err!("{e}"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.model.validate()?;
        self.losses.validate()?;
        self.train.validate()?;
        self.metrics.validate()?;
        self.data.validate()?;
        self.baseline.validate()?;
        if self.fif.enabled && self.fif.max_band_width > self.pipeline.component_width {
            return Err(config_err!(
                "fif.max_band_width {} exceeds the component width",
                self.fif.max_band_width
            ));
        }
        Ok(())
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// scalars or arrays and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Value::try_from(self).map_err(|e| config_err!("{e}"))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| config_err!("override {item:?} is not key=value"))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields one part");
            let mut node = &mut doc;
            for part in parents {
                node = node
                    .as_table_mut()
                    .ok_or_else(|| config_err!("override key {key:?}: {part} is not a section"))?
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()));
            }
            node.as_table_mut()
                .ok_or_else(|| config_err!("override key {key:?} does not name a field"))?
                .insert(last.to_string(), value);
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| config_err!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    toml::from_str::<Probe>(&format!("v = {raw}"))
        .map(|p| p.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_toml("[train]\nepochs = 4\n[model]\nbase_channels = 8\n").unwrap();
        assert_eq!(cfg.train.epochs, 4);
        assert_eq!(cfg.model.base_channels, 8);
        assert_eq!(cfg.pipeline, PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[train]\nepoch = 4\n"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_change_fields_and_fingerprint() {
        let base = RunConfig::default();
        let cfg = base
            .with_overrides(&["train.epochs=3", "train.family=simugan", "losses.cycle=2.5", "data.snr_db=[1.0, 2.0]"])
            .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.family, Family::SimuGan);
        assert_eq!(cfg.losses.cycle, 2.5);
        assert_eq!(cfg.data.snr_db, [1.0, 2.0]);
        assert_ne!(cfg.fingerprint(), base.fingerprint());
        assert!(base.with_overrides(&["train.epochs"]).is_err());
        assert!(base.with_overrides(&["train.nope=1"]).is_err());
        assert!(base.with_overrides(&["train.family=gan"]).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let base = RunConfig::default();
        assert!(base.with_overrides(&["train.checkpoint_interval=0"]).is_err());
        assert!(base.with_overrides(&["fif.max_band_width=999"]).is_err());
    }
}
