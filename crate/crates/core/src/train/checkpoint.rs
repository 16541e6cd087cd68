//! Checkpoint files: safetensors holding every network variable and both
//! optimizers' moment buffers, with run metadata in the header.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{data_err, Error, Result};
use crate::models::Family;

pub const FORMAT: &str = "noisysim-checkpoint-1";
const FORMAT_KEY: &str = "format";
const META_KEY: &str = "meta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub family: Family,
    pub epoch: usize,
    pub step: u64,
    /// Fingerprint of `config`.
    pub fingerprint: String,
    pub config: RunConfig,
    pub n_freq: usize,
    pub opt_g_steps: u64,
    pub opt_d_steps: u64,
    /// Word position of the training RNG stream, as a decimal string.
    pub rng_word_pos: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub path: PathBuf,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn epoch(&self) -> usize {
        self.meta.epoch
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write(path: &Path, tensors: Vec<(String, Tensor)>, meta: CheckpointMeta) -> Result<Self> {
        let file_name = path
            .file_name()
            .ok_or_else(|| data_err!("checkpoint path {} has no file name", path.display()))?;
        let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
        let header = HashMap::from([
            (FORMAT_KEY.to_string(), FORMAT.to_string()),
            (META_KEY.to_string(), serde_json::to_string(&meta)?),
        ]);
        let tensors: Vec<(String, Tensor)> = tensors
            .into_iter()
            .map(|(k, t)| Ok((k, t.contiguous()?)))
            .collect::<Result<_>>()?;
        safetensors::serialize_to_file(tensors, Some(header), &tmp)?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            meta,
        })
    }

    /// Reads only the header.
    pub fn open(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut len = [0u8; 8];
        f.read_exact(&mut len).map_err(|e| Error::io(path, e))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 100_000_000 {
            return Err(data_err!("{} does not look like a checkpoint", path.display()));
        }
        let mut header = vec![0u8; len];
        f.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let header: serde_json::Value = serde_json::from_slice(&header)?;
        let meta = header
            .get("__metadata__")
            .filter(|m| m.get(FORMAT_KEY).and_then(|v| v.as_str()) == Some(FORMAT))
            .and_then(|m| m.get(META_KEY))
            .and_then(|v| v.as_str())
            .ok_or_else(|| data_err!("{} is not a {FORMAT} file", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            meta: serde_json::from_str(meta)?,
        })
    }

    pub fn tensors(&self, device: &Device) -> Result<HashMap<String, Tensor>> {
        Ok(candle_core::safetensors::load(&self.path, device)?)
    }

    pub fn rng_word_pos(&self) -> Result<u128> {
        self.meta
            .rng_word_pos
            .parse()
            .map_err(|_| data_err!("bad rng position in {}", self.path.display()))
    }
}

/// Checkpoints named `epoch_*.safetensors` in `dir`, by epoch.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with("epoch_") && name.ends_with(".safetensors") {
            out.push(Checkpoint::open(&path)?);
        }
    }
    out.sort_by_key(|c| (c.meta.epoch, c.meta.step));
    Ok(out)
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:05}.safetensors")
}
