//! Parameter checkpoints.
//!
//! Layout: the 8 bytes `WUWSECKP`, a little-endian `u32` format version, a
//! little-endian `u32` byte length, that many bytes of JSON header (mode,
//! training configuration, model configuration, parameter directory), then
//! the raw little-endian `f32` arrays at the offsets listed in the directory.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;
use wuwse_core::models::{LeNetConfig, SeConfig};
use wuwse_core::train::{LossWeights, TrainConfig, TrainError, TrainMode, WuwSystem};

pub const MAGIC: &[u8; 8] = b"WUWSECKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("checkpoint format version {found} is not supported (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(&'static str),
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigSnapshot {
    lr: f64,
    batch_size: usize,
    patience: usize,
    snr_range: (f64, f64),
    max_epochs: usize,
    seed: u64,
    grad_clip: f64,
    reverb_noise: bool,
    weights: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeSnapshot {
    channels: [usize; 6],
    res_blocks: usize,
    norm_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierSnapshot {
    window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    mode: String,
    config: ConfigSnapshot,
    se: Option<SeSnapshot>,
    classifier: Option<ClassifierSnapshot>,
    params: Vec<ParamRecord>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub mode: TrainMode,
    pub config: TrainConfig,
    pub system: WuwSystem,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let c = &self.config;
        let mut params = Vec::new();
        let mut offset = 0;
        for e in self.system.store.entries() {
            params.push(ParamRecord {
                name: e.name.clone(),
                dtype: "f32".into(),
                shape: e.shape.clone(),
                offset,
            });
            offset += e.value.len() * 4;
        }
        let header = Header {
            mode: self.mode.as_str().into(),
            config: ConfigSnapshot {
                lr: c.lr,
                batch_size: c.batch_size,
                patience: c.patience,
                snr_range: c.snr_range,
                max_epochs: c.max_epochs,
                seed: c.seed,
                grad_clip: c.grad_clip,
                reverb_noise: c.reverb_noise,
                weights: c.weights.map(|w| (w.alpha, w.beta, w.gamma)),
            },
            se: self.system.se.as_ref().map(|se| SeSnapshot {
                channels: se.config.channels,
                res_blocks: se.config.res_blocks,
                norm_eps: se.config.norm_eps,
            }),
            classifier: self.system.classifier.as_ref().map(|c| ClassifierSnapshot {
                window: c.config.window,
            }),
            params,
        };
        let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for e in self.system.store.entries() {
            for v in &e.value {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a whole checkpoint; nothing is returned unless every parameter loads.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 {
            return Err(CheckpointError::Truncated("magic"));
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let word = |at: usize, what| {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or(CheckpointError::Truncated(what))
        };
        let version = word(8, "version")?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let header_len = word(12, "header length")? as usize;
        let data_start = 16 + header_len;
        let json = bytes.get(16..data_start).ok_or(CheckpointError::Truncated("header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let data = &bytes[data_start..];

        let mode: TrainMode = header.mode.parse()?;
        let c = &header.config;
        let weights = c
            .weights
            .map(|(a, b, g)| LossWeights::new(a, b, g))
            .transpose()?;
        let config = TrainConfig {
            lr: c.lr,
            batch_size: c.batch_size,
            patience: c.patience,
            snr_range: c.snr_range,
            max_epochs: c.max_epochs,
            seed: c.seed,
            grad_clip: c.grad_clip,
            reverb_noise: c.reverb_noise,
            weights,
        };
        let se = header.se.as_ref().map(|s| SeConfig {
            channels: s.channels,
            res_blocks: s.res_blocks,
            norm_eps: s.norm_eps,
        });
        let classifier = header.classifier.as_ref().map(|c| LeNetConfig { window: c.window });
        let mut system = WuwSystem::build(se, classifier)?;
        if header.params.len() != system.store.len() {
            return Err(CheckpointError::Header(format!(
                "{} parameters listed, model has {}",
                header.params.len(),
                system.store.len()
            )));
        }
        let mut expected_end = 0;
        for rec in &header.params {
            let id = system
                .store
                .id(&rec.name)
                .ok_or_else(|| CheckpointError::Header(format!("unknown parameter {}", rec.name)))?;
            let entry = system.store.get_mut(id);
            if rec.dtype != "f32" || rec.shape != entry.shape {
                return Err(CheckpointError::Header(format!(
                    "parameter {} has {} {:?}, model expects f32 {:?}",
                    rec.name, rec.dtype, rec.shape, entry.shape
                )));
            }
            let n = entry.value.len() * 4;
            let raw = data
                .get(rec.offset..rec.offset + n)
                .ok_or(CheckpointError::Truncated("parameter data"))?;
            for (v, b) in entry.value.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
            expected_end = expected_end.max(rec.offset + n);
        }
        if data.len() != expected_end {
            return Err(CheckpointError::Header(format!(
                "{} trailing bytes after parameter data",
                data.len() as i64 - expected_end as i64
            )));
        }
        Ok(Self { mode, config, system })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()?).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}
