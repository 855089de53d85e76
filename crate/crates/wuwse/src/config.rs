//! `key = value` run configuration files.

use std::path::{Path, PathBuf};
use thiserror::Error;
use wuwse_core::eval::{validate_buckets, SnrBucket, DEFAULT_BUCKETS};
use wuwse_core::models::{SeConfig, DEFAULT_CHANNELS};
use wuwse_core::train::{LossWeights, TrainConfig, TrainMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin} line {line}: {reason}")]
    Line { origin: String, line: usize, reason: String },
    #[error("{key}: {reason}")]
    Value { key: String, reason: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
}

pub const KEYS: &[&str] = &[
    "mode",
    "alpha",
    "beta",
    "gamma",
    "snr_range",
    "seed",
    "noise_pool",
    "buckets",
    "out_dir",
    "lr",
    "batch_size",
    "patience",
    "max_epochs",
    "grad_clip",
    "reverb_noise",
    "se_channels",
    "pretrained",
    "manifest",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub mode: Option<TrainMode>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub snr_range: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub noise_pool: Option<PathBuf>,
    pub buckets: Option<Vec<SnrBucket>>,
    pub out_dir: Option<PathBuf>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub grad_clip: Option<f64>,
    pub reverb_noise: Option<bool>,
    pub se_channels: Option<[usize; 6]>,
    pub pretrained: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        reason: format!("cannot parse {v:?}"),
    })
}

/// `lo,hi` in dB.
pub fn parse_snr_range(v: &str) -> Result<(f64, f64), String> {
    let (a, b) = v.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok((lo, hi))
}

/// `hi:lo,hi:lo,...`, e.g. `20:10,10:0,0:-10`.
pub fn parse_buckets(v: &str) -> Result<Vec<SnrBucket>, String> {
    let buckets = v
        .split(',')
        .map(|b| {
            let (hi, lo) = b.split_once(':').ok_or_else(|| format!("bucket {b:?} is not hi:lo"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number {hi:?}"))?;
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number {lo:?}"))?;
            Ok(SnrBucket::new(hi, lo))
        })
        .collect::<Result<Vec<_>, String>>()?;
    validate_buckets(&buckets).map_err(|e| e.to_string())?;
    Ok(buckets)
}

pub fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.merge_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_err = |reason: String| ConfigError::Line {
                origin: origin.into(),
                line: i + 1,
                reason,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| line_err("expected key = value".into()))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(line_err(format!("duplicate key {k}")));
            }
            self.set(k, v.trim()).map_err(|e| line_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::Value {
            key: key.into(),
            reason,
        };
        match key {
            "mode" => self.mode = Some(v.parse().map_err(|_| bad(format!("unknown mode {v:?}")))?),
            "alpha" => self.alpha = Some(num(key, v)?),
            "beta" => self.beta = Some(num(key, v)?),
            "gamma" => self.gamma = Some(num(key, v)?),
            "snr_range" => self.snr_range = Some(parse_snr_range(v).map_err(bad)?),
            "seed" => self.seed = Some(num(key, v)?),
            "noise_pool" => self.noise_pool = Some(v.into()),
            "buckets" => self.buckets = Some(parse_buckets(v).map_err(bad)?),
            "out_dir" => self.out_dir = Some(v.into()),
            "lr" => self.lr = Some(num(key, v)?),
            "batch_size" => self.batch_size = Some(num(key, v)?),
            "patience" => self.patience = Some(num(key, v)?),
            "max_epochs" => self.max_epochs = Some(num(key, v)?),
            "grad_clip" => self.grad_clip = Some(num(key, v)?),
            "reverb_noise" => self.reverb_noise = Some(parse_bool(v).map_err(bad)?),
            "se_channels" => {
                let ch = v
                    .split(',')
                    .map(|c| num::<usize>(key, c.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                let ch: [usize; 6] = ch
                    .try_into()
                    .map_err(|_| bad("expected six channel counts".into()))?;
                if ch.contains(&0) {
                    return Err(bad("channel counts must be positive".into()));
                }
                self.se_channels = Some(ch);
            }
            "pretrained" => self.pretrained = Some(v.into()),
            "manifest" => self.manifest = Some(v.into()),
            _ => {
                return Err(ConfigError::Value {
                    key: key.into(),
                    reason: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Line {
                origin: "--set".into(),
                line: i + 1,
                reason: format!("expected key=value, found {o:?}"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let d = TrainConfig::default();
        let weights = match (self.alpha, self.beta, self.gamma) {
            (None, None, None) => None,
            (a, b, g) => {
                let base = self.mode.ok_or(ConfigError::Missing("mode"))?.weights();
                Some(
                    LossWeights::new(
                        a.unwrap_or(base.alpha),
                        b.unwrap_or(base.beta),
                        g.unwrap_or(base.gamma),
                    )
                    .map_err(|e| ConfigError::Value {
                        key: "alpha/beta/gamma".into(),
                        reason: e.to_string(),
                    })?,
                )
            }
        };
        let cfg = TrainConfig {
            lr: self.lr.unwrap_or(d.lr),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            patience: self.patience.unwrap_or(d.patience),
            snr_range: self.snr_range.unwrap_or(d.snr_range),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            seed: self.seed.unwrap_or(d.seed),
            grad_clip: self.grad_clip.unwrap_or(d.grad_clip),
            reverb_noise: self.reverb_noise.unwrap_or(d.reverb_noise),
            weights,
        };
        cfg.validate().map_err(|e| ConfigError::Value {
            key: "training".into(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn se_config(&self) -> SeConfig {
        SeConfig {
            channels: self.se_channels.unwrap_or(DEFAULT_CHANNELS),
            ..SeConfig::default()
        }
    }

    pub fn buckets(&self) -> Vec<SnrBucket> {
        self.buckets.clone().unwrap_or_else(|| DEFAULT_BUCKETS.to_vec())
    }
}
