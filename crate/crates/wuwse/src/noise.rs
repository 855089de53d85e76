//! Noise pools on disk: one subdirectory per noise type holding WAV clips.

use crate::wav::{read_wav, WavError};
use std::path::Path;
use thiserror::Error;
use wuwse_core::augment::{AugmentError, NoiseClip, NoisePool, NoiseType};

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("noise pool {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("noise pool {path}: unknown noise type directory {name:?}")]
    UnknownType { path: String, name: String },
    #[error("noise pool {0} contains no clips")]
    Empty(String),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>, PoolError> {
    let io = |source| PoolError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut out = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?;
    out.sort();
    Ok(out)
}

/// Loads `dir/<noise_type>/*.wav` in sorted order so pool indices are stable.
pub fn load_noise_pool(dir: impl AsRef<Path>) -> Result<NoisePool, PoolError> {
    let dir = dir.as_ref();
    let mut clips = Vec::new();
    for sub in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let name = sub.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let noise_type: NoiseType = name.parse().map_err(|_| PoolError::UnknownType {
            path: dir.display().to_string(),
            name: name.clone(),
        })?;
        for file in sorted_entries(&sub)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        {
            clips.push(NoiseClip {
                noise_type,
                waveform: read_wav(&file)?,
                source: file.display().to_string(),
            });
        }
    }
    if clips.is_empty() {
        return Err(PoolError::Empty(dir.display().to_string()));
    }
    Ok(NoisePool::new(clips)?)
}
