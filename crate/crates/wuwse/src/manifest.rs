//! Headerless CSV manifests: `path,label,onset,offset,split`.

use crate::wav::{read_wav, WavError};
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;
use wuwse_core::audio::{cut_window, PadMode, Waveform, WindowSpec, DEFAULT_WINDOW, SAMPLE_RATE};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Read { path: String, source: csv::Error },
    #[error("{path} row {row}: {reason}")]
    Row { path: String, row: usize, reason: String },
    #[error("{0} appears in more than one split")]
    SplitOverlap(String),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("window: {0}")]
    Window(#[from] wuwse_core::audio::AudioError),
    #[error("writing {path}: {source}")]
    Write { path: String, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub label: bool,
    pub onset: Option<f64>,
    pub offset: Option<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

fn parse_time(field: &str) -> Result<Option<f64>, String> {
    if field.trim().is_empty() {
        return Ok(None);
    }
    let v: f64 = field.trim().parse().map_err(|_| format!("bad time {field:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("bad time {field:?}"));
    }
    Ok(Some(v))
}

impl DatasetManifest {
    /// Parses and validates a manifest. Relative audio paths resolve against
    /// the manifest's directory; every file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .from_path(path)
            .map_err(|source| ManifestError::Read {
                path: shown.clone(),
                source,
            })?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let err = |reason: String| ManifestError::Row {
                path: shown.clone(),
                row,
                reason,
            };
            let record = record.map_err(|e| err(e.to_string()))?;
            if record.len() != 5 {
                return Err(err(format!("expected 5 columns, found {}", record.len())));
            }
            let audio = PathBuf::from(&record[0]);
            let audio = if audio.is_relative() { base.join(audio) } else { audio };
            if !audio.is_file() {
                return Err(err(format!("audio file {} does not exist", audio.display())));
            }
            let label = match record[1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(err(format!("label must be 0 or 1, found {other:?}"))),
            };
            let onset = parse_time(&record[2]).map_err(err)?;
            let offset = parse_time(&record[3]).map_err(err)?;
            if let (Some(a), Some(b)) = (onset, offset) {
                if b < a {
                    return Err(err("offset precedes onset".into()));
                }
            }
            let split = record[4].trim().parse().map_err(err)?;
            rows.push(ManifestRow {
                path: audio,
                label,
                onset,
                offset,
                split,
            });
        }
        let manifest = Self { rows };
        manifest.check_disjoint()?;
        Ok(manifest)
    }

    pub fn check_disjoint(&self) -> Result<(), ManifestError> {
        let mut seen: HashMap<&Path, Split> = HashMap::new();
        for r in &self.rows {
            if let Some(prev) = seen.insert(&r.path, r.split) {
                if prev != r.split {
                    return Err(ManifestError::SplitOverlap(r.path.display().to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Writes rows with paths relative to `base` when possible.
    pub fn save(&self, path: impl AsRef<Path>, base: Option<&Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let werr = |source| ManifestError::Write {
            path: path.display().to_string(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(werr)?;
        let time = |t: Option<f64>| t.map(|v| format!("{v:.4}")).unwrap_or_default();
        for r in &self.rows {
            let p = base.and_then(|b| r.path.strip_prefix(b).ok()).unwrap_or(&r.path);
            w.write_record([
                p.display().to_string(),
                (r.label as u8).to_string(),
                time(r.onset),
                time(r.offset),
                r.split.to_string(),
            ])
            .map_err(werr)?;
        }
        w.flush().map_err(|e| werr(e.into()))
    }
}

/// The analysis window of a row: centered on the annotated span when there is
/// one, otherwise from the start; short files are zero-padded.
pub fn load_window(row: &ManifestRow, length: usize) -> Result<Waveform, ManifestError> {
    let w = read_wav(&row.path)?;
    let offset = match (row.onset, row.offset) {
        (Some(a), Some(b)) => {
            let center = ((a + b) / 2.0 * SAMPLE_RATE as f64) as usize;
            center
                .saturating_sub(length / 2)
                .min(w.len().saturating_sub(length))
        }
        _ => 0,
    };
    Ok(cut_window(&w, WindowSpec::new(length, offset)?, PadMode::ZeroPad)?)
}

pub fn load_windows<'a>(
    rows: impl IntoIterator<Item = &'a ManifestRow>,
) -> Result<Vec<(Waveform, bool)>, ManifestError> {
    rows.into_iter()
        .map(|r| Ok((load_window(r, DEFAULT_WINDOW)?, r.label)))
        .collect()
}
