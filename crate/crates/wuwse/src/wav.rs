//! Mono 16 kHz PCM16 WAV files.

use std::path::Path;
use thiserror::Error;
use wuwse_core::audio::{AudioError, Waveform, SAMPLE_RATE};

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io { path: String, source: hound::Error },
    #[error("{path}: unsupported {field} {value} (expected {expected})")]
    Format {
        path: String,
        field: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("{path}: {source}")]
    Audio { path: String, source: AudioError },
}

fn io(path: &Path) -> impl FnOnce(hound::Error) -> WavError + '_ {
    move |source| WavError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, WavError> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(io(path))?;
    let spec = reader.spec();
    let format = |field, value: String, expected| WavError::Format {
        path: path.display().to_string(),
        field,
        value,
        expected,
    };
    if spec.sample_rate != SAMPLE_RATE {
        return Err(format("sample rate", spec.sample_rate.to_string(), "16000"));
    }
    if spec.channels != 1 {
        return Err(format("channel count", spec.channels.to_string(), "1"));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(format(
            "bit depth",
            format!("{} ({:?})", spec.bits_per_sample, spec.sample_format),
            "16-bit PCM",
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<f32>, _>>()
        .map_err(io(path))?;
    Waveform::with_rate(samples, spec.sample_rate).map_err(|source| WavError::Audio {
        path: path.display().to_string(),
        source,
    })
}

/// Nearest PCM16 code, saturating outside [-1, 1).
pub fn to_pcm16(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<(), WavError> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io(path))?;
    for &s in w.samples() {
        writer.write_sample(to_pcm16(s)).map_err(io(path))?;
    }
    writer.finalize().map_err(io(path))
}
