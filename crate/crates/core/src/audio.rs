//! Mono 16 kHz sample buffers and fixed-length window extraction.

use alloc::vec::Vec;
use thiserror::Error;

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// 1.5 s at 16 kHz.
pub const DEFAULT_WINDOW: usize = 24_000;

/// Window lengths must survive five stride-2 halvings in the enhancement model.
pub const LENGTH_QUANTUM: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("waveform is empty")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample rate {0} Hz is not supported (expected 16000)")]
    SampleRate(u32),
    #[error("window length {0} is not a multiple of 32")]
    WindowQuantum(usize),
    #[error("window [{offset}, {offset}+{length}) exceeds source length {source_len}")]
    TooShort {
        offset: usize,
        length: usize,
        source_len: usize,
    },
}

/// A validated mono signal. Samples are finite and the buffer is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
}

impl Waveform {
    pub fn new(samples: Vec<f32>) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite { index });
        }
        Ok(Self { samples })
    }

    /// Builds a waveform while checking the rate tag coming from a file header.
    pub fn with_rate(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate != SAMPLE_RATE {
            return Err(AudioError::SampleRate(sample_rate));
        }
        Self::new(samples)
    }

    pub fn zeros(len: usize) -> Result<Self, AudioError> {
        Self::new(alloc::vec![0.0; len])
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let energy: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    libm::sqrt(energy / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length_samples: usize,
    pub offset: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length_samples: DEFAULT_WINDOW,
            offset: 0,
        }
    }
}

impl WindowSpec {
    pub fn new(length_samples: usize, offset: usize) -> Result<Self, AudioError> {
        if length_samples == 0 || length_samples % LENGTH_QUANTUM != 0 {
            return Err(AudioError::WindowQuantum(length_samples));
        }
        Ok(Self {
            length_samples,
            offset,
        })
    }

    pub fn fits(&self, source_len: usize) -> bool {
        self.offset + self.length_samples <= source_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Reject,
    /// Trailing zeros only, so keyword onsets stay aligned.
    ZeroPad,
}

pub fn cut_window(w: &Waveform, spec: WindowSpec, pad_mode: PadMode) -> Result<Waveform, AudioError> {
    if spec.length_samples == 0 || spec.length_samples % LENGTH_QUANTUM != 0 {
        return Err(AudioError::WindowQuantum(spec.length_samples));
    }
    let src = w.samples();
    if !spec.fits(src.len()) && pad_mode == PadMode::Reject {
        return Err(AudioError::TooShort {
            offset: spec.offset,
            length: spec.length_samples,
            source_len: src.len(),
        });
    }
    let start = spec.offset.min(src.len());
    let end = (spec.offset + spec.length_samples).min(src.len());
    let mut out = Vec::with_capacity(spec.length_samples);
    out.extend_from_slice(&src[start..end]);
    out.resize(spec.length_samples, 0.0);
    Waveform::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ramp(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| i as f32 / n as f32).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(Waveform::new(vec![]), Err(AudioError::Empty));
        assert_eq!(
            Waveform::new(vec![0.0, f32::NAN]),
            Err(AudioError::NonFinite { index: 1 })
        );
        assert_eq!(
            Waveform::with_rate(vec![0.0], 8000),
            Err(AudioError::SampleRate(8000))
        );
    }

    #[test]
    fn cut_takes_prefix() {
        let w = ramp(48_000);
        let out = cut_window(&w, WindowSpec::default(), PadMode::Reject).unwrap();
        assert_eq!(out.samples(), &w.samples()[..24_000]);
    }

    #[test]
    fn cut_zero_pads_the_tail() {
        let w = ramp(20_000);
        let out = cut_window(&w, WindowSpec::default(), PadMode::ZeroPad).unwrap();
        assert_eq!(out.len(), 24_000);
        assert_eq!(&out.samples()[..20_000], w.samples());
        assert!(out.samples()[20_000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn cut_rejects_short_source() {
        let w = ramp(20_000);
        assert!(matches!(
            cut_window(&w, WindowSpec::default(), PadMode::Reject),
            Err(AudioError::TooShort { .. })
        ));
    }

    #[test]
    fn window_length_must_be_quantized() {
        assert_eq!(WindowSpec::new(24_001, 0), Err(AudioError::WindowQuantum(24_001)));
    }
}
