//! Feature extraction: STFT framing, mel filterbank, log-mel spectrogram and MFCC.
//!
//! Frames start at sample 0 without centering, so an input of length `T`
//! yields `floor((T - win) / hop) + 1` frames. Powers `|X|²` (not magnitudes)
//! feed the filterbank, and `ln(x + 1e-10)` compresses the result.

pub mod fft;
pub mod filter;

use crate::audio::{Waveform, SAMPLE_RATE};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use thiserror::Error;

pub const N_FFT: usize = 512;
pub const WIN_LENGTH: usize = 320;
pub const HOP_LENGTH: usize = 160;
pub const N_MELS: usize = 40;
pub const LOG_FLOOR: f64 = 1e-10;

pub const MFCC_WIN_LENGTH: usize = 1600;
pub const MFCC_HOP_LENGTH: usize = 800;
pub const MFCC_N_FFT: usize = 2048;
pub const N_MFCC: usize = 13;
pub const MFCC_LOW_HZ: f64 = 20.0;
pub const MFCC_HIGH_HZ: f64 = 8000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("frequency {0} Hz is negative")]
    NegativeFrequency(f64),
    #[error("invalid filterbank range: fmin={fmin} fmax={fmax} (nyquist {nyquist})")]
    Range { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("{n_mels} mel filters collapse at n_fft={n_fft}: edges {edge} and {next} share bin {bin}")]
    EdgeCollision {
        n_mels: usize,
        n_fft: usize,
        edge: usize,
        next: usize,
        bin: usize,
    },
    #[error("input of {len} samples is shorter than one {win}-sample window")]
    TooShort { len: usize, win: usize },
}

/// HTK mel scale, `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> Result<f64, DspError> {
    if f < 0.0 {
        return Err(DspError::NegativeFrequency(f));
    }
    Ok(2595.0 * libm::log10(1.0 + f / 700.0))
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

/// Row-major feature matrix, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_frames: usize,
    pub n_features: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.n_features..(frame + 1) * self.n_features]
    }

    pub fn get(&self, frame: usize, feature: usize) -> f64 {
        self.data[frame * self.n_features + feature]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_frames, self.n_features)
    }
}

pub type LogMelSpectrogram = FeatureMatrix;
pub type MfccMatrix = FeatureMatrix;

/// Triangular filters over the `n_fft/2 + 1` non-negative FFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_fft: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    /// `n_mels + 2` edge bins; filter `k` spans `edges[k]..=edges[k+2]` and peaks at `edges[k+1]`.
    pub edge_bins: Vec<usize>,
    /// Row-major `[n_mels × (n_fft/2 + 1)]`.
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn filter(&self, k: usize) -> &[f64] {
        let nb = self.n_bins();
        &self.weights[k * nb..(k + 1) * nb]
    }

    pub fn center_bin(&self, k: usize) -> usize {
        self.edge_bins[k + 1]
    }

    pub fn center_hz(&self, k: usize) -> f64 {
        self.center_bin(k) as f64 * self.sample_rate as f64 / self.n_fft as f64
    }

    /// Applies the bank to one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        debug_assert_eq!(power.len(), self.n_bins());
        (0..self.n_mels)
            .map(|k| self.filter(k).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

pub fn build_mel_filterbank(
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank, DspError> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    if !(0.0..fmax).contains(&fmin) || fmax > nyquist {
        return Err(DspError::Range { fmin, fmax, nyquist });
    }
    let (mel_lo, mel_hi) = (hz_to_mel(fmin)?, hz_to_mel(fmax)?);
    let n_edges = n_mels + 2;
    let edge_bins: Vec<usize> = (0..n_edges)
        .map(|i| {
            let mel = mel_lo + (mel_hi - mel_lo) * i as f64 / (n_edges - 1) as f64;
            let hz = mel_to_hz(mel);
            libm::round(hz * n_fft as f64 / SAMPLE_RATE as f64) as usize
        })
        .collect();
    if let Some(i) = edge_bins.windows(2).position(|w| w[0] >= w[1]) {
        return Err(DspError::EdgeCollision {
            n_mels,
            n_fft,
            edge: i,
            next: i + 1,
            bin: edge_bins[i],
        });
    }

    let n_bins = n_fft / 2 + 1;
    let mut weights = vec![0.0; n_mels * n_bins];
    for k in 0..n_mels {
        let (lo, mid, hi) = (edge_bins[k], edge_bins[k + 1], edge_bins[k + 2]);
        let row = &mut weights[k * n_bins..(k + 1) * n_bins];
        for b in lo..=mid {
            row[b] = (b - lo) as f64 / (mid - lo) as f64;
        }
        for b in mid..=hi.min(n_bins - 1) {
            row[b] = (hi - b) as f64 / (hi - mid) as f64;
        }
    }
    Ok(MelFilterbank {
        n_fft,
        n_mels,
        sample_rate: SAMPLE_RATE,
        edge_bins,
        weights,
    })
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / len as f64))
        .collect()
}

pub fn frame_count(len: usize, win: usize, hop: usize) -> usize {
    if len < win {
        0
    } else {
        (len - win) / hop + 1
    }
}

/// The spectrogram filterbank: 40 mel filters over 0..8 kHz at 512-point resolution.
pub fn default_filterbank() -> MelFilterbank {
    build_mel_filterbank(N_FFT, N_MELS, 0.0, SAMPLE_RATE as f64 / 2.0)
        .expect("default filterbank configuration is valid")
}

fn log_mel_frames(
    signal: &[f64],
    win: usize,
    hop: usize,
    n_fft: usize,
    bank: &MelFilterbank,
) -> Result<FeatureMatrix, DspError> {
    let n_frames = frame_count(signal.len(), win, hop);
    if n_frames == 0 {
        return Err(DspError::TooShort { len: signal.len(), win });
    }
    let window = hann_window(win);
    let mut data = Vec::with_capacity(n_frames * bank.n_mels);
    let mut frame = vec![0.0; win];
    for f in 0..n_frames {
        let start = f * hop;
        for (i, slot) in frame.iter_mut().enumerate() {
            *slot = signal[start + i] * window[i];
        }
        let power = fft::power_spectrum(&frame, n_fft);
        data.extend(bank.apply(&power).into_iter().map(|e| libm::log(e + LOG_FLOOR)));
    }
    Ok(FeatureMatrix {
        n_frames,
        n_features: bank.n_mels,
        data,
    })
}

fn as_f64(w: &Waveform) -> Vec<f64> {
    w.samples().iter().map(|&s| s as f64).collect()
}

/// Log-mel spectrogram `S(·)`: 20 ms Hann windows, 10 ms hop, 512-point FFT, 40 mels.
pub fn log_mel_spectrogram(w: &Waveform) -> Result<LogMelSpectrogram, DspError> {
    log_mel_samples(&as_f64(w))
}

pub fn log_mel_samples(samples: &[f64]) -> Result<LogMelSpectrogram, DspError> {
    log_mel_frames(samples, WIN_LENGTH, HOP_LENGTH, N_FFT, &default_filterbank())
}

/// Orthonormal DCT-II matrix, row `k` holds basis vector `k` of length `n`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            libm::sqrt(1.0 / n as f64)
        } else {
            libm::sqrt(2.0 / n as f64)
        };
        for i in 0..n {
            m[k * n + i] = scale * libm::cos(PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64);
        }
    }
    m
}

/// Keeps the first `n_keep` DCT-II coefficients of each row.
pub fn cepstra(log_energies: &FeatureMatrix, n_keep: usize) -> FeatureMatrix {
    let n = log_energies.n_features;
    let dct = dct_matrix(n);
    let mut data = Vec::with_capacity(log_energies.n_frames * n_keep);
    for f in 0..log_energies.n_frames {
        let row = log_energies.row(f);
        for k in 0..n_keep {
            data.push(dct[k * n..(k + 1) * n].iter().zip(row).map(|(a, b)| a * b).sum());
        }
    }
    FeatureMatrix {
        n_frames: log_energies.n_frames,
        n_features: n_keep,
        data,
    }
}

/// 13 MFCCs per 100 ms window with 50 ms hop, after a 20 Hz–8 kHz band-pass.
pub fn mfcc(w: &Waveform) -> Result<MfccMatrix, DspError> {
    if w.len() < MFCC_WIN_LENGTH {
        return Err(DspError::TooShort {
            len: w.len(),
            win: MFCC_WIN_LENGTH,
        });
    }
    let mut signal = as_f64(w);
    filter::BandPass::new(MFCC_LOW_HZ, MFCC_HIGH_HZ, SAMPLE_RATE as f64).process(&mut signal);
    let bank = build_mel_filterbank(MFCC_N_FFT, N_MELS, 0.0, SAMPLE_RATE as f64 / 2.0)?;
    let log_energies = log_mel_frames(&signal, MFCC_WIN_LENGTH, MFCC_HOP_LENGTH, MFCC_N_FFT, &bank)?;
    Ok(cepstra(&log_energies, N_MFCC))
}
