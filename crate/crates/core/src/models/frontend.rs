//! Differentiable log-mel spectrogram built from tape ops.
//!
//! Framing is a strided gather, the windowed 512-point DFT of each 320-sample
//! frame is one dense matrix product producing real and imaginary parts side
//! by side, and squaring followed by a product with the stacked filterbank
//! gives `|X|²` projected onto the mel filters.

use crate::dsp::{self, HOP_LENGTH, LOG_FLOOR, N_FFT, N_MELS, WIN_LENGTH};
use crate::tensor::{Graph, Real, Result, Var};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct LogMelFrontend<F> {
    /// `[WIN_LENGTH, 2 * n_bins]`: Hann-weighted cosines then negated sines.
    dft: Vec<F>,
    /// `[2 * n_bins, N_MELS]`: the filterbank transposed, stacked twice.
    mel: Vec<F>,
    n_bins: usize,
}

impl<F: Real> Default for LogMelFrontend<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> LogMelFrontend<F> {
    pub fn new() -> Self {
        let bank = dsp::default_filterbank();
        let window = dsp::hann_window(WIN_LENGTH);
        let n_bins = N_FFT / 2 + 1;
        let mut dft = vec![F::zero(); WIN_LENGTH * 2 * n_bins];
        for (n, &wn) in window.iter().enumerate() {
            for k in 0..n_bins {
                let ang = 2.0 * PI * (k * n) as f64 / N_FFT as f64;
                dft[n * 2 * n_bins + k] = F::from_f64(wn * libm::cos(ang));
                dft[n * 2 * n_bins + n_bins + k] = F::from_f64(-wn * libm::sin(ang));
            }
        }
        let mut mel = vec![F::zero(); 2 * n_bins * N_MELS];
        for m in 0..N_MELS {
            for (k, &w) in bank.filter(m).iter().enumerate() {
                mel[k * N_MELS + m] = F::from_f64(w);
                mel[(n_bins + k) * N_MELS + m] = F::from_f64(w);
            }
        }
        Self { dft, mel, n_bins }
    }

    pub fn n_frames(len: usize) -> usize {
        dsp::frame_count(len, WIN_LENGTH, HOP_LENGTH)
    }

    /// `[B, 1, T]` waveform to `[B * n_frames, 40]` log-mel rows.
    pub fn forward(&self, g: &mut Graph<F>, x: Var) -> Result<Var> {
        let frames = g.frames(x, WIN_LENGTH, HOP_LENGTH)?;
        let dft = g.constant(&[WIN_LENGTH, 2 * self.n_bins], self.dft.clone())?;
        let spec = g.matmul(frames, dft)?;
        let power = g.square(spec)?;
        let mel = g.constant(&[2 * self.n_bins, N_MELS], self.mel.clone())?;
        let energies = g.matmul(power, mel)?;
        g.log_eps(energies, F::from_f64(LOG_FLOOR))
    }
}
