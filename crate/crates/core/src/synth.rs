//! Synthetic stand-in corpus: two-syllable harmonic "keywords", confusable
//! negatives, and five families of background noise.
//!
//! A keyword is a low syllable followed by a high one. Negatives reuse the
//! same syllables in the wrong order, alone, or at other pitches, so telling
//! the classes apart needs both spectral and temporal structure.

use crate::audio::{Waveform, DEFAULT_WINDOW, SAMPLE_RATE};
use crate::augment::NoiseType;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;

const FS: f64 = SAMPLE_RATE as f64;
const LOW_F0: (f64, f64) = (380.0, 440.0);
const HIGH_F0: (f64, f64) = (640.0, 720.0);
const SYLLABLE_SECS: (f64, f64) = (0.22, 0.3);
const GAP_SECS: (f64, f64) = (0.04, 0.1);
const FLOOR: f64 = 1e-3;
const NOISE_RMS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub waveform: Waveform,
    pub label: bool,
    /// Keyword (or confuser) span in seconds.
    pub onset: f64,
    pub offset: f64,
}

fn raised_cosine(i: usize, n: usize) -> f64 {
    let edge = (n / 8).max(1);
    if i < edge {
        0.5 - 0.5 * libm::cos(PI * i as f64 / edge as f64)
    } else if i >= n - edge {
        0.5 - 0.5 * libm::cos(PI * (n - i) as f64 / edge as f64)
    } else {
        1.0
    }
}

/// Harmonic tone with four partials gliding linearly from `f0` to `f1`.
fn syllable(out: &mut [f64], start: usize, len: usize, f0: f64, f1: f64, amp: f64) {
    let mut phase = 0.0;
    for i in 0..len.min(out.len().saturating_sub(start)) {
        let f = f0 + (f1 - f0) * i as f64 / len as f64;
        phase += 2.0 * PI * f / FS;
        let env = raised_cosine(i, len);
        let tone: f64 = (1..=4).map(|h| libm::sin(h as f64 * phase) / h as f64).sum();
        out[start + i] += amp * env * tone;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Keyword,
    Reversed,
    LowOnly,
    HighOnly,
    OtherPitch,
}

fn draw_f0<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..hi)
}

fn render<R: Rng + ?Sized>(pattern: Pattern, window: usize, rng: &mut R) -> SynthItem {
    let mut buf = vec![0.0f64; window];
    for s in buf.iter_mut() {
        *s = FLOOR * rng.gen_range(-1.0..1.0);
    }
    let secs = |rng: &mut R, (a, b): (f64, f64)| (rng.gen_range(a..b) * FS) as usize;
    let (n1, gap, n2) = (secs(rng, SYLLABLE_SECS), secs(rng, GAP_SECS), secs(rng, SYLLABLE_SECS));
    let two = !matches!(pattern, Pattern::LowOnly | Pattern::HighOnly);
    let span = if two { n1 + gap + n2 } else { n1 };
    let start = rng.gen_range(0..window - span);
    let amp = rng.gen_range(0.15..0.35);
    let low = draw_f0(rng, LOW_F0);
    let high = draw_f0(rng, HIGH_F0);
    let (a, b) = match pattern {
        Pattern::Keyword => ((low, low * 1.05), (high, high * 0.95)),
        Pattern::Reversed => ((high, high * 0.95), (low, low * 1.05)),
        Pattern::LowOnly => ((low, low * 1.05), (0.0, 0.0)),
        Pattern::HighOnly => ((high, high * 0.95), (0.0, 0.0)),
        Pattern::OtherPitch => {
            let p = draw_f0(rng, (200.0, 300.0));
            let q = draw_f0(rng, (900.0, 1100.0));
            ((p, p * 1.05), (q, q * 0.95))
        }
    };
    syllable(&mut buf, start, n1, a.0, a.1, amp);
    if two {
        syllable(&mut buf, start + n1 + gap, n2, b.0, b.1, amp);
    }
    SynthItem {
        waveform: Waveform::new(buf.iter().map(|&v| v as f32).collect()).expect("finite synthesis"),
        label: pattern == Pattern::Keyword,
        onset: start as f64 / FS,
        offset: (start + span) as f64 / FS,
    }
}

/// One clean window of `window` samples; negatives cycle through the confuser patterns.
pub fn synth_window<R: Rng + ?Sized>(label: bool, window: usize, rng: &mut R) -> SynthItem {
    let pattern = if label {
        Pattern::Keyword
    } else {
        match rng.gen_range(0..4) {
            0 => Pattern::Reversed,
            1 => Pattern::LowOnly,
            2 => Pattern::HighOnly,
            _ => Pattern::OtherPitch,
        }
    };
    render(pattern, window, rng)
}

/// `n_pos` keyword windows followed by `n_neg` negatives, each [`DEFAULT_WINDOW`] long.
pub fn synth_corpus<R: Rng + ?Sized>(n_pos: usize, n_neg: usize, rng: &mut R) -> Vec<SynthItem> {
    let mut items: Vec<SynthItem> = (0..n_pos).map(|_| synth_window(true, DEFAULT_WINDOW, rng)).collect();
    items.extend((0..n_neg).map(|_| synth_window(false, DEFAULT_WINDOW, rng)));
    items
}

fn white<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Approximately 1/f noise (Kellet's economy filter).
fn pink<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    white(len, rng)
        .into_iter()
        .map(|w| {
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

fn brown<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut acc = 0.0;
    white(len, rng)
        .into_iter()
        .map(|w| {
            acc = 0.995 * acc + 0.1 * w;
            acc
        })
        .collect()
}

/// Random syllables at random pitches, like distant speech.
fn babble<R: Rng + ?Sized>(out: &mut [f64], density: f64, rng: &mut R) {
    let len = out.len();
    let n = (density * len as f64 / FS) as usize;
    for _ in 0..n {
        let dur = rng.gen_range(0.08..0.3) * FS;
        let start = rng.gen_range(0..len);
        let f0 = rng.gen_range(120.0..900.0);
        let glide = rng.gen_range(0.85..1.15);
        syllable(out, start, dur as usize, f0, f0 * glide, rng.gen_range(0.2..1.0));
    }
}

fn chords<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    const SCALE: [f64; 10] = [196.0, 220.0, 262.0, 294.0, 330.0, 392.0, 440.0, 523.0, 587.0, 659.0];
    let mut t = 0usize;
    while t < out.len() {
        let dur = (rng.gen_range(0.25..0.6) * FS) as usize;
        for _ in 0..3 {
            let f = SCALE[rng.gen_range(0..SCALE.len())];
            syllable(out, t, dur, f, f, rng.gen_range(0.3..1.0));
        }
        t += dur;
    }
}

/// `len` samples of the given noise family, scaled to a fixed RMS.
pub fn synth_noise<R: Rng + ?Sized>(noise_type: NoiseType, len: usize, rng: &mut R) -> Waveform {
    let mut buf = match noise_type {
        NoiseType::Music => {
            let mut b = vec![0.0; len];
            chords(&mut b, rng);
            b
        }
        NoiseType::Tv => {
            let mut b: Vec<f64> = pink(len, rng).iter().map(|v| 0.05 * v).collect();
            babble(&mut b, 5.0, rng);
            b
        }
        NoiseType::Office => {
            let mut b = pink(len, rng);
            let clicks = len / 1600;
            for _ in 0..clicks {
                let at = rng.gen_range(0..len);
                for k in 0..200.min(len - at) {
                    b[at + k] += 4.0 * rng.gen_range(-1.0..1.0) * libm::exp(-(k as f64) / 30.0);
                }
            }
            b
        }
        NoiseType::LivingRoom => {
            let hum = rng.gen_range(48.0..52.0);
            brown(len, rng)
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let t = i as f64 / FS;
                    v + 0.3 * libm::sin(2.0 * PI * hum * t) + 0.15 * libm::sin(4.0 * PI * hum * t)
                })
                .collect()
        }
        NoiseType::Conversations => {
            let mut b = vec![0.0; len];
            babble(&mut b, 14.0, rng);
            b
        }
    };
    let r = libm::sqrt(buf.iter().map(|v| v * v).sum::<f64>() / len as f64);
    let scale = if r > 0.0 { NOISE_RMS / r } else { 0.0 };
    buf.iter_mut().for_each(|v| *v *= scale);
    if scale == 0.0 {
        buf = white(len, rng).into_iter().map(|v| v * NOISE_RMS).collect();
    }
    Waveform::new(buf.iter().map(|&v| v as f32).collect()).expect("finite synthesis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn windows_have_requested_length_and_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let items = synth_corpus(3, 5, &mut rng);
        assert_eq!(items.iter().filter(|i| i.label).count(), 3);
        for it in &items {
            assert_eq!(it.waveform.len(), DEFAULT_WINDOW);
            assert!(it.onset < it.offset && it.offset <= 1.5);
            assert!(it.waveform.samples().iter().all(|s| s.abs() < 1.0));
        }
    }

    #[test]
    fn noise_rms_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in NoiseType::ALL {
            let n = synth_noise(t, 8_000, &mut rng);
            assert!((n.rms() - NOISE_RMS).abs() < 1e-4, "{t}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_corpus(2, 2, &mut ChaCha8Rng::seed_from_u64(9));
        let b = synth_corpus(2, 2, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
