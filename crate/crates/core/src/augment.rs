//! Room impulse responses by the image source method, and SNR-controlled mixing.

use crate::audio::{rms, AudioError, Waveform, SAMPLE_RATE};
use crate::dsp::fft;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_MAX_ORDER: usize = 8;
/// 0.5 s at 16 kHz.
pub const MAX_RIR_TAPS: usize = 8_000;

pub const ROOM_X: (f64, f64) = (2.0, 4.5);
pub const ROOM_Y: (f64, f64) = (2.0, 5.5);
pub const ROOM_Z: (f64, f64) = (2.5, 4.0);
pub const DEVICE_Z: (f64, f64) = (0.5, 2.0);
pub const BETA_RANGE: (f64, f64) = (0.3, 0.9);
/// Source and microphone are drawn at least this far from every wall and from each other.
pub const MIN_CLEARANCE: f64 = 0.05;
pub const MIN_SOURCE_MIC_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("room geometry invalid: {0}")]
    Geometry(&'static str),
    #[error("{which} signal has zero RMS")]
    Degenerate { which: &'static str },
    #[error("clean has {clean} samples but noise has {noise}")]
    LengthMismatch { clean: usize, noise: usize },
    #[error("noise pool is empty")]
    EmptyPool,
    #[error("invalid SNR range [{0}, {1}]")]
    SnrRange(f64, f64),
    #[error("mixing weight {0} outside (0, 1]")]
    Lambda(f64),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoiseType {
    Music,
    Tv,
    Office,
    LivingRoom,
    Conversations,
}

impl NoiseType {
    pub const ALL: [NoiseType; 5] = [
        NoiseType::Music,
        NoiseType::Tv,
        NoiseType::Office,
        NoiseType::LivingRoom,
        NoiseType::Conversations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseType::Music => "music",
            NoiseType::Tv => "tv",
            NoiseType::Office => "office",
            NoiseType::LivingRoom => "living_room",
            NoiseType::Conversations => "conversations",
        }
    }

    /// Recorded TV and music are played back through a loudspeaker in the room.
    pub fn is_reverberated(self) -> bool {
        matches!(self, NoiseType::Music | NoiseType::Tv)
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        NoiseType::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub dims: [f64; 3],
    pub source: [f64; 3],
    pub mic: [f64; 3],
    /// Pressure reflection coefficient shared by all six walls.
    pub beta: f64,
    pub max_order: usize,
}

fn inside(p: [f64; 3], dims: [f64; 3]) -> bool {
    p.iter().zip(dims).all(|(&c, d)| c > 0.0 && c < d)
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

impl RoomSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let [lx, ly, lz] = self.dims;
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        if !within(lx, ROOM_X) || !within(ly, ROOM_Y) || !within(lz, ROOM_Z) {
            return Err(AugmentError::Geometry("room dimensions out of range"));
        }
        if !inside(self.source, self.dims) || !inside(self.mic, self.dims) {
            return Err(AugmentError::Geometry("source or microphone outside the room"));
        }
        if !within(self.source[2], DEVICE_Z) || !within(self.mic[2], DEVICE_Z) {
            return Err(AugmentError::Geometry("source or microphone height out of range"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(AugmentError::Geometry("reflection coefficient outside [0, 1)"));
        }
        Ok(())
    }

    pub fn direct_distance(&self) -> f64 {
        distance(self.source, self.mic)
    }
}

/// Uniform draw over the room, device-height and reflection-coefficient bounds.
pub fn sample_room<R: Rng + ?Sized>(rng: &mut R) -> RoomSpec {
    let dims = [
        rng.gen_range(ROOM_X.0..=ROOM_X.1),
        rng.gen_range(ROOM_Y.0..=ROOM_Y.1),
        rng.gen_range(ROOM_Z.0..=ROOM_Z.1),
    ];
    let point = |rng: &mut R| {
        [
            rng.gen_range(MIN_CLEARANCE..dims[0] - MIN_CLEARANCE),
            rng.gen_range(MIN_CLEARANCE..dims[1] - MIN_CLEARANCE),
            rng.gen_range(DEVICE_Z.0..=DEVICE_Z.1),
        ]
    };
    let source = point(rng);
    let mut mic = point(rng);
    while distance(source, mic) < MIN_SOURCE_MIC_DISTANCE {
        mic = point(rng);
    }
    RoomSpec {
        dims,
        source,
        mic,
        beta: rng.gen_range(BETA_RANGE.0..=BETA_RANGE.1),
        max_order: DEFAULT_MAX_ORDER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    pub reflections: u32,
    pub distance: f64,
    pub amplitude: f64,
    pub delay: usize,
}

/// Position of image `k` along one axis of length `len`; `|k|` wall reflections.
fn image_coord(k: i64, len: f64, src: f64) -> f64 {
    if k % 2 == 0 {
        k as f64 * len + src
    } else {
        (k + 1) as f64 * len - src
    }
}

/// The `(2N + 1)³` image lattice for per-axis order `N`.
pub fn image_sources(room: &RoomSpec) -> Result<Vec<ImageSource>, AugmentError> {
    room.validate()?;
    let n = room.max_order as i64;
    let mut out = Vec::with_capacity(((2 * n + 1) as usize).pow(3));
    for kx in -n..=n {
        for ky in -n..=n {
            for kz in -n..=n {
                let position = [
                    image_coord(kx, room.dims[0], room.source[0]),
                    image_coord(ky, room.dims[1], room.source[1]),
                    image_coord(kz, room.dims[2], room.source[2]),
                ];
                let reflections = (kx.abs() + ky.abs() + kz.abs()) as u32;
                let d = distance(position, room.mic);
                if d == 0.0 {
                    return Err(AugmentError::Geometry("image source coincides with microphone"));
                }
                out.push(ImageSource {
                    position,
                    reflections,
                    distance: d,
                    amplitude: libm::pow(room.beta, reflections as f64) / (4.0 * PI * d),
                    delay: libm::round(SAMPLE_RATE as f64 * d / SPEED_OF_SOUND) as usize,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
}

impl ImpulseResponse {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.taps.iter().position(|&t| t != 0.0)
    }

    pub fn unit(delay: usize) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = 1.0;
        Self { taps }
    }
}

/// Sums `β^reflections / (4πd)` at sample `round(fs·d/c)` for every image,
/// dropping arrivals beyond [`MAX_RIR_TAPS`].
pub fn ism_rir(room: &RoomSpec) -> Result<ImpulseResponse, AugmentError> {
    let images = image_sources(room)?;
    let last = images
        .iter()
        .filter(|i| i.amplitude != 0.0)
        .map(|i| i.delay)
        .max()
        .unwrap_or(0);
    let mut taps = vec![0.0; (last + 1).min(MAX_RIR_TAPS)];
    for img in images.iter().filter(|i| i.delay < MAX_RIR_TAPS) {
        if img.amplitude != 0.0 {
            taps[img.delay] += img.amplitude;
        }
    }
    Ok(ImpulseResponse { taps })
}

/// Full convolution truncated to the input length, then scaled down if it clips.
pub fn apply_rir(w: &Waveform, rir: &ImpulseResponse) -> Result<Waveform, AugmentError> {
    if rir.is_empty() {
        return Err(AugmentError::Geometry("empty impulse response"));
    }
    let x: Vec<f64> = w.samples().iter().map(|&s| s as f64).collect();
    let mut y = fft::convolve(&x, &rir.taps);
    y.truncate(w.len());
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    Ok(Waveform::new(y.iter().map(|&v| (v * scale) as f32).collect())?)
}

/// Mixing weight λ such that `20·log10(λ·rms_y / ((1-λ)·rms_n)) = target_snr`.
pub fn solve_lambda(rms_y: f64, rms_n: f64, target_snr: f64) -> Result<f64, AugmentError> {
    if rms_y <= 0.0 {
        return Err(AugmentError::Degenerate { which: "clean" });
    }
    if rms_n <= 0.0 {
        return Err(AugmentError::Degenerate { which: "noise" });
    }
    let gain = libm::pow(10.0, target_snr / 20.0);
    Ok(gain * rms_n / (rms_y + gain * rms_n))
}

/// SNR of the components as mixed.
pub fn mixed_snr(lambda: f64, rms_y: f64, rms_n: f64) -> f64 {
    20.0 * libm::log10(lambda * rms_y / ((1.0 - lambda) * rms_n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub clean: Waveform,
    pub noise: Waveform,
    pub target_snr: f64,
    pub lambda: f64,
}

impl MixSpec {
    pub fn new(clean: Waveform, noise: Waveform, target_snr: f64) -> Result<Self, AugmentError> {
        if clean.len() != noise.len() {
            return Err(AugmentError::LengthMismatch {
                clean: clean.len(),
                noise: noise.len(),
            });
        }
        let lambda = solve_lambda(clean.rms(), noise.rms(), target_snr)?;
        Ok(Self {
            clean,
            noise,
            target_snr,
            lambda,
        })
    }

    pub fn achieved_snr(&self) -> f64 {
        mixed_snr(self.lambda, self.clean.rms(), self.noise.rms())
    }
}

/// `x = λ·y + (1 - λ)·n`.
pub fn mix(spec: &MixSpec) -> Result<Waveform, AugmentError> {
    mix_with(spec.lambda, &spec.clean, &spec.noise)
}

pub fn mix_with(lambda: f64, clean: &Waveform, noise: &Waveform) -> Result<Waveform, AugmentError> {
    if clean.len() != noise.len() {
        return Err(AugmentError::LengthMismatch {
            clean: clean.len(),
            noise: noise.len(),
        });
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(AugmentError::Lambda(lambda));
    }
    let out = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(&y, &n)| (lambda * y as f64 + (1.0 - lambda) * n as f64) as f32)
        .collect();
    Ok(Waveform::new(out)?)
}

/// Loops a short noise or crops a random span of a long one to exactly `len` samples.
pub fn fit_noise<R: Rng + ?Sized>(noise: &Waveform, len: usize, rng: &mut R) -> Waveform {
    let src = noise.samples();
    let out: Vec<f32> = if src.len() >= len {
        let start = rng.gen_range(0..=src.len() - len);
        src[start..start + len].to_vec()
    } else {
        src.iter().copied().cycle().take(len).collect()
    };
    Waveform::new(out).expect("slice of a valid waveform is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseClip {
    pub noise_type: NoiseType,
    pub waveform: Waveform,
    /// Identifier carried into sidecar metadata (usually the file path).
    pub source: alloc::string::String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoisePool {
    pub clips: Vec<NoiseClip>,
}

impl NoisePool {
    pub fn new(clips: Vec<NoiseClip>) -> Result<Self, AugmentError> {
        if clips.is_empty() {
            return Err(AugmentError::EmptyPool);
        }
        if clips.iter().any(|c| c.waveform.rms() == 0.0) {
            return Err(AugmentError::Degenerate { which: "noise" });
        }
        Ok(Self { clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    pub snr_range: (f64, f64),
    /// Reverberate TV and music noise through a freshly sampled room.
    pub reverb_noise: bool,
    /// Also reverberate the speech (through its own room draw).
    pub reverb_speech: bool,
}

impl AugmentOptions {
    pub fn new(snr_range: (f64, f64)) -> Self {
        Self {
            snr_range,
            reverb_noise: true,
            reverb_speech: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub noisy: Waveform,
    /// Reconstruction target `y`.
    pub clean: Waveform,
    pub label: bool,
    pub noise_type: NoiseType,
    pub noise_index: usize,
    pub snr: f64,
    pub lambda: f64,
}

/// Seed for item `index` of a stream derived from `seed`, independent of how
/// items are scheduled.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes one clean window with a randomly chosen, fitted noise at a random SNR.
pub fn augment_one<R: Rng + ?Sized>(
    clean: &Waveform,
    label: bool,
    pool: &NoisePool,
    opts: &AugmentOptions,
    rng: &mut R,
) -> Result<AugmentedSample, AugmentError> {
    if pool.is_empty() {
        return Err(AugmentError::EmptyPool);
    }
    let (lo, hi) = opts.snr_range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(AugmentError::SnrRange(lo, hi));
    }
    let noise_index = rng.gen_range(0..pool.len());
    let clip = &pool.clips[noise_index];
    let snr = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let mut noise = fit_noise(&clip.waveform, clean.len(), rng);
    if opts.reverb_noise && clip.noise_type.is_reverberated() {
        let room = sample_room(rng);
        noise = apply_rir(&noise, &ism_rir(&room)?)?;
    }
    let clean = if opts.reverb_speech {
        let room = sample_room(rng);
        apply_rir(clean, &ism_rir(&room)?)?
    } else {
        clean.clone()
    };
    let spec = MixSpec::new(clean, noise, snr)?;
    let noisy = mix(&spec)?;
    Ok(AugmentedSample {
        noisy,
        clean: spec.clean,
        label,
        noise_type: clip.noise_type,
        noise_index,
        snr,
        lambda: spec.lambda,
    })
}

/// Pairs every clean window with an independently drawn noise and SNR. Item
/// `i` draws from its own stream of `seed`, so the result does not depend on
/// execution order.
pub fn augment_batch(
    cleans: &[(Waveform, bool)],
    pool: &NoisePool,
    opts: &AugmentOptions,
    seed: u64,
) -> Result<Vec<AugmentedSample>, AugmentError> {
    if pool.is_empty() {
        return Err(AugmentError::EmptyPool);
    }
    cleans
        .iter()
        .enumerate()
        .map(|(i, (w, label))| augment_one(w, *label, pool, opts, &mut item_rng(seed, i as u64)))
        .collect()
}

/// Measured SNR of a mixture from its decomposition.
pub fn measure_snr(lambda: f64, clean: &[f32], noise: &[f32]) -> f64 {
    mixed_snr(lambda, rms(clean), rms(noise))
}
