//! Composite loss, training modes, and the epoch loop with weighted sampling
//! and early stopping on validation loss.

mod loss;
mod sampler;
mod system;

pub use loss::{total_loss, LossInputs, LossParts, LossValues, LossWeights};
pub use sampler::{weighted_sampler, WeightedSampler};
pub use system::WuwSystem;

use crate::audio::{AudioError, Waveform};
use crate::augment::{augment_batch, AugmentError, AugmentOptions, AugmentedSample, NoisePool};
use crate::eval::MetricError;
use crate::models::{LogMelFrontend, SeForward};
use crate::tensor::{Adam, AdamConfig, Graph, ParamId, TensorError};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(&'static str),
    #[error("missing capability: {0}")]
    Capability(&'static str),
    #[error("loss became non-finite in epoch {epoch}")]
    Numeric { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// The detector alone on noisy input.
    ClassifierOnly,
    /// The enhancement model alone, reconstruction losses only.
    SimpleSE,
    /// The enhancement model under all three losses, detector held fixed.
    FrozenSE,
    /// Both networks under all three losses.
    JointSE,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::ClassifierOnly,
        TrainMode::SimpleSE,
        TrainMode::FrozenSE,
        TrainMode::JointSE,
    ];

    pub fn weights(self) -> LossWeights {
        let (alpha, beta, gamma) = match self {
            TrainMode::ClassifierOnly => (0.0, 0.0, 1.0),
            TrainMode::SimpleSE => (1.0, 1.0, 0.0),
            TrainMode::FrozenSE | TrainMode::JointSE => (1.0, 1.0, 1.0),
        };
        LossWeights { alpha, beta, gamma }
    }

    pub fn freezes_classifier(self) -> bool {
        self == TrainMode::FrozenSE
    }

    pub fn has_se(self) -> bool {
        self != TrainMode::ClassifierOnly
    }

    pub fn has_classifier(self) -> bool {
        self != TrainMode::SimpleSE
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::ClassifierOnly => "classifier_only",
            TrainMode::SimpleSE => "simple_se",
            TrainMode::FrozenSE => "frozen_se",
            TrainMode::JointSE => "joint_se",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = TrainError;

    /// Accepts `joint_se`, `JointSE`, `joint-se` and similar spellings.
    fn from_str(s: &str) -> Result<Self, TrainError> {
        let norm = |x: &str| -> alloc::string::String {
            x.chars()
                .filter(|c| *c != '_' && *c != '-')
                .map(|c| c.to_ascii_lowercase())
                .collect()
        };
        let key = norm(s);
        TrainMode::ALL
            .into_iter()
            .find(|m| norm(m.as_str()) == key)
            .ok_or(TrainError::Config("unknown training mode"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub snr_range: (f64, f64),
    pub max_epochs: usize,
    pub seed: u64,
    /// Global L2 norm bound on each step's gradient.
    pub grad_clip: f64,
    pub reverb_noise: bool,
    /// Overrides the mode's loss weights.
    pub weights: Option<LossWeights>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 50,
            patience: 10,
            snr_range: (-10.0, 50.0),
            max_epochs: 100,
            seed: 0,
            grad_clip: 5.0,
            reverb_noise: true,
            weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(TrainError::Config("gradient clip must be positive"));
        }
        let (lo, hi) = self.snr_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(TrainError::Config("invalid SNR range"));
        }
        if let Some(w) = &self.weights {
            w.validate()?;
        }
        Ok(())
    }

    pub fn augment_options(&self) -> AugmentOptions {
        AugmentOptions {
            snr_range: self.snr_range,
            reverb_noise: self.reverb_noise,
            reverb_speech: false,
        }
    }
}

/// Seed for epoch `epoch` of a run seeded with `seed` (splitmix64 finalizer).
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` consecutive epochs fail to beat the best validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train: LossValues,
    pub val: LossValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Default)]
struct LossMean {
    n: usize,
    total: f64,
    parts: [Option<f64>; 3],
}

impl LossMean {
    fn add(&mut self, v: &LossValues) {
        self.n += 1;
        self.total += v.total;
        for (acc, x) in self.parts.iter_mut().zip([v.raw, v.spec, v.bce]) {
            if let Some(x) = x {
                *acc = Some(acc.unwrap_or(0.0) + x);
            }
        }
    }

    fn mean(&self) -> LossValues {
        let n = self.n.max(1) as f64;
        let [raw, spec, bce] = self.parts.map(|p| p.map(|x| x / n));
        LossValues {
            total: self.total / n,
            raw,
            spec,
            bce,
        }
    }
}

/// Runs epochs of one training mode over in-memory clean windows.
#[derive(Debug)]
pub struct Trainer<'a> {
    mode: TrainMode,
    weights: LossWeights,
    config: TrainConfig,
    system: WuwSystem,
    train: &'a [(Waveform, bool)],
    pool: &'a NoisePool,
    dev: Vec<AugmentedSample>,
    sampler: WeightedSampler,
    trainable: Vec<ParamId>,
    adam: Adam,
    frontend: LogMelFrontend<f32>,
    stopper: EarlyStopping,
    best: Option<Vec<Vec<f32>>>,
    history: Vec<EpochRecord>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        mode: TrainMode,
        config: TrainConfig,
        system: WuwSystem,
        train: &'a [(Waveform, bool)],
        dev: &[(Waveform, bool)],
        pool: &'a NoisePool,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if train.is_empty() || dev.is_empty() {
            return Err(TrainError::Config("training and validation sets must be non-empty"));
        }
        if mode.has_se() && system.se.is_none() {
            return Err(TrainError::Config("mode needs an enhancement model"));
        }
        if mode.has_classifier() && system.classifier.is_none() {
            return Err(TrainError::Config("mode needs a classifier"));
        }
        if mode.freezes_classifier() && !system.pretrained_classifier {
            return Err(TrainError::Config("frozen-classifier training needs a pretrained classifier"));
        }
        let weights = config.weights.unwrap_or_else(|| mode.weights());
        let labels: Vec<bool> = train.iter().map(|(_, l)| *l).collect();
        let sampler = WeightedSampler::new(&labels)?;
        let mut trainable = Vec::new();
        if mode.has_se() {
            trainable.extend(system.se_ids());
        }
        if mode.has_classifier() && !mode.freezes_classifier() {
            trainable.extend(system.classifier_ids());
        }
        let adam = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            &system.store,
            trainable.clone(),
        );
        let dev = augment_batch(dev, pool, &config.augment_options(), epoch_seed(config.seed, 0))?;
        Ok(Self {
            mode,
            weights,
            stopper: EarlyStopping::new(config.patience),
            config,
            system,
            train,
            pool,
            dev,
            sampler,
            trainable,
            adam,
            frontend: LogMelFrontend::new(),
            best: None,
            history: Vec::new(),
        })
    }

    pub fn system(&self) -> &WuwSystem {
        &self.system
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn trainable_ids(&self) -> &[ParamId] {
        &self.trainable
    }

    pub fn dev_samples(&self) -> &[AugmentedSample] {
        &self.dev
    }

    /// Builds the loss of one sample on a fresh tape.
    pub fn sample_loss(
        &self,
        g: &mut Graph<f32>,
        sample: &AugmentedSample,
        train: bool,
    ) -> Result<LossParts, TrainError> {
        let len = sample.noisy.len();
        let x = g.constant(&[1, 1, len], sample.noisy.samples().to_vec())?;
        let mut clf_input = x;
        let mut reconstruction = None;
        if let (true, Some(se)) = (self.mode.has_se(), &self.system.se) {
            let out = se.forward(
                g,
                &self.system.store,
                x,
                SeForward {
                    trainable: train,
                    skips: true,
                },
            )?;
            let y = g.constant(&[1, 1, len], sample.clean.samples().to_vec())?;
            reconstruction = Some((y, out.output));
            clf_input = out.output;
        }
        let label = [if sample.label { 1.0f32 } else { 0.0 }];
        let mut prediction = None;
        if self.weights.needs_prediction() {
            let clf = self
                .system
                .classifier
                .as_ref()
                .ok_or(TrainError::Config("classification loss without a classifier"))?;
            let trainable = train && !self.mode.freezes_classifier();
            let p = clf.forward(g, &self.system.store, clf_input, trainable)?;
            prediction = Some((p, &label[..]));
        }
        total_loss(
            g,
            &self.frontend,
            &self.weights,
            LossInputs {
                reconstruction,
                prediction,
            },
        )
    }

    /// One optimizer step on `batch`; returns the per-sample loss values.
    pub fn step(&mut self, batch: &[&AugmentedSample]) -> Result<Vec<LossValues>, TrainError> {
        self.system.store.zero_grad();
        let mut values = Vec::with_capacity(batch.len());
        for sample in batch {
            let mut g = Graph::new();
            let parts = self.sample_loss(&mut g, sample, true)?;
            values.push(parts.values(&g));
            g.backward(parts.total)?;
            g.accumulate_param_grads(&mut self.system.store);
        }
        self.system.store.scale_grads(1.0 / batch.len() as f32);
        self.system.store.clip_grad_norm(&self.trainable, self.config.grad_clip);
        self.adam.step(&mut self.system.store)?;
        Ok(values)
    }

    pub fn validation_loss(&self) -> Result<LossValues, TrainError> {
        let mut acc = LossMean::default();
        for sample in &self.dev {
            let mut g = Graph::new();
            let parts = self.sample_loss(&mut g, sample, false)?;
            acc.add(&parts.values(&g));
        }
        Ok(acc.mean())
    }

    /// Re-augments the training windows, runs `ceil(N / batch)` weighted
    /// batches and evaluates the validation loss.
    pub fn run_epoch(&mut self) -> Result<EpochRecord, TrainError> {
        let epoch = self.history.len() + 1;
        let seed = epoch_seed(self.config.seed, epoch);
        let augmented = augment_batch(self.train, self.pool, &self.config.augment_options(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let n_batches = self.train.len().div_ceil(self.config.batch_size);
        let batches = self.sampler.batches(&mut rng, n_batches, self.config.batch_size);
        let mut acc = LossMean::default();
        for batch in &batches {
            let samples: Vec<&AugmentedSample> = batch.iter().map(|&i| &augmented[i]).collect();
            for v in self.step(&samples)? {
                acc.add(&v);
            }
        }
        let train = acc.mean();
        let val = self.validation_loss()?;
        if !train.total.is_finite() || !val.total.is_finite() {
            return Err(TrainError::Numeric { epoch });
        }
        if self.stopper.observe(epoch, val.total) == StopDecision::Improved {
            self.best = Some(self.system.store.snapshot());
        }
        let record = EpochRecord { epoch, train, val };
        self.history.push(record);
        Ok(record)
    }

    pub fn should_stop(&self) -> bool {
        self.history.len() >= self.config.max_epochs
            || self
                .stopper
                .best()
                .is_some_and(|(e, _)| self.history.len() - e >= self.config.patience)
    }

    /// Trains until early stopping or `max_epochs`, then restores the
    /// parameters of the best validation epoch.
    pub fn fit(&mut self) -> Result<TrainOutcome, TrainError> {
        while !self.should_stop() {
            self.run_epoch()?;
        }
        Ok(self.outcome())
    }

    /// Restores the best snapshot and summarizes the run so far.
    pub fn outcome(&mut self) -> TrainOutcome {
        if let Some(best) = &self.best {
            self.system.store.restore(best);
        }
        let (best_epoch, best_val_loss) = self.stopper.best().unwrap_or((0, f64::INFINITY));
        TrainOutcome {
            history: self.history.clone(),
            best_epoch,
            best_val_loss,
            stopped_early: self.history.len() < self.config.max_epochs,
        }
    }

    pub fn into_system(self) -> WuwSystem {
        self.system
    }
}
