//! LeNet-style wake-word detector over the log-mel spectrogram of a window.

use super::frontend::LogMelFrontend;
use super::layers::{uniform_fill, Binding, LinearLayer};
use crate::audio::DEFAULT_WINDOW;
use crate::dsp::N_MELS;
use crate::tensor::{Graph, ParamId, ParamStore, Real, Result, TensorError, Var};
use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

const KERNEL: usize = 5;
const POOL: usize = 2;
const CONV1_CHANNELS: usize = 6;
const CONV2_CHANNELS: usize = 16;
const HIDDEN: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeNetConfig {
    /// Samples per input window.
    pub window: usize,
}

impl Default for LeNetConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Conv2dLayer {
    weight: ParamId,
    bias: ParamId,
    fan_in: usize,
}

impl Conv2dLayer {
    fn new<F: Real>(store: &mut ParamStore<F>, prefix: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            weight: store.zeros(&format!("{prefix}.weight"), &[cout, cin, KERNEL, KERNEL])?,
            bias: store.zeros(&format!("{prefix}.bias"), &[cout])?,
            fan_in: cin * KERNEL * KERNEL,
        })
    }

    fn init<F: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        let bound = 1.0 / libm::sqrt(self.fan_in as f64);
        uniform_fill(store, self.weight, bound, rng);
        uniform_fill(store, self.bias, bound, rng);
    }

    fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, bind: Binding) -> Result<Var> {
        let w = g.bind(store, self.weight, bind.trainable);
        let b = g.bind(store, self.bias, bind.trainable);
        g.conv2d(x, w, Some(b))
    }
}

/// conv(1→6, 5×5) → ReLU → pool 2 → conv(6→16, 5×5) → ReLU → pool 2 → fc 120 → ReLU → fc 1 → sigmoid.
#[derive(Debug, Clone)]
pub struct LeNetClassifier<F> {
    pub config: LeNetConfig,
    frontend: LogMelFrontend<F>,
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
    fc1: LinearLayer,
    fc2: LinearLayer,
}

/// Spatial size after one valid 5×5 convolution and 2×2 pooling.
fn stage(n: usize) -> usize {
    (n - KERNEL + 1) / POOL
}

impl<F: Real> LeNetClassifier<F> {
    pub fn new(config: LeNetConfig, store: &mut ParamStore<F>) -> Result<Self> {
        let frames = LogMelFrontend::<F>::n_frames(config.window);
        if frames < 16 {
            return Err(TensorError::Degenerate {
                op: "lenet",
                reason: format!("window of {} samples yields only {frames} frames", config.window),
            });
        }
        let (h, w) = (stage(stage(frames)), stage(stage(N_MELS)));
        Ok(Self {
            config,
            frontend: LogMelFrontend::new(),
            conv1: Conv2dLayer::new(store, "classifier.conv1", 1, CONV1_CHANNELS)?,
            conv2: Conv2dLayer::new(store, "classifier.conv2", CONV1_CHANNELS, CONV2_CHANNELS)?,
            fc1: LinearLayer::new(store, "classifier.fc1", CONV2_CHANNELS * h * w, HIDDEN)?,
            fc2: LinearLayer::new(store, "classifier.fc2", HIDDEN, 1)?,
        })
    }

    pub fn frontend(&self) -> &LogMelFrontend<F> {
        &self.frontend
    }

    /// Fan-in uniform init, except the output layer which starts at zero so an
    /// untrained detector scores every window 0.5.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.conv1.init(store, rng);
        self.conv2.init(store, rng);
        self.fc1.init(store, rng);
        for id in [self.fc2.weight, self.fc2.bias] {
            store.get_mut(id).value.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn param_ids(store: &ParamStore<F>) -> Vec<ParamId> {
        store.ids_with_prefix("classifier.").collect()
    }

    /// Scores from precomputed log-mel rows `[B * frames, 40]`.
    pub fn forward_features(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        features: Var,
        batch: usize,
        trainable: bool,
    ) -> Result<Var> {
        let bind = Binding { trainable };
        let frames = LogMelFrontend::<F>::n_frames(self.config.window);
        let x = g.reshape(features, &[batch, 1, frames, N_MELS])?;
        let h = self.conv1.forward(g, store, x, bind)?;
        let h = g.relu(h)?;
        let h = g.max_pool2d(h, POOL)?;
        let h = self.conv2.forward(g, store, h, bind)?;
        let h = g.relu(h)?;
        let h = g.max_pool2d(h, POOL)?;
        let h = g.flatten(h)?;
        let h = self.fc1.forward(g, store, h, bind)?;
        let h = g.relu(h)?;
        let logit = self.fc2.forward(g, store, h, bind)?;
        let p = g.sigmoid(logit)?;
        g.reshape(p, &[batch])
    }

    /// `[B, 1, T]` waveforms to `[B]` detection probabilities.
    pub fn forward(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, trainable: bool) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != 1 || shape[2] != self.config.window {
            return Err(TensorError::Shape {
                op: "classify",
                lhs: shape,
                rhs: alloc::vec![0, 1, self.config.window],
            });
        }
        let features = self.frontend.forward(g, x)?;
        self.forward_features(g, store, features, shape[0], trainable)
    }
}
