//! Fully convolutional denoising auto-encoder over raw waveforms.
//!
//! Encoder: six conv blocks, the first with K=7/S=1, the rest K=4/S=2, so the
//! bottleneck runs at `T / 32`. Bottleneck: three residual blocks (K=3/S=1).
//! Decoder: six transposed-conv blocks mirroring the encoder; each one takes
//! its predecessor's output concatenated channelwise with the matching encoder
//! output. A linear K=7 convolution projects back to one channel.

use super::layers::{Binding, ConvBlock1d, ConvKind, Conv1dLayer, ResBlock1d};
use crate::audio::LENGTH_QUANTUM;
use crate::tensor::{Graph, ParamId, ParamStore, Real, Result, TensorError, Var};
use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

pub const DEFAULT_CHANNELS: [usize; 6] = [32, 48, 64, 96, 128, 192];

#[derive(Debug, Clone, PartialEq)]
pub struct SeConfig {
    pub channels: [usize; 6],
    pub res_blocks: usize,
    pub norm_eps: f64,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            channels: DEFAULT_CHANNELS,
            res_blocks: 3,
            norm_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeForward {
    pub trainable: bool,
    /// Ablation switch: when false, zeros replace the encoder features on every skip path.
    pub skips: bool,
}

impl Default for SeForward {
    fn default() -> Self {
        Self {
            trainable: true,
            skips: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SeOutput {
    pub output: Var,
    pub bottleneck: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeModel {
    pub config: SeConfig,
    pub encoder: Vec<ConvBlock1d>,
    pub bottleneck: Vec<ResBlock1d>,
    pub decoder: Vec<ConvBlock1d>,
    pub output: Conv1dLayer,
}

/// Kernel, stride and padding of encoder block `i`; decoder block `5 - i` mirrors it.
fn block_geometry(i: usize) -> (usize, usize, usize) {
    if i == 0 {
        (7, 1, 3)
    } else {
        (4, 2, 1)
    }
}

impl SeModel {
    pub fn new<F: Real>(config: SeConfig, store: &mut ParamStore<F>) -> Result<Self> {
        let ch = config.channels;
        let eps = config.norm_eps;
        let mut encoder = Vec::with_capacity(6);
        for i in 0..6 {
            let (k, s, p) = block_geometry(i);
            let cin = if i == 0 { 1 } else { ch[i - 1] };
            encoder.push(ConvBlock1d::new(
                store,
                &format!("encoder.{i}"),
                "conv",
                "norm",
                ConvKind::Conv,
                (cin, ch[i]),
                k,
                s,
                p,
                eps,
            )?);
        }
        let bottleneck = (0..config.res_blocks)
            .map(|i| ResBlock1d::new(store, &format!("bottleneck.{i}"), ch[5], eps))
            .collect::<Result<Vec<_>>>()?;
        let mut decoder = Vec::with_capacity(6);
        for j in 0..6 {
            // Decoder block j consumes [previous output ‖ encoder block 5-j output].
            let mirror = 5 - j;
            let prev = if j == 0 { ch[5] } else { ch[mirror] };
            let cin = prev + ch[mirror];
            let cout = if mirror == 0 { ch[0] } else { ch[mirror - 1] };
            let (k, s, p) = block_geometry(mirror);
            decoder.push(ConvBlock1d::new(
                store,
                &format!("decoder.{j}"),
                "deconv",
                "norm",
                ConvKind::Transposed,
                (cin, cout),
                k,
                s,
                p,
                eps,
            )?);
        }
        let output = Conv1dLayer::new(store, "output.conv", ConvKind::Conv, ch[0], 1, 7, 1, 3)?;
        Ok(Self {
            config,
            encoder,
            bottleneck,
            decoder,
            output,
        })
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.encoder.iter().for_each(|b| b.init(store, rng));
        self.bottleneck.iter().for_each(|b| b.init(store, rng));
        self.decoder.iter().for_each(|b| b.init(store, rng));
        self.output.init(store, rng);
    }

    pub fn param_ids<F: Real>(store: &ParamStore<F>) -> Vec<ParamId> {
        ["encoder.", "bottleneck.", "decoder.", "output."]
            .iter()
            .flat_map(|p| store.ids_with_prefix(p).collect::<Vec<_>>())
            .collect()
    }

    /// `[B, 1, T]` noisy waveform to `[B, 1, T]` estimate. `T` must be a multiple of 32.
    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: Var,
        opts: SeForward,
    ) -> Result<SeOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != 1 || shape[2] == 0 || shape[2] % LENGTH_QUANTUM != 0 {
            return Err(TensorError::Degenerate {
                op: "se_forward",
                reason: format!(
                    "input shape {shape:?} must be [B, 1, T] with T a multiple of {LENGTH_QUANTUM}; zero-pad the waveform"
                ),
            });
        }
        let bind = Binding {
            trainable: opts.trainable,
        };
        let mut skips = Vec::with_capacity(6);
        let mut h = x;
        for block in &self.encoder {
            h = block.forward(g, store, h, bind)?;
            skips.push(h);
        }
        for block in &self.bottleneck {
            h = block.forward(g, store, h, bind)?;
        }
        let bottleneck = h;
        for (j, block) in self.decoder.iter().enumerate() {
            let mut skip = skips[5 - j];
            if !opts.skips {
                let zeros = alloc::vec![F::zero(); g.value(skip).len()];
                let s = g.shape(skip).to_vec();
                skip = g.constant(&s, zeros)?;
            }
            let joined = g.concat_channels(h, skip)?;
            h = block.forward(g, store, joined, bind)?;
        }
        let output = self.output.forward(g, store, h, bind)?;
        Ok(SeOutput { output, bottleneck })
    }
}
