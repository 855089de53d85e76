use crate::tensor::{Graph, ParamId, ParamStore, Real, Result, Var};
use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

pub(crate) fn uniform_fill<F: Real, R: Rng + ?Sized>(store: &mut ParamStore<F>, id: ParamId, bound: f64, rng: &mut R) {
    for v in store.get_mut(id).value.iter_mut() {
        *v = F::from_f64(rng.gen_range(-bound..=bound));
    }
}

pub(crate) fn constant_fill<F: Real>(store: &mut ParamStore<F>, id: ParamId, c: f64) {
    store.get_mut(id).value.iter_mut().for_each(|v| *v = F::from_f64(c));
}

/// How parameters enter the tape for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binding {
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Conv,
    Transposed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub kind: ConvKind,
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        prefix: &str,
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let shape = match kind {
            ConvKind::Conv => [out_channels, in_channels, kernel],
            ConvKind::Transposed => [in_channels, out_channels, kernel],
        };
        let weight = store.zeros(&format!("{prefix}.weight"), &shape)?;
        let bias = store.zeros(&format!("{prefix}.bias"), &[out_channels])?;
        Ok(Self {
            kind,
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            ConvKind::Conv => self.in_channels * self.kernel,
            ConvKind::Transposed => self.out_channels * self.kernel,
        }
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        let bound = 1.0 / libm::sqrt(self.fan_in() as f64);
        uniform_fill(store, self.weight, bound, rng);
        uniform_fill(store, self.bias, bound, rng);
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, bind: Binding) -> Result<Var> {
        let w = g.bind(store, self.weight, bind.trainable);
        let b = g.bind(store, self.bias, bind.trainable);
        match self.kind {
            ConvKind::Conv => g.conv1d(x, w, Some(b), self.stride, self.padding),
            ConvKind::Transposed => g.conv_transpose1d(x, w, Some(b), self.stride, self.padding),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        alloc::vec![self.weight, self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNormLayer {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl InstanceNormLayer {
    pub fn new<F: Real>(store: &mut ParamStore<F>, prefix: &str, channels: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            gain: store.zeros(&format!("{prefix}.gain"), &[channels])?,
            bias: store.zeros(&format!("{prefix}.bias"), &[channels])?,
            eps,
        })
    }

    pub fn init<F: Real>(&self, store: &mut ParamStore<F>) {
        constant_fill(store, self.gain, 1.0);
        constant_fill(store, self.bias, 0.0);
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, bind: Binding) -> Result<Var> {
        let gain = g.bind(store, self.gain, bind.trainable);
        let bias = g.bind(store, self.bias, bind.trainable);
        let shape = g.shape(x);
        if shape.len() >= 3 && shape[2..].iter().product::<usize>() == 1 {
            // A single position normalizes to 0, leaving only the affine bias.
            let zeroed = g.mul_scalar(x, F::zero())?;
            return g.add_bias(zeroed, bias);
        }
        g.instance_norm(x, gain, bias, F::from_f64(self.eps))
    }
}

/// Convolution (plain or transposed), instance normalization, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock1d {
    pub conv: Conv1dLayer,
    pub norm: InstanceNormLayer,
}

impl ConvBlock1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        prefix: &str,
        conv_name: &str,
        norm_name: &str,
        kind: ConvKind,
        channels: (usize, usize),
        kernel: usize,
        stride: usize,
        padding: usize,
        eps: f64,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv1dLayer::new(
                store,
                &format!("{prefix}.{conv_name}"),
                kind,
                channels.0,
                channels.1,
                kernel,
                stride,
                padding,
            )?,
            norm: InstanceNormLayer::new(store, &format!("{prefix}.{norm_name}"), channels.1, eps)?,
        })
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.conv.init(store, rng);
        self.norm.init(store);
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, bind: Binding) -> Result<Var> {
        let y = self.conv.forward(g, store, x, bind)?;
        let y = self.norm.forward(g, store, y, bind)?;
        g.relu(y)
    }
}

/// Two shape-preserving conv blocks with an additive skip from input to output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock1d {
    pub first: ConvBlock1d,
    pub second: ConvBlock1d,
}

impl ResBlock1d {
    pub fn new<F: Real>(store: &mut ParamStore<F>, prefix: &str, channels: usize, eps: f64) -> Result<Self> {
        let block = |store: &mut ParamStore<F>, i: usize| {
            ConvBlock1d::new(
                store,
                prefix,
                &format!("conv{i}"),
                &format!("norm{i}"),
                ConvKind::Conv,
                (channels, channels),
                3,
                1,
                1,
                eps,
            )
        };
        Ok(Self {
            first: block(store, 1)?,
            second: block(store, 2)?,
        })
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.first.init(store, rng);
        self.second.init(store, rng);
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, bind: Binding) -> Result<Var> {
        let h = self.first.forward(g, store, x, bind)?;
        let h = self.second.forward(g, store, h, bind)?;
        g.add(x, h)
    }
}

/// Fully connected layer, weight stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl LinearLayer {
    pub fn new<F: Real>(store: &mut ParamStore<F>, prefix: &str, in_features: usize, out_features: usize) -> Result<Self> {
        Ok(Self {
            weight: store.zeros(&format!("{prefix}.weight"), &[in_features, out_features])?,
            bias: store.zeros(&format!("{prefix}.bias"), &[out_features])?,
            in_features,
            out_features,
        })
    }

    pub fn init<F: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        let bound = 1.0 / libm::sqrt(self.in_features as f64);
        uniform_fill(store, self.weight, bound, rng);
        uniform_fill(store, self.bias, bound, rng);
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var, bind: Binding) -> Result<Var> {
        let w = g.bind(store, self.weight, bind.trainable);
        let b = g.bind(store, self.bias, bind.trainable);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}
