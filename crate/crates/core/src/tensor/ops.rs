//! Forward constructors and their reverse-mode rules.

use super::graph::{Graph, Op, Var};
use super::kernels::{col2im_1d, col2im_2d, gemm, im2col_1d, im2col_2d};
use super::{numel, Real, Result, TensorError};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Probabilities are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the BCE loss.
pub const BCE_CLAMP: f64 = 1e-7;

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

fn conv_transpose_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    ((len - 1) * stride + kernel).checked_sub(2 * padding).filter(|&n| n > 0)
}

impl<F: Real> Graph<F> {
    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Result<Var> {
        let n = self.node(x);
        let shape = n.shape.clone();
        let value = n.value.iter().map(|&v| f(v)).collect();
        self.push(name, shape, value, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape != nb.shape {
            return Err(shape_err("add", &na.shape, &nb.shape));
        }
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| x + y).collect();
        let shape = na.shape.clone();
        self.push("add", shape, value, Op::Add(a, b), &[a, b])
    }

    pub fn mul_scalar(&mut self, x: Var, s: F) -> Result<Var> {
        self.unary("mul_scalar", x, |v| v * s, Op::MulScalar(x, s))
    }

    /// Adds `bias[c]` along axis 1 of `x` (`[B, C, ...]`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (nx, nb) = (self.node(x), self.node(bias));
        if nx.shape.len() < 2 || nb.shape != [nx.shape[1]] {
            return Err(shape_err("add_bias", &nx.shape, &nb.shape));
        }
        let c = nx.shape[1];
        let inner = numel(&nx.shape[2..]);
        let mut value = nx.value.clone();
        for (row, chunk) in value.chunks_mut(inner).enumerate() {
            let b = nb.value[row % c];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let shape = nx.shape.clone();
        self.push("add_bias", shape, value, Op::AddBias { x, bias }, &[x, bias])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| if v > F::zero() { v } else { F::zero() }, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(
            "sigmoid",
            x,
            |v| {
                if v >= F::zero() {
                    F::one() / (F::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (F::one() + e)
                }
            },
            Op::Sigmoid(x),
        )
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, |v| v * v, Op::Square(x))
    }

    /// `ln(x + eps)`.
    pub fn log_eps(&mut self, x: Var, eps: F) -> Result<Var> {
        if self.node(x).value.iter().any(|&v| v + eps <= F::zero()) {
            return Err(TensorError::Degenerate {
                op: "log_eps",
                reason: "argument is not positive".into(),
            });
        }
        self.unary("log_eps", x, |v| (v + eps).ln(), Op::LogEps(x, eps))
    }

    /// `[m, k] × [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
            return Err(shape_err("matmul", &na.shape, &nb.shape));
        }
        let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
        let mut value = vec![F::zero(); m * n];
        gemm(m, k, n, F::one(), &na.value, false, &nb.value, false, F::zero(), &mut value);
        self.push("matmul", vec![m, n], value, Op::Matmul(a, b), &[a, b])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.node(x);
        if numel(&n.shape) != numel(shape) {
            return Err(shape_err("reshape", &n.shape, shape));
        }
        let value = n.value.clone();
        self.push("reshape", shape.to_vec(), value, Op::Reshape(x), &[x])
    }

    /// Collapses everything after the batch axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        let b = shape[0];
        let rest = numel(&shape[1..]);
        self.reshape(x, &[b, rest])
    }

    /// Concatenation along axis 1 of `[B, Ca, ...]` and `[B, Cb, ...]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape.len() < 2
            || na.shape.len() != nb.shape.len()
            || na.shape[0] != nb.shape[0]
            || na.shape[2..] != nb.shape[2..]
        {
            return Err(shape_err("concat", &na.shape, &nb.shape));
        }
        let batch = na.shape[0];
        let (sa, sb) = (numel(&na.shape[1..]), numel(&nb.shape[1..]));
        let mut value = Vec::with_capacity(batch * (sa + sb));
        for i in 0..batch {
            value.extend_from_slice(&na.value[i * sa..(i + 1) * sa]);
            value.extend_from_slice(&nb.value[i * sb..(i + 1) * sb]);
        }
        let mut shape = na.shape.clone();
        shape[1] += nb.shape[1];
        self.push("concat", shape, value, Op::Concat { a, b }, &[a, b])
    }

    /// `x: [B, C_in, T]`, `w: [C_out, C_in, K]` → `[B, C_out, floor((T + 2P - K)/S) + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (nx, nw) = (self.node(x), self.node(w));
        let bad = || shape_err("conv1d", &nx.shape, &nw.shape);
        if nx.shape.len() != 3 || nw.shape.len() != 3 || nx.shape[1] != nw.shape[1] {
            return Err(bad());
        }
        let (batch, cin, len) = (nx.shape[0], nx.shape[1], nx.shape[2]);
        let (cout, k) = (nw.shape[0], nw.shape[2]);
        let out_len = conv_out_len(len, k, stride, padding).ok_or_else(bad)?;
        let mut value = vec![F::zero(); batch * cout * out_len];
        let mut cols = vec![F::zero(); cin * k * out_len];
        for b in 0..batch {
            im2col_1d(&nx.value[b * cin * len..], cin, len, k, stride, padding, out_len, &mut cols);
            let out = &mut value[b * cout * out_len..(b + 1) * cout * out_len];
            gemm(cout, cin * k, out_len, F::one(), &nw.value, false, &cols, false, F::zero(), out);
        }
        let y = self.push(
            "conv1d",
            vec![batch, cout, out_len],
            value,
            Op::Conv1d { x, w, stride, padding },
            &[x, w],
        )?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// `x: [B, C_in, T]`, `w: [C_in, C_out, K]` → `[B, C_out, (T-1)S - 2P + K]`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (nx, nw) = (self.node(x), self.node(w));
        let bad = || shape_err("conv_transpose1d", &nx.shape, &nw.shape);
        if nx.shape.len() != 3 || nw.shape.len() != 3 || nx.shape[1] != nw.shape[0] || nx.shape[2] == 0 {
            return Err(bad());
        }
        let (batch, cin, len) = (nx.shape[0], nx.shape[1], nx.shape[2]);
        let (cout, k) = (nw.shape[1], nw.shape[2]);
        if stride == 0 {
            return Err(bad());
        }
        let out_len = conv_transpose_out_len(len, k, stride, padding).ok_or_else(bad)?;
        let mut value = vec![F::zero(); batch * cout * out_len];
        let mut cols = vec![F::zero(); cout * k * len];
        for b in 0..batch {
            let xb = &nx.value[b * cin * len..(b + 1) * cin * len];
            gemm(cout * k, cin, len, F::one(), &nw.value, true, xb, false, F::zero(), &mut cols);
            let out = &mut value[b * cout * out_len..(b + 1) * cout * out_len];
            col2im_1d(&cols, cout, out_len, k, stride, padding, len, out);
        }
        let y = self.push(
            "conv_transpose1d",
            vec![batch, cout, out_len],
            value,
            Op::ConvTranspose1d { x, w, stride, padding },
            &[x, w],
        )?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Valid stride-1 convolution: `x: [B, C_in, H, W]`, `w: [C_out, C_in, Kh, Kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (nx, nw) = (self.node(x), self.node(w));
        let bad = || shape_err("conv2d", &nx.shape, &nw.shape);
        if nx.shape.len() != 4 || nw.shape.len() != 4 || nx.shape[1] != nw.shape[1] {
            return Err(bad());
        }
        let (batch, cin, h, wd) = (nx.shape[0], nx.shape[1], nx.shape[2], nx.shape[3]);
        let (cout, kh, kw) = (nw.shape[0], nw.shape[2], nw.shape[3]);
        if h < kh || wd < kw {
            return Err(bad());
        }
        let (ho, wo) = (h - kh + 1, wd - kw + 1);
        let mut value = vec![F::zero(); batch * cout * ho * wo];
        let mut cols = vec![F::zero(); cin * kh * kw * ho * wo];
        for b in 0..batch {
            im2col_2d(&nx.value[b * cin * h * wd..], cin, h, wd, kh, kw, &mut cols);
            let out = &mut value[b * cout * ho * wo..(b + 1) * cout * ho * wo];
            gemm(cout, cin * kh * kw, ho * wo, F::one(), &nw.value, false, &cols, false, F::zero(), out);
        }
        let y = self.push("conv2d", vec![batch, cout, ho, wo], value, Op::Conv2d { x, w }, &[x, w])?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Per-(sample, channel) normalization over the trailing axes, then a
    /// per-channel affine `gain * x̂ + bias`.
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let (nx, ng, nb) = (self.node(x), self.node(gain), self.node(bias));
        if nx.shape.len() < 3 || ng.shape != [nx.shape[1]] || nb.shape != ng.shape {
            return Err(shape_err("instance_norm", &nx.shape, &ng.shape));
        }
        let c = nx.shape[1];
        let inner = numel(&nx.shape[2..]);
        if inner < 2 {
            return Err(TensorError::Degenerate {
                op: "instance_norm",
                reason: format!("needs at least 2 positions per channel, got {inner}"),
            });
        }
        let rows = nx.value.len() / inner;
        let n = F::from_f64(inner as f64);
        let mut mean = Vec::with_capacity(rows);
        let mut inv_std = Vec::with_capacity(rows);
        let mut value = Vec::with_capacity(nx.value.len());
        for (row, chunk) in nx.value.chunks(inner).enumerate() {
            let mu = chunk.iter().copied().sum::<F>() / n;
            let var = chunk.iter().map(|&v| (v - mu) * (v - mu)).sum::<F>() / n;
            let is = F::one() / (var + eps).sqrt();
            let (g, b) = (ng.value[row % c], nb.value[row % c]);
            value.extend(chunk.iter().map(|&v| g * (v - mu) * is + b));
            mean.push(mu);
            inv_std.push(is);
        }
        let shape = nx.shape.clone();
        self.push(
            "instance_norm",
            shape,
            value,
            Op::InstanceNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    fn max_pool(&mut self, name: &'static str, x: Var, out_shape: Vec<usize>, windows: Vec<Vec<usize>>) -> Result<Var> {
        let nx = self.node(x);
        let mut value = Vec::with_capacity(windows.len());
        let mut argmax = Vec::with_capacity(windows.len());
        for w in &windows {
            let best = w
                .iter()
                .copied()
                .reduce(|a, b| if nx.value[b] > nx.value[a] { b } else { a })
                .expect("pool window is non-empty");
            value.push(nx.value[best]);
            argmax.push(best);
        }
        self.push(name, out_shape, value, Op::MaxPool { x, argmax }, &[x])
    }

    /// Non-overlapping max pooling over the last axis of `[B, C, T]`; a ragged tail is dropped.
    pub fn max_pool1d(&mut self, x: Var, k: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || k == 0 || shape[2] < k {
            return Err(shape_err("max_pool1d", &shape, &[k]));
        }
        let (rows, len) = (shape[0] * shape[1], shape[2]);
        let out = len / k;
        let windows = (0..rows)
            .flat_map(|r| (0..out).map(move |t| (0..k).map(|j| r * len + t * k + j).collect()))
            .collect();
        self.max_pool("max_pool1d", x, vec![shape[0], shape[1], out], windows)
    }

    /// Non-overlapping `k × k` max pooling of `[B, C, H, W]`.
    pub fn max_pool2d(&mut self, x: Var, k: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 || k == 0 || shape[2] < k || shape[3] < k {
            return Err(shape_err("max_pool2d", &shape, &[k, k]));
        }
        let (rows, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
        let (ho, wo) = (h / k, w / k);
        let mut windows = Vec::with_capacity(rows * ho * wo);
        for r in 0..rows {
            for y in 0..ho {
                for xo in 0..wo {
                    let mut win = Vec::with_capacity(k * k);
                    for i in 0..k {
                        for j in 0..k {
                            win.push(r * h * w + (y * k + i) * w + xo * k + j);
                        }
                    }
                    windows.push(win);
                }
            }
        }
        self.max_pool("max_pool2d", x, vec![shape[0], shape[1], ho, wo], windows)
    }

    /// Slices `[B, 1, T]` (or `[B, T]`) into overlapping frames `[B * F, win]`
    /// starting at sample 0, `F = floor((T - win) / hop) + 1`.
    pub fn frames(&mut self, x: Var, win: usize, hop: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let ok_rank = shape.len() == 2 || (shape.len() == 3 && shape[1] == 1);
        let len = *shape.last().unwrap_or(&0);
        if !ok_rank || hop == 0 || win == 0 || len < win {
            return Err(shape_err("frames", &shape, &[win, hop]));
        }
        let batch = shape[0];
        let n_frames = (len - win) / hop + 1;
        let src = &self.node(x).value;
        let mut value = Vec::with_capacity(batch * n_frames * win);
        for b in 0..batch {
            for f in 0..n_frames {
                let start = b * len + f * hop;
                value.extend_from_slice(&src[start..start + win]);
            }
        }
        self.push("frames", vec![batch * n_frames, win], value, Op::Frames { x, win, hop }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x).value.iter().copied().sum();
        self.push("sum", vec![1], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x);
        let s = n.value.iter().copied().sum::<F>() / F::from_f64(n.value.len() as f64);
        self.push("mean", vec![1], vec![s], Op::Mean(x), &[x])
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape != nb.shape {
            return Err(shape_err("l1_loss", &na.shape, &nb.shape));
        }
        let s: F = na.value.iter().zip(&nb.value).map(|(&x, &y)| (x - y).abs()).sum();
        let v = s / F::from_f64(na.value.len() as f64);
        self.push("l1_loss", vec![1], vec![v], Op::L1(a, b), &[a, b])
    }

    /// Mean binary cross-entropy of probabilities `p` against `{0, 1}` targets.
    pub fn bce_loss(&mut self, p: Var, targets: &[F]) -> Result<Var> {
        let np = self.node(p);
        if np.value.len() != targets.len() {
            return Err(shape_err("bce_loss", &np.shape, &[targets.len()]));
        }
        if let Some(&t) = targets.iter().find(|&&t| t != F::zero() && t != F::one()) {
            return Err(TensorError::Label(t.as_f64()));
        }
        let lo = F::from_f64(BCE_CLAMP);
        let hi = F::one() - lo;
        let s: F = np
            .value
            .iter()
            .zip(targets)
            .map(|(&pv, &t)| {
                let pc = pv.max(lo).min(hi);
                -(t * pc.ln() + (F::one() - t) * (F::one() - pc).ln())
            })
            .sum();
        let v = s / F::from_f64(targets.len() as f64);
        self.push(
            "bce_loss",
            vec![1],
            vec![v],
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            &[p],
        )
    }

    /// Propagates `g`, the gradient of node `i`, into its parents' slots.
    pub(crate) fn backward_op(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(s) = self.slot(grads, v) {
                        s.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            Op::MulScalar(x, k) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv * *k);
                }
            }
            Op::AddBias { x, bias } => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                }
                let c = node.shape[1];
                let inner = numel(&node.shape[2..]);
                if let Some(s) = self.slot(grads, *bias) {
                    for (row, chunk) in g.chunks(inner).enumerate() {
                        s[row % c] += chunk.iter().copied().sum::<F>();
                    }
                }
            }
            Op::Relu(x) => {
                let xv = &self.node(*x).value;
                if let Some(s) = self.slot(grads, *x) {
                    for ((d, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        if v > F::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    for ((d, &gv), &y) in s.iter_mut().zip(g).zip(&node.value) {
                        *d += gv * y * (F::one() - y);
                    }
                }
            }
            Op::Square(x) => {
                let xv = &self.node(*x).value;
                if let Some(s) = self.slot(grads, *x) {
                    let two = F::from_f64(2.0);
                    for ((d, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        *d += two * v * gv;
                    }
                }
            }
            Op::LogEps(x, eps) => {
                let xv = &self.node(*x).value;
                if let Some(s) = self.slot(grads, *x) {
                    for ((d, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        *d += gv / (v + *eps);
                    }
                }
            }
            Op::Matmul(a, b) => {
                let (na, nb) = (self.node(*a), self.node(*b));
                let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
                if let Some(s) = self.slot(grads, *a) {
                    gemm(m, n, k, F::one(), g, false, &nb.value, true, F::one(), s);
                }
                if let Some(s) = self.slot(grads, *b) {
                    gemm(k, m, n, F::one(), &na.value, true, g, false, F::one(), s);
                }
            }
            Op::Reshape(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                }
            }
            Op::Concat { a, b } => {
                let batch = node.shape[0];
                let sa = numel(&self.node(*a).shape[1..]);
                let sb = numel(&self.node(*b).shape[1..]);
                if let Some(s) = self.slot(grads, *a) {
                    for i in 0..batch {
                        let src = &g[i * (sa + sb)..i * (sa + sb) + sa];
                        s[i * sa..(i + 1) * sa].iter_mut().zip(src).for_each(|(d, &gv)| *d += gv);
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for i in 0..batch {
                        let src = &g[i * (sa + sb) + sa..(i + 1) * (sa + sb)];
                        s[i * sb..(i + 1) * sb].iter_mut().zip(src).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            Op::Conv1d { x, w, stride, padding } => {
                let (nx, nw) = (self.node(*x), self.node(*w));
                let (batch, cin, len) = (nx.shape[0], nx.shape[1], nx.shape[2]);
                let (cout, k) = (nw.shape[0], nw.shape[2]);
                let out_len = node.shape[2];
                let mut cols = vec![F::zero(); cin * k * out_len];
                if let Some(sw) = self.slot(grads, *w) {
                    for b in 0..batch {
                        im2col_1d(&nx.value[b * cin * len..], cin, len, k, *stride, *padding, out_len, &mut cols);
                        let gb = &g[b * cout * out_len..(b + 1) * cout * out_len];
                        gemm(cout, out_len, cin * k, F::one(), gb, false, &cols, true, F::one(), sw);
                    }
                }
                if let Some(sx) = self.slot(grads, *x) {
                    for b in 0..batch {
                        let gb = &g[b * cout * out_len..(b + 1) * cout * out_len];
                        gemm(cin * k, cout, out_len, F::one(), &nw.value, true, gb, false, F::zero(), &mut cols);
                        let dst = &mut sx[b * cin * len..(b + 1) * cin * len];
                        col2im_1d(&cols, cin, len, k, *stride, *padding, out_len, dst);
                    }
                }
            }
            Op::ConvTranspose1d { x, w, stride, padding } => {
                let (nx, nw) = (self.node(*x), self.node(*w));
                let (batch, cin, len) = (nx.shape[0], nx.shape[1], nx.shape[2]);
                let (cout, k) = (nw.shape[1], nw.shape[2]);
                let out_len = node.shape[2];
                let mut cols = vec![F::zero(); cout * k * len];
                let need_w = nw.requires_grad;
                let need_x = nx.requires_grad;
                for b in 0..batch {
                    let gb = &g[b * cout * out_len..(b + 1) * cout * out_len];
                    im2col_1d(gb, cout, out_len, k, *stride, *padding, len, &mut cols);
                    if need_w {
                        let sw = self.slot(grads, *w).expect("requires grad");
                        let xb = &nx.value[b * cin * len..(b + 1) * cin * len];
                        gemm(cin, len, cout * k, F::one(), xb, false, &cols, true, F::one(), sw);
                    }
                    if need_x {
                        let sx = self.slot(grads, *x).expect("requires grad");
                        let dst = &mut sx[b * cin * len..(b + 1) * cin * len];
                        gemm(cin, cout * k, len, F::one(), &nw.value, false, &cols, false, F::one(), dst);
                    }
                }
            }
            Op::Conv2d { x, w } => {
                let (nx, nw) = (self.node(*x), self.node(*w));
                let (batch, cin, h, wd) = (nx.shape[0], nx.shape[1], nx.shape[2], nx.shape[3]);
                let (cout, kh, kw) = (nw.shape[0], nw.shape[2], nw.shape[3]);
                let (ho, wo) = (node.shape[2], node.shape[3]);
                let patch = cin * kh * kw;
                let mut cols = vec![F::zero(); patch * ho * wo];
                if let Some(sw) = self.slot(grads, *w) {
                    for b in 0..batch {
                        im2col_2d(&nx.value[b * cin * h * wd..], cin, h, wd, kh, kw, &mut cols);
                        let gb = &g[b * cout * ho * wo..(b + 1) * cout * ho * wo];
                        gemm(cout, ho * wo, patch, F::one(), gb, false, &cols, true, F::one(), sw);
                    }
                }
                if let Some(sx) = self.slot(grads, *x) {
                    for b in 0..batch {
                        let gb = &g[b * cout * ho * wo..(b + 1) * cout * ho * wo];
                        gemm(patch, cout, ho * wo, F::one(), &nw.value, true, gb, false, F::zero(), &mut cols);
                        let dst = &mut sx[b * cin * h * wd..(b + 1) * cin * h * wd];
                        col2im_2d(&cols, cin, h, wd, kh, kw, dst);
                    }
                }
            }
            Op::InstanceNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            } => {
                let nx = self.node(*x);
                let gv = &self.node(*gain).value;
                let c = nx.shape[1];
                let inner = numel(&nx.shape[2..]);
                let n = F::from_f64(inner as f64);
                let rows = nx.value.len() / inner;
                let mut dgain = vec![F::zero(); c];
                let mut dbias = vec![F::zero(); c];
                let mut dx = if nx.requires_grad {
                    Some(vec![F::zero(); nx.value.len()])
                } else {
                    None
                };
                for row in 0..rows {
                    let xs = &nx.value[row * inner..(row + 1) * inner];
                    let gs = &g[row * inner..(row + 1) * inner];
                    let (mu, is) = (mean[row], inv_std[row]);
                    let ch = row % c;
                    let mut sum_g = F::zero();
                    let mut sum_gx = F::zero();
                    for (&xv, &gvv) in xs.iter().zip(gs) {
                        let xhat = (xv - mu) * is;
                        sum_g += gvv;
                        sum_gx += gvv * xhat;
                    }
                    dgain[ch] += sum_gx;
                    dbias[ch] += sum_g;
                    if let Some(dx) = dx.as_mut() {
                        let gamma = gv[ch];
                        let d = &mut dx[row * inner..(row + 1) * inner];
                        for ((dv, &xv), &gvv) in d.iter_mut().zip(xs).zip(gs) {
                            let xhat = (xv - mu) * is;
                            *dv = gamma * is / n * (n * gvv - sum_g - xhat * sum_gx);
                        }
                    }
                }
                if let (Some(dx), Some(s)) = (dx, self.slot(grads, *x)) {
                    s.iter_mut().zip(&dx).for_each(|(d, &v)| *d += v);
                }
                if let Some(s) = self.slot(grads, *gain) {
                    s.iter_mut().zip(&dgain).for_each(|(d, &v)| *d += v);
                }
                if let Some(s) = self.slot(grads, *bias) {
                    s.iter_mut().zip(&dbias).for_each(|(d, &v)| *d += v);
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(s) = self.slot(grads, *x) {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        s[src] += gv;
                    }
                }
            }
            Op::Frames { x, win, hop } => {
                let len = *self.node(*x).shape.last().expect("rank checked");
                let n_frames = (len - win) / hop + 1;
                if let Some(s) = self.slot(grads, *x) {
                    for (row, chunk) in g.chunks(*win).enumerate() {
                        let (b, f) = (row / n_frames, row % n_frames);
                        let start = b * len + f * hop;
                        s[start..start + win].iter_mut().zip(chunk).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    let k = g[0] / F::from_f64(s.len() as f64);
                    s.iter_mut().for_each(|d| *d += k);
                }
            }
            Op::L1(a, b) => {
                let (va, vb) = (&self.node(*a).value, &self.node(*b).value);
                let k = g[0] / F::from_f64(va.len() as f64);
                let sign = |d: F| {
                    if d > F::zero() {
                        k
                    } else if d < F::zero() {
                        -k
                    } else {
                        F::zero()
                    }
                };
                if let Some(s) = self.slot(grads, *a) {
                    for (i, d) in s.iter_mut().enumerate() {
                        *d += sign(va[i] - vb[i]);
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for (i, d) in s.iter_mut().enumerate() {
                        *d -= sign(va[i] - vb[i]);
                    }
                }
            }
            Op::Bce { p, targets } => {
                let pv = &self.node(*p).value;
                let lo = F::from_f64(BCE_CLAMP);
                let hi = F::one() - lo;
                let k = g[0] / F::from_f64(targets.len() as f64);
                if let Some(s) = self.slot(grads, *p) {
                    for ((d, &pr), &t) in s.iter_mut().zip(pv).zip(targets) {
                        // Gradient evaluated at the clamped probability and passed straight through.
                        let pc = pr.max(lo).min(hi);
                        *d += k * (-t / pc + (F::one() - t) / (F::one() - pc));
                    }
                }
            }
        }
    }
}
