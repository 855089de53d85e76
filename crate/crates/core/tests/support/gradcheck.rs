//! Central finite-difference gradient checks at f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wuwse_core::tensor::{Graph, Var};

pub const TRIALS: usize = 20;
const STEP: f64 = 1e-5;
pub const MAX_REL: f64 = 1e-4;
/// Gradients below this magnitude are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-4;

pub type Case = (Vec<Input>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>);

pub struct Input {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn input(shape: &[usize], data: Vec<f64>) -> Input {
    Input {
        shape: shape.to_vec(),
        data,
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values at least `gap` away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(gap..1.0);
            if rng.gen() {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Distinct values spaced at least `1/n` apart, shuffled, so max-pooling has no near ties.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

/// `Σ r ⊙ op(inputs)` as a scalar, with fixed random `r`.
fn weighted_loss(
    build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var,
    inputs: &[Input],
    r: &mut Option<Vec<f64>>,
    rng: &mut ChaCha8Rng,
    data: &[Vec<f64>],
    requires_grad: bool,
) -> (Graph<f64>, Var, Vec<Var>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .zip(data)
        .map(|(i, d)| g.leaf(&i.shape, d.clone(), requires_grad).unwrap())
        .collect();
    let y = build(&mut g, &vars);
    let n = g.value(y).len();
    let weights = r.get_or_insert_with(|| uniform(rng, n, -1.0, 1.0)).clone();
    let flat = g.reshape(y, &[1, n]).unwrap();
    let w = g.constant(&[n, 1], weights).unwrap();
    let dot = g.matmul(flat, w).unwrap();
    let loss = g.sum(dot).unwrap();
    (g, loss, vars)
}

/// Worst relative error between analytic and numeric gradients over all inputs.
fn check(build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var, inputs: &[Input], rng: &mut ChaCha8Rng) -> f64 {
    let base: Vec<Vec<f64>> = inputs.iter().map(|i| i.data.clone()).collect();
    let mut r = None;
    let (mut g, loss, vars) = weighted_loss(build, inputs, &mut r, rng, &base, true);
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.value(v).len()]))
        .collect();
    let mut worst = 0.0f64;
    for (i, inp) in inputs.iter().enumerate() {
        for j in 0..inp.data.len() {
            let eval = |delta: f64, r: &mut Option<Vec<f64>>, rng: &mut ChaCha8Rng| {
                let mut d = base.clone();
                d[i][j] += delta;
                let (g, loss, _) = weighted_loss(build, inputs, r, rng, &d, false);
                g.scalar(loss)
            };
            let numeric = (eval(STEP, &mut r, rng) - eval(-STEP, &mut r, rng)) / (2.0 * STEP);
            let a = analytic[i][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Worst relative error of `op` over `TRIALS` random shapes.
pub fn max_error(name: &str) -> f64 {
    let case = CASES.iter().find(|(n, _)| *n == name).expect("unknown op").1;
    let mut rng = ChaCha8Rng::seed_from_u64(name.bytes().map(u64::from).sum());
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (inputs, build) = case(&mut rng);
        worst = worst.max(check(build.as_ref(), &inputs, &mut rng));
    }
    worst
}

fn dims(rng: &mut ChaCha8Rng, rank: usize, max: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.gen_range(1..=max)).collect()
}

fn numel(s: &[usize]) -> usize {
    s.iter().product()
}

pub const CASES: &[(&str, fn(&mut ChaCha8Rng) -> Case)] = &[
    ("add", add),
    ("mul_scalar", mul_scalar),
    ("add_bias", add_bias),
    ("relu", relu),
    ("sigmoid", sigmoid),
    ("square", square),
    ("log_eps", log_eps),
    ("matmul", matmul),
    ("reshape", reshape_and_flatten),
    ("concat", concat_channels),
    ("conv1d", conv1d),
    ("conv_transpose1d", conv_transpose1d),
    ("conv2d", conv2d),
    ("instance_norm", instance_norm),
    ("max_pool1d", max_pool1d),
    ("max_pool2d", max_pool2d),
    ("frames", frames),
    ("sum_mean", sum_and_mean),
    ("l1_loss", l1_loss),
    ("bce_loss", bce_loss),
];

fn add(rng: &mut ChaCha8Rng) -> Case {
    let rank = rng.gen_range(1..4);
    let s = dims(rng, rank, 5);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -1.0, 1.0)), input(&s, uniform(rng, n, -1.0, 1.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.add(v[0], v[1]).unwrap()),
    )
}

fn mul_scalar(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 2, 6);
    let c: f64 = rng.gen_range(-3.0..3.0);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -1.0, 1.0))],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| g.mul_scalar(v[0], c).unwrap()),
    )
}

fn add_bias(rng: &mut ChaCha8Rng) -> Case {
    let rank = rng.gen_range(2..5);
    let s = dims(rng, rank, 4);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -1.0, 1.0)), input(&[s[1]], uniform(rng, s[1], -1.0, 1.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.add_bias(v[0], v[1]).unwrap()),
    )
}

fn relu(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 3, 5);
    let n = numel(&s);
    (
        vec![input(&s, away_from_zero(rng, n, 1e-2))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.relu(v[0]).unwrap()),
    )
}

fn sigmoid(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 2, 7);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -6.0, 6.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.sigmoid(v[0]).unwrap()),
    )
}

fn square(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 2, 7);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -2.0, 2.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.square(v[0]).unwrap()),
    )
}

fn log_eps(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 2, 7);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, 0.05, 3.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.log_eps(v[0], 1e-10).unwrap()),
    )
}

fn matmul(rng: &mut ChaCha8Rng) -> Case {
    let (m, k, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
    (
        vec![input(&[m, k], uniform(rng, m * k, -1.0, 1.0)), input(&[k, n], uniform(rng, k * n, -1.0, 1.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.matmul(v[0], v[1]).unwrap()),
    )
}

fn reshape_and_flatten(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 3, 4);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -1.0, 1.0))],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
            let f = g.flatten(v[0]).unwrap();
            let sq = g.square(f).unwrap();
            g.reshape(sq, &[n]).unwrap()
        }),
    )
}

fn concat_channels(rng: &mut ChaCha8Rng) -> Case {
    let (b, t) = (rng.gen_range(1..3), rng.gen_range(1..5));
    let (ca, cb) = (rng.gen_range(1..4), rng.gen_range(1..4));
    (
        vec![
            input(&[b, ca, t], uniform(rng, b * ca * t, -1.0, 1.0)),
            input(&[b, cb, t], uniform(rng, b * cb * t, -1.0, 1.0)),
        ],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| {
            let c = g.concat_channels(v[0], v[1]).unwrap();
            g.square(c).unwrap()
        }),
    )
}

fn conv1d(rng: &mut ChaCha8Rng) -> Case {
    let (b, cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
    let k = rng.gen_range(1..5);
    let stride = rng.gen_range(1..3);
    let padding = rng.gen_range(0..k.min(3));
    let t = rng.gen_range(k..k + 8);
    (
        vec![
            input(&[b, cin, t], uniform(rng, b * cin * t, -1.0, 1.0)),
            input(&[cout, cin, k], uniform(rng, cout * cin * k, -1.0, 1.0)),
            input(&[cout], uniform(rng, cout, -1.0, 1.0)),
        ],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| g.conv1d(v[0], v[1], Some(v[2]), stride, padding).unwrap()),
    )
}

fn conv_transpose1d(rng: &mut ChaCha8Rng) -> Case {
    let (b, cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
    let k = rng.gen_range(2..5);
    let stride = rng.gen_range(1..3);
    let padding = rng.gen_range(0..k / 2 + 1);
    let t = rng.gen_range(2..7);
    (
        vec![
            input(&[b, cin, t], uniform(rng, b * cin * t, -1.0, 1.0)),
            input(&[cin, cout, k], uniform(rng, cin * cout * k, -1.0, 1.0)),
            input(&[cout], uniform(rng, cout, -1.0, 1.0)),
        ],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
            g.conv_transpose1d(v[0], v[1], Some(v[2]), stride, padding).unwrap()
        }),
    )
}

fn conv2d(rng: &mut ChaCha8Rng) -> Case {
    let (b, cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(1..3));
    let (kh, kw) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let (h, w) = (rng.gen_range(kh..kh + 4), rng.gen_range(kw..kw + 4));
    (
        vec![
            input(&[b, cin, h, w], uniform(rng, b * cin * h * w, -1.0, 1.0)),
            input(&[cout, cin, kh, kw], uniform(rng, cout * cin * kh * kw, -1.0, 1.0)),
            input(&[cout], uniform(rng, cout, -1.0, 1.0)),
        ],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.conv2d(v[0], v[1], Some(v[2])).unwrap()),
    )
}

fn instance_norm(rng: &mut ChaCha8Rng) -> Case {
    let (b, c, t) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(2..8));
    (
        vec![
            input(&[b, c, t], uniform(rng, b * c * t, -1.0, 1.0)),
            input(&[c], uniform(rng, c, 0.5, 1.5)),
            input(&[c], uniform(rng, c, -1.0, 1.0)),
        ],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.instance_norm(v[0], v[1], v[2], 1e-5).unwrap()),
    )
}

fn max_pool1d(rng: &mut ChaCha8Rng) -> Case {
    let k = rng.gen_range(1..4);
    let (b, c, t) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(k..k + 7));
    (
        vec![input(&[b, c, t], distinct(rng, b * c * t))],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| g.max_pool1d(v[0], k).unwrap()),
    )
}

fn max_pool2d(rng: &mut ChaCha8Rng) -> Case {
    let k = rng.gen_range(1..3);
    let (b, c) = (rng.gen_range(1..3), rng.gen_range(1..3));
    let (h, w) = (rng.gen_range(k..k + 4), rng.gen_range(k..k + 4));
    (
        vec![input(&[b, c, h, w], distinct(rng, b * c * h * w))],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| g.max_pool2d(v[0], k).unwrap()),
    )
}

fn frames(rng: &mut ChaCha8Rng) -> Case {
    let win = rng.gen_range(1..5);
    let hop = rng.gen_range(1..4);
    let (b, t) = (rng.gen_range(1..3), rng.gen_range(win..win + 9));
    (
        vec![input(&[b, 1, t], uniform(rng, b * t, -1.0, 1.0))],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
            let f = g.frames(v[0], win, hop).unwrap();
            g.square(f).unwrap()
        }),
    )
}

fn sum_and_mean(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 2, 6);
    let n = numel(&s);
    (
        vec![input(&s, uniform(rng, n, -1.0, 1.0))],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| {
            let sq = g.square(v[0]).unwrap();
            let a = g.sum(sq).unwrap();
            let b = g.mean(v[0]).unwrap();
            g.add(a, b).unwrap()
        }),
    )
}

fn l1_loss(rng: &mut ChaCha8Rng) -> Case {
    let s = dims(rng, 2, 6);
    let n = numel(&s);
    let a = uniform(rng, n, -1.0, 1.0);
    let diff = away_from_zero(rng, n, 1e-2);
    let b = a.iter().zip(&diff).map(|(x, d)| x + d).collect();
    (
        vec![input(&s, a), input(&s, b)],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| g.l1_loss(v[0], v[1]).unwrap()),
    )
}

fn bce_loss(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.gen_range(1..10);
    let targets: Vec<f64> = (0..n).map(|_| if rng.gen() { 1.0 } else { 0.0 }).collect();
    (
        vec![input(&[n], uniform(rng, n, 0.05, 0.95))],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| g.bce_loss(v[0], &targets).unwrap()),
    )
}

