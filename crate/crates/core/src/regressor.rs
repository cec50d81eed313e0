//! A small convolutional regressor trained from scratch.
//!
//! Architecture, for an input of `C × H × W` (channel-major):
//!
//! | stage  | op                                   | activation |
//! |--------|--------------------------------------|------------|
//! | conv 1 | 3×3, stride 2, pad 1, `C → c1`       | tanh       |
//! | conv 2 | 3×3, stride 2, pad 1, `c1 → c2`      | tanh       |
//! | dense 1| `c2·H/4·W/4 → hidden`                | tanh       |
//! | dense 2| `hidden → output_dim`                | none       |
//!
//! Parameters live in one flat `f64` vector in the order conv 1 weights,
//! conv 1 bias, conv 2 weights, conv 2 bias, dense 1 weights, dense 1 bias,
//! dense 2 weights, dense 2 bias. Conv weights are `[out][in][ky][kx]`,
//! dense weights `[out][in]`.
//!
//! The loss is the mean squared error over batch and outputs. Targets are
//! standardized per output with training-set statistics, and predictions are
//! mapped back to physical units.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::camera::{DepthImage, RgbImage};
use crate::error::{Error, Result};
use crate::metrics::{self, MaeConvention, RegressionReport};
use crate::rng;

pub const DEFAULT_INPUT_SIZE: usize = 64;
pub const DEFAULT_CONV_CHANNELS: [usize; 2] = [8, 16];
pub const DEFAULT_DENSE_HIDDEN: usize = 64;
/// Depth is clipped to this many meters before scaling to `[0, 1]`.
pub const MAX_DEPTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channels {
    Rgb,
    Rgbd,
    Depth,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Rgb => 3,
            Channels::Rgbd => 4,
            Channels::Depth => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub channels: Channels,
    pub conv_channels: [usize; 2],
    pub dense_hidden: usize,
    pub n_points: usize,
    /// 2 for pixel labels, 3 for 3D labels.
    pub label_dim: usize,
}

impl ModelConfig {
    pub fn new(channels: Channels, n_points: usize, label_dim: usize) -> Self {
        ModelConfig {
            input_width: DEFAULT_INPUT_SIZE,
            input_height: DEFAULT_INPUT_SIZE,
            channels,
            conv_channels: DEFAULT_CONV_CHANNELS,
            dense_hidden: DEFAULT_DENSE_HIDDEN,
            n_points,
            label_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.input_height == 0 {
            return Err(Error::InvalidConfig("input size must be positive"));
        }
        if self.conv_channels.contains(&0) || self.dense_hidden == 0 || self.n_points == 0 {
            return Err(Error::InvalidConfig("layer sizes must be positive"));
        }
        if self.label_dim != 2 && self.label_dim != 3 {
            return Err(Error::InvalidConfig("label_dim must be 2 or 3"));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.channels.count() * self.input_width * self.input_height
    }

    pub fn output_dim(&self) -> usize {
        self.n_points * self.label_dim
    }

    fn shapes(&self) -> Shapes {
        let (h1, w1) = (conv_out(self.input_height), conv_out(self.input_width));
        let (h2, w2) = (conv_out(h1), conv_out(w1));
        let c0 = self.channels.count();
        let [c1, c2] = self.conv_channels;
        let flat = c2 * h2 * w2;
        let mut offset = 0;
        let mut take = |n: usize| {
            let o = offset;
            offset += n;
            o
        };
        let conv1_w = take(c1 * c0 * 9);
        let conv1_b = take(c1);
        let conv2_w = take(c2 * c1 * 9);
        let conv2_b = take(c2);
        let dense1_w = take(self.dense_hidden * flat);
        let dense1_b = take(self.dense_hidden);
        let dense2_w = take(self.output_dim() * self.dense_hidden);
        let dense2_b = take(self.output_dim());
        Shapes {
            c0,
            c1,
            c2,
            h0: self.input_height,
            w0: self.input_width,
            h1,
            w1,
            flat,
            hidden: self.dense_hidden,
            out: self.output_dim(),
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            dense1_w,
            dense1_b,
            dense2_w,
            dense2_b,
            total: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.shapes().total
    }
}

fn conv_out(n: usize) -> usize {
    n.div_ceil(2)
}

#[derive(Clone, Copy, Debug)]
struct Shapes {
    c0: usize,
    c1: usize,
    c2: usize,
    h0: usize,
    w0: usize,
    h1: usize,
    w1: usize,
    flat: usize,
    hidden: usize,
    out: usize,
    conv1_w: usize,
    conv1_b: usize,
    conv2_w: usize,
    conv2_b: usize,
    dense1_w: usize,
    dense1_b: usize,
    dense2_w: usize,
    dense2_b: usize,
    total: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<f64>,
}

struct Activations {
    a1: Vec<f64>,
    a2: Vec<f64>,
    h: Vec<f64>,
    y: Vec<f64>,
}

impl Model {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.param_count();
        Ok(Model { config, params: vec![0.0; n] })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(config: ModelConfig, rng_seed: u64) -> Result<Self> {
        let mut model = Model::zeros(config)?;
        let s = model.config.shapes();
        let mut r = rng::seeded(rng_seed);
        let layers = [
            (s.conv1_w, s.conv1_b, s.c0 * 9, s.c1 * 9),
            (s.conv2_w, s.conv2_b, s.c1 * 9, s.c2 * 9),
            (s.dense1_w, s.dense1_b, s.flat, s.hidden),
            (s.dense2_w, s.dense2_b, s.hidden, s.out),
        ];
        for (w, b, fan_in, fan_out) in layers {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in &mut model.params[w..b] {
                *p = r.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n = config.param_count();
        if params.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter"));
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        let n = self.config.input_len();
        if input.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.activations(input).y)
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let s = self.config.shapes();
        let p = &self.params;
        let mut a1 = conv_forward(x, s.c0, s.h0, s.w0, &p[s.conv1_w..s.conv1_b], &p[s.conv1_b..s.conv2_w], s.c1);
        a1.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let mut a2 = conv_forward(&a1, s.c1, s.h1, s.w1, &p[s.conv2_w..s.conv2_b], &p[s.conv2_b..s.dense1_w], s.c2);
        a2.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let mut h = dense_forward(&a2, &p[s.dense1_w..s.dense1_b], &p[s.dense1_b..s.dense2_w], s.hidden);
        h.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let y = dense_forward(&h, &p[s.dense2_w..s.dense2_b], &p[s.dense2_b..s.total], s.out);
        Activations { a1, a2, h, y }
    }

    /// Mean squared error over the batch and its exact gradient.
    pub fn loss_and_grad<I: AsRef<[f64]>, T: AsRef<[f64]>>(&self, inputs: &[I], targets: &[T]) -> Result<(f64, Vec<f64>)> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::ShapeMismatch { expected: inputs.len(), got: targets.len() });
        }
        let s = self.config.shapes();
        let p = &self.params;
        let scale = 1.0 / (inputs.len() * s.out) as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; s.total];
        for (x, t) in inputs.iter().zip(targets) {
            let (x, t) = (x.as_ref(), t.as_ref());
            self.check_input(x)?;
            if t.len() != s.out {
                return Err(Error::ShapeMismatch { expected: s.out, got: t.len() });
            }
            let act = self.activations(x);
            let mut gy = vec![0.0; s.out];
            for k in 0..s.out {
                let e = act.y[k] - t[k];
                loss += e * e * scale;
                gy[k] = 2.0 * e * scale;
            }

            let (g_lo, g_hi) = grad.split_at_mut(s.dense2_w);
            let mut gh = dense_backward(&act.h, &gy, &p[s.dense2_w..s.dense2_b], &mut g_hi[..s.total - s.dense2_w], true);
            for (g, h) in gh.iter_mut().zip(&act.h) {
                *g *= 1.0 - h * h;
            }
            let mut ga2 =
                dense_backward(&act.a2, &gh, &p[s.dense1_w..s.dense1_b], &mut g_lo[s.dense1_w..s.dense2_w], true);
            for (g, a) in ga2.iter_mut().zip(&act.a2) {
                *g *= 1.0 - a * a;
            }
            let mut ga1 = conv_backward(
                &act.a1,
                s.c1,
                s.h1,
                s.w1,
                &p[s.conv2_w..s.conv2_b],
                &ga2,
                s.c2,
                &mut g_lo[s.conv2_w..s.dense1_w],
                true,
            );
            for (g, a) in ga1.iter_mut().zip(&act.a1) {
                *g *= 1.0 - a * a;
            }
            conv_backward(x, s.c0, s.h0, s.w0, &p[s.conv1_w..s.conv1_b], &ga1, s.c1, &mut g_lo[..s.conv2_w], false);
        }
        Ok((loss, grad))
    }
}

/// Copies each channel into a zero border of one pixel.
fn pad(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let dst = (ch * ph + y + 1) * pw + 1;
            out[dst..dst + w].copy_from_slice(&x[(ch * h + y) * w..(ch * h + y + 1) * w]);
        }
    }
    out
}

/// 3×3, stride 2, zero padding 1.
fn conv_forward(x: &[f64], cin: usize, h: usize, w: usize, weights: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let (ph, pw) = (h + 2, w + 2);
    let xp = pad(x, cin, h, w);
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..cin {
            let src = &xp[c * ph * pw..(c + 1) * ph * pw];
            let k = &weights[(o * cin + c) * 9..(o * cin + c + 1) * 9];
            for oy in 0..oh {
                let rows = [&src[2 * oy * pw..], &src[(2 * oy + 1) * pw..], &src[(2 * oy + 2) * pw..]];
                for (ox, d) in plane[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                    let ix = 2 * ox;
                    let mut acc = 0.0;
                    for (ky, row) in rows.iter().enumerate() {
                        acc += k[3 * ky] * row[ix] + k[3 * ky + 1] * row[ix + 1] + k[3 * ky + 2] * row[ix + 2];
                    }
                    *d += acc;
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients into `grad` (weights then bias)
/// and returns the input gradient when asked for.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    g_out: &[f64],
    cout: usize,
    grad: &mut [f64],
    want_input_grad: bool,
) -> Vec<f64> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let (ph, pw) = (h + 2, w + 2);
    let xp = pad(x, cin, h, w);
    let n_w = cout * cin * 9;
    let mut gp = if want_input_grad { vec![0.0; cin * ph * pw] } else { Vec::new() };
    for o in 0..cout {
        let g_plane = &g_out[o * oh * ow..(o + 1) * oh * ow];
        grad[n_w + o] += g_plane.iter().sum::<f64>();
        for c in 0..cin {
            let src = &xp[c * ph * pw..(c + 1) * ph * pw];
            let base = (o * cin + c) * 9;
            let mut gw = [0.0; 9];
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = g_plane[oy * ow + ox];
                    for ky in 0..3 {
                        let row = (2 * oy + ky) * pw + 2 * ox;
                        gw[3 * ky] += g * src[row];
                        gw[3 * ky + 1] += g * src[row + 1];
                        gw[3 * ky + 2] += g * src[row + 2];
                    }
                }
            }
            for (dst, v) in grad[base..base + 9].iter_mut().zip(gw) {
                *dst += v;
            }
            if want_input_grad {
                let k = &weights[base..base + 9];
                let gsrc = &mut gp[c * ph * pw..(c + 1) * ph * pw];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = g_plane[oy * ow + ox];
                        for ky in 0..3 {
                            let row = (2 * oy + ky) * pw + 2 * ox;
                            gsrc[row] += g * k[3 * ky];
                            gsrc[row + 1] += g * k[3 * ky + 1];
                            gsrc[row + 2] += g * k[3 * ky + 2];
                        }
                    }
                }
            }
        }
    }
    if !want_input_grad {
        return Vec::new();
    }
    let mut g_in = vec![0.0; cin * h * w];
    for ch in 0..cin {
        for y in 0..h {
            let src = (ch * ph + y + 1) * pw + 1;
            g_in[(ch * h + y) * w..(ch * h + y + 1) * w].copy_from_slice(&gp[src..src + w]);
        }
    }
    g_in
}

fn dense_forward(x: &[f64], weights: &[f64], bias: &[f64], out: usize) -> Vec<f64> {
    let n = x.len();
    (0..out).map(|o| bias[o] + weights[o * n..(o + 1) * n].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).collect()
}

/// `grad` holds weights then bias.
fn dense_backward(x: &[f64], g_out: &[f64], weights: &[f64], grad: &mut [f64], want_input_grad: bool) -> Vec<f64> {
    let n = x.len();
    let n_w = g_out.len() * n;
    let mut g_in = if want_input_grad { vec![0.0; n] } else { Vec::new() };
    for (o, &g) in g_out.iter().enumerate() {
        grad[n_w + o] += g;
        if g == 0.0 {
            continue;
        }
        for (gw, v) in grad[o * n..(o + 1) * n].iter_mut().zip(x) {
            *gw += g * v;
        }
        if want_input_grad {
            for (gi, w) in g_in.iter_mut().zip(&weights[o * n..(o + 1) * n]) {
                *gi += g * w;
            }
        }
    }
    g_in
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64, hp: &AdamParams) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch { expected: params.len(), got: grads.len() });
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(hp.beta1, t);
    let c2 = 1.0 - libm::pow(hp.beta2, t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + hp.eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch: usize,
    pub epochs: usize,
    pub halve_every: usize,
    pub adam: AdamParams,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr0: 1e-3, batch: 10, epochs: 200, halve_every: 50, adam: AdamParams::default(), rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidConfig("lr0 must be finite and non-negative"));
        }
        if self.batch == 0 || self.epochs == 0 || self.halve_every == 0 {
            return Err(Error::InvalidConfig("batch, epochs and halve_every must be positive"));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * libm::pow(0.5, (epoch / self.halve_every) as f64)
    }
}

/// Per-output standardization fitted on training targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TargetNormalizer {
    /// Outputs with (near) zero spread keep unit scale.
    pub fn fit<T: AsRef<[f64]>>(targets: &[T]) -> Result<Self> {
        let first = targets.first().ok_or(Error::Empty("training targets"))?;
        let d = first.as_ref().len();
        let n = targets.len() as f64;
        let mut mean = vec![0.0; d];
        for t in targets {
            let t = t.as_ref();
            if t.len() != d {
                return Err(Error::ShapeMismatch { expected: d, got: t.len() });
            }
            for (m, v) in mean.iter_mut().zip(t) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for t in targets {
            for ((s, v), m) in var.iter_mut().zip(t.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var.into_iter().map(|v| if libm::sqrt(v) > metrics::ZERO_STD { libm::sqrt(v) } else { 1.0 }).collect();
        Ok(TargetNormalizer { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        TargetNormalizer { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    pub fn normalize(&self, t: &[f64]) -> Vec<f64> {
        t.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

/// A network together with the statistics that map its outputs to physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub normalizer: TargetNormalizer,
}

impl TrainedModel {
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.normalizer.denormalize(&self.model.forward(input)?))
    }

    pub fn predict_all<I: AsRef<[f64]>>(&self, inputs: &[I]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.predict(x.as_ref())).collect()
    }

    /// Metrics in physical units with the Euclidean per-point convention.
    pub fn evaluate(&self, samples: &[Sample]) -> Result<RegressionReport> {
        let preds = self.predict_all(&samples.iter().map(|s| &s.input[..]).collect::<Vec<_>>())?;
        let targets: Vec<&[f64]> = samples.iter().map(|s| &s.target[..]).collect();
        let preds: Vec<&[f64]> = preds.iter().map(|p| &p[..]).collect();
        metrics::report(&preds, &targets, MaeConvention::Euclidean { point_dim: self.model.config.label_dim })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    /// Physical units, `n_points · label_dim` long.
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val: RegressionReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub best: TrainedModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn check_samples(samples: &[Sample], config: &ModelConfig) -> Result<()> {
    for s in samples {
        if s.input.len() != config.input_len() {
            return Err(Error::ShapeMismatch { expected: config.input_len(), got: s.input.len() });
        }
        if s.target.len() != config.output_dim() {
            return Err(Error::ShapeMismatch { expected: config.output_dim(), got: s.target.len() });
        }
    }
    Ok(())
}

/// Trains `model` and returns the parameters with the lowest validation MAE.
pub fn train(model: Model, train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.len() < 2 {
        return Err(Error::TooFewSamples { got: val_set.len(), need: 2 });
    }
    check_samples(train_set, &model.config)?;
    check_samples(val_set, &model.config)?;

    let normalizer = TargetNormalizer::fit(&train_set.iter().map(|s| &s.target[..]).collect::<Vec<_>>())?;
    let targets: Vec<Vec<f64>> = train_set.iter().map(|s| normalizer.normalize(&s.target)).collect();
    let mut current = TrainedModel { model, normalizer };
    let mut adam = AdamState::new(current.model.params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut r = rng::seeded(cfg.rng_seed);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| &train_set[i].input[..]).collect();
            let ts: Vec<&[f64]> = chunk.iter().map(|&i| &targets[i][..]).collect();
            let (loss, grad) = current.model.loss_and_grad(&xs, &ts)?;
            if !loss.is_finite() {
                return Err(Error::Numeric("training loss diverged"));
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut adam, &mut current.model.params, &grad, lr, &cfg.adam)?;
        }
        let val = current.evaluate(val_set)?;
        if best.as_ref().is_none_or(|(mae, _, _)| val.mae_mean < *mae) {
            best = Some((val.mae_mean, epoch, current.model.clone()));
        }
        log.push(EpochLog { epoch, lr, train_loss: loss_sum / train_set.len() as f64, val });
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { best: TrainedModel { model, normalizer: current.normalizer }, best_epoch, log })
}

/// Per-output mean of the training targets, the baseline a model must beat.
pub fn mean_predictor_report(train_set: &[Sample], val_set: &[Sample], label_dim: usize) -> Result<RegressionReport> {
    let norm = TargetNormalizer::fit(&train_set.iter().map(|s| &s.target[..]).collect::<Vec<_>>())?;
    let preds: Vec<&[f64]> = val_set.iter().map(|_| &norm.mean[..]).collect();
    let targets: Vec<&[f64]> = val_set.iter().map(|s| &s.target[..]).collect();
    metrics::report(&preds, &targets, MaeConvention::Euclidean { point_dim: label_dim })
}

/// Box-filters an image region to the network input, channel-major.
/// Colors are scaled to `[0, 1]`; depth is clipped to [`MAX_DEPTH`] and scaled likewise.
pub fn prepare_input(rgb: &RgbImage, depth: &DepthImage, channels: Channels, width: usize, height: usize) -> Result<Vec<f64>> {
    if rgb.width() != depth.width() || rgb.height() != depth.height() {
        return Err(Error::ShapeMismatch { expected: rgb.width() * rgb.height(), got: depth.width() * depth.height() });
    }
    let (sw, sh) = (rgb.width(), rgb.height());
    if sw == 0 || sh == 0 || width == 0 || height == 0 {
        return Err(Error::Empty("image"));
    }
    let planes: &[usize] = match channels {
        Channels::Rgb => &[0, 1, 2],
        Channels::Rgbd => &[0, 1, 2, 3],
        Channels::Depth => &[3],
    };
    let span = |o: usize, out: usize, src: usize| {
        let lo = o * src / out;
        let hi = ((o + 1) * src / out).max(lo + 1).min(src);
        (lo, hi)
    };
    let mut input = vec![0.0; planes.len() * width * height];
    for (pi, &plane) in planes.iter().enumerate() {
        for oy in 0..height {
            let (y0, y1) = span(oy, height, sh);
            for ox in 0..width {
                let (x0, x1) = span(ox, width, sw);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += if plane == 3 {
                            f64::from(depth.get(x, y)).clamp(0.0, MAX_DEPTH) / MAX_DEPTH
                        } else {
                            f64::from(rgb.get(x, y)[plane]) / 255.0
                        };
                    }
                }
                input[(pi * height + oy) * width + ox] = sum / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config(out_points: usize) -> ModelConfig {
        ModelConfig {
            input_width: 11,
            input_height: 10,
            channels: Channels::Rgbd,
            conv_channels: [3, 4],
            dense_hidden: 7,
            n_points: out_points,
            label_dim: 2,
        }
    }

    fn random_batch(r: &mut impl Rng, cfg: &ModelConfig, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs = (0..n).map(|_| (0..cfg.input_len()).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let ts = (0..n).map(|_| (0..cfg.output_dim()).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        (xs, ts)
    }

    fn check_gradient(model: &Model, xs: &[Vec<f64>], ts: &[Vec<f64>], r: &mut impl Rng, n_params: usize) {
        let (_, grad) = model.loss_and_grad(xs, ts).unwrap();
        let h = 1e-5;
        let mut probe = model.clone();
        for _ in 0..n_params {
            let i = r.random_range(0..model.params.len());
            let orig = probe.params[i];
            probe.params[i] = orig + h;
            let up = probe.loss_and_grad(xs, ts).unwrap().0;
            probe.params[i] = orig - h;
            let down = probe.loss_and_grad(xs, ts).unwrap().0;
            probe.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            // The floor keeps round-off in the difference quotient from
            // dominating gradients that are essentially zero.
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {i}: analytic {} numeric {fd}", grad[i]);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut r = rng::seeded(5);
        let cfg = small_config(3);
        let model = Model::init(cfg.clone(), 1).unwrap();
        let (xs, ts) = random_batch(&mut r, &cfg, 4);
        check_gradient(&model, &xs, &ts, &mut r, 150);

        // And again after ten optimizer steps.
        let mut trained = model.clone();
        let mut adam = AdamState::new(trained.params.len());
        for _ in 0..10 {
            let (_, g) = trained.loss_and_grad(&xs, &ts).unwrap();
            adam_step(&mut adam, &mut trained.params, &g, 1e-2, &AdamParams::default()).unwrap();
        }
        check_gradient(&trained, &xs, &ts, &mut r, 150);
    }

    #[test]
    fn gradients_match_at_the_default_architecture() {
        let mut r = rng::seeded(6);
        let cfg = ModelConfig::new(Channels::Rgb, 8, 2);
        let model = Model::init(cfg.clone(), 2).unwrap();
        let (xs, ts) = random_batch(&mut r, &cfg, 2);
        check_gradient(&model, &xs, &ts, &mut r, 100);
    }

    #[test]
    fn zero_model_and_shapes() {
        let cfg = small_config(4);
        let model = Model::zeros(cfg.clone()).unwrap();
        let x = vec![0.5; cfg.input_len()];
        assert_eq!(model.forward(&x).unwrap(), vec![0.0; 8]);
        assert!(matches!(model.forward(&x[1..]), Err(Error::ShapeMismatch { .. })));

        let init = Model::init(cfg.clone(), 9).unwrap();
        let y = init.forward(&x).unwrap();
        assert_eq!(y.len(), cfg.output_dim());
        assert_eq!(y, Model::init(cfg.clone(), 9).unwrap().forward(&x).unwrap());

        let (loss, grad) = init.loss_and_grad(core::slice::from_ref(&x), &[y]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        assert_eq!(ModelConfig::new(Channels::Rgbd, 8, 3).param_count(), 8 * 4 * 9 + 8 + 16 * 8 * 9 + 16 + 64 * 4096 + 64 + 24 * 64 + 24);
    }

    #[test]
    fn adam_identities() {
        let hp = AdamParams::default();
        let mut params = vec![1.0, -2.0, 3.0];
        let mut state = AdamState::new(3);
        adam_step(&mut state, &mut params, &[0.0; 3], 0.1, &hp).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step, 1);

        // First step: m̂ = g and v̂ = g², so each parameter moves by lr·g/(|g|+eps).
        let mut state = AdamState::new(3);
        let g = [0.5, -3.0, 1e-3];
        adam_step(&mut state, &mut params, &g, 0.01, &hp).unwrap();
        for (k, (p, orig)) in params.iter().zip([1.0, -2.0, 3.0]).enumerate() {
            let expected = orig - 0.01 * g[k] / (g[k].abs() + hp.eps);
            assert!((p - expected).abs() < 1e-15);
            assert!(((p - orig).abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn learning_rate_halves_every_period() {
        let cfg = TrainConfig { lr0: 1e-3, ..TrainConfig::default() };
        assert_eq!(cfg.learning_rate(0), 1e-3);
        assert_eq!(cfg.learning_rate(49), 1e-3);
        assert_eq!(cfg.learning_rate(50), 5e-4);
        assert_eq!(cfg.learning_rate(100), 2.5e-4);
    }

    fn toy_set(r: &mut impl Rng, cfg: &ModelConfig, n: usize) -> Vec<Sample> {
        let (xs, ts) = random_batch(r, cfg, n);
        xs.into_iter().zip(ts).map(|(input, target)| Sample { input, target }).collect()
    }

    #[test]
    fn zero_learning_rate_leaves_the_model_unchanged() {
        let mut r = rng::seeded(7);
        let cfg = small_config(2);
        let data = toy_set(&mut r, &cfg, 12);
        let model = Model::init(cfg, 3).unwrap();
        let tc = TrainConfig { lr0: 0.0, epochs: 1, batch: 4, ..TrainConfig::default() };
        let out = train(model.clone(), &data[..9], &data[9..], &tc).unwrap();
        assert_eq!(out.best.model, model);
        let initial = TrainedModel { model, normalizer: out.best.normalizer.clone() }.evaluate(&data[9..]).unwrap();
        assert_eq!(out.log[0].val, initial);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let mut r = rng::seeded(8);
        let cfg = small_config(2);
        let data = toy_set(&mut r, &cfg, 24);
        let tc = TrainConfig { lr0: 1e-2, epochs: 30, batch: 5, halve_every: 10, rng_seed: 4, ..TrainConfig::default() };
        let a = train(Model::init(cfg.clone(), 1).unwrap(), &data[..20], &data[20..], &tc).unwrap();
        let b = train(Model::init(cfg.clone(), 1).unwrap(), &data[..20], &data[20..], &tc).unwrap();
        let curve = |o: &TrainOutcome| o.log.iter().map(|e| e.train_loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(curve(&a), curve(&b));
        assert_eq!(a.best, b.best);
        assert!(a.log.last().unwrap().train_loss < 0.5 * a.log[0].train_loss);
        assert_eq!(a.log[10].lr, 5e-3);
        assert!(a.log.iter().all(|e| e.val.mae_mean >= a.log[a.best_epoch].val.mae_mean));
    }

    #[test]
    fn normalizer_round_trip() {
        let t = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = TargetNormalizer::fit(&t).unwrap();
        assert_eq!(n.mean, vec![2.0, 5.0]);
        assert_eq!(n.std, vec![1.0, 1.0]);
        assert_eq!(n.normalize(&t[0]), vec![-1.0, 0.0]);
        assert_eq!(n.denormalize(&n.normalize(&t[1])), t[1]);
    }

    #[test]
    fn input_preparation_averages_boxes() {
        let mut rgb = RgbImage::black(4, 2);
        let mut depth = DepthImage::zeros(4, 2);
        for y in 0..2 {
            for x in 0..4 {
                rgb.set(x, y, [255 * (x % 2) as u8, 0, 51]);
                depth.set(x, y, 0.5 + x as f32);
            }
        }
        let input = prepare_input(&rgb, &depth, Channels::Rgbd, 2, 1).unwrap();
        assert_eq!(input.len(), 8);
        assert_eq!(&input[..2], &[0.5, 0.5]);
        assert_eq!(&input[2..4], &[0.0, 0.0]);
        assert!((input[4] - 0.2).abs() < 1e-12);
        // Depths 0.5, 1.5 average to 1 m; 2.5 and 3.5 clip to 2 m.
        assert_eq!(&input[6..], &[0.5, 1.0]);
        assert_eq!(prepare_input(&rgb, &depth, Channels::Depth, 4, 2).unwrap().len(), 8);
    }
}
