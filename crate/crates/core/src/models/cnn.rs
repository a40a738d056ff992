//! Small convolutional network over log-mel spectrograms.
//!
//! Layout: `[conv 3×3 same → ReLU → maxpool 2×2] × N → flatten →
//! [dense → ReLU] × M → dense → softmax`. The default architecture has conv
//! channels 256/512/1024 and hidden dense widths 256/64/16.
//!
//! The network is generic over the scalar type: training runs in `f32`,
//! gradient checking in `f64`. Softmax probabilities are always produced in
//! `f64`.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("finite conversion")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArchitecture {
    pub n_mels: usize,
    pub n_frames: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub dense: Vec<usize>,
    pub n_classes: usize,
}

impl CnnArchitecture {
    /// Conv channels 256/512/1024 and dense 256/64/16.
    pub fn standard(n_classes: usize, n_mels: usize, n_frames: usize) -> Self {
        Self {
            n_mels,
            n_frames,
            conv_channels: vec![256, 512, 1024],
            kernel_size: 3,
            dense: vec![256, 64, 16],
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidArchitecture(m.to_owned()));
        if self.n_mels == 0 || self.n_frames == 0 || self.n_classes == 0 {
            return bad("input dimensions and class count must be positive");
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad("kernel size must be odd");
        }
        if self
            .conv_channels
            .iter()
            .chain(&self.dense)
            .any(|&c| c == 0)
        {
            return bad("layer widths must be positive");
        }
        let (h, w) = self.conv_output_hw();
        if h == 0 || w == 0 {
            return bad("input too small for the number of pooling stages");
        }
        Ok(())
    }

    /// Spatial size after all conv/pool stages.
    pub fn conv_output_hw(&self) -> (usize, usize) {
        self.conv_channels
            .iter()
            .fold((self.n_mels, self.n_frames), |(h, w), _| (h / 2, w / 2))
    }

    pub fn flatten_dim(&self) -> usize {
        let (h, w) = self.conv_output_hw();
        h * w * self.conv_channels.last().copied().unwrap_or(1)
    }

    /// `(fan_in, fan_out)` of every conv layer followed by every dense layer.
    fn layer_dims(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let k2 = self.kernel_size * self.kernel_size;
        let mut conv = Vec::new();
        let mut in_ch = 1;
        for &c in &self.conv_channels {
            conv.push((in_ch * k2, c));
            in_ch = c;
        }
        let mut dense = Vec::new();
        let mut width = if self.conv_channels.is_empty() {
            self.n_mels * self.n_frames
        } else {
            self.flatten_dim()
        };
        for &d in self.dense.iter().chain(std::iter::once(&self.n_classes)) {
            dense.push((width, d));
            width = d;
        }
        (conv, dense)
    }

    pub fn param_count(&self) -> usize {
        let (conv, dense) = self.layer_dims();
        conv.iter().chain(&dense).map(|(i, o)| i * o + o).sum()
    }
}

/// Weight matrix (`out × in`, conv: `out × in·k·k`) plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnTrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    pub arch: CnnArchitecture,
    pub conv: Vec<LayerParams<T>>,
    pub dense: Vec<LayerParams<T>>,
    /// Affine input standardization, `(x − mean) / std`.
    pub input_mean: f64,
    pub input_std: f64,
    pub train_config: CnnTrainConfig,
}

/// Per-layer activations kept for the backward pass.
struct ConvCache<T> {
    cols: Array2<T>,
    pre_act: Array2<T>,
    hw: (usize, usize),
    pooled_hw: (usize, usize),
    argmax: Vec<usize>,
}

struct DenseCache<T> {
    input: Array1<T>,
    pre_act: Array1<T>,
}

struct ForwardTrace<T> {
    conv: Vec<ConvCache<T>>,
    dense: Vec<DenseCache<T>>,
    logits: Array1<T>,
}

/// Columns of `k×k` same-padded patches: `(c·k·k) × (h·w)`.
fn im2col<T: Scalar>(x: &Array3<T>, k: usize) -> Array2<T> {
    let (c, h, w) = x.dim();
    let pad = (k / 2) as isize;
    let mut cols = Array2::zeros((c * k * k, h * w));
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let mut dst = cols.row_mut(row);
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - pad;
                        if sx >= 0 && sx < w as isize {
                            dst[y * w + xx] = x[[ch, sy as usize, sx as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &Array2<T>, c: usize, h: usize, w: usize, k: usize) -> Array3<T> {
    let pad = (k / 2) as isize;
    let mut x = Array3::zeros((c, h, w));
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let src = cols.row((ch * k + ky) * k + kx);
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - pad;
                        if sx >= 0 && sx < w as isize {
                            x[[ch, sy as usize, sx as usize]] += src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2×2 stride-2 max pooling over `(c, h·w)` activations. Returns the pooled
/// tensor and, per output cell, the flat `h·w` index of the winner; ties go
/// to the first position in row-major window order.
pub fn max_pool<T: Scalar>(act: &Array2<T>, h: usize, w: usize) -> (Array3<T>, Vec<usize>) {
    let c = act.nrows();
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, ph, pw));
    let mut argmax = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        let row = act.row(ch);
        for py in 0..ph {
            for px in 0..pw {
                let mut best_idx = (2 * py) * w + 2 * px;
                let mut best = row[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * py + dy) * w + 2 * px + dx;
                    if row[idx] > best {
                        best = row[idx];
                        best_idx = idx;
                    }
                }
                out[[ch, py, px]] = best;
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

/// Numerically stable softmax, computed in `f64`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl<T: Scalar> CnnModel<T> {
    /// He-uniform weights, zero biases; deterministic per seed.
    pub fn init(arch: CnnArchitecture, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (conv_dims, dense_dims) = arch.layer_dims();
        let mut make = |(fan_in, fan_out): (usize, usize)| {
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut p = LayerParams::zeros(fan_in, fan_out);
            p.weight
                .mapv_inplace(|_| cast(rng.random_range(-limit..limit)));
            p
        };
        let conv = conv_dims.into_iter().map(&mut make).collect();
        let dense = dense_dims.into_iter().map(&mut make).collect();
        Ok(Self {
            arch,
            conv,
            dense,
            input_mean: 0.0,
            input_std: 1.0,
            train_config: CnnTrainConfig::default(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.conv.iter().chain(&self.dense)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.conv.iter_mut().chain(self.dense.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|p| p.weight.iter().chain(&p.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<(), ModelError> {
        let expected = (self.arch.n_mels, self.arch.n_frames);
        if input.dim() != expected {
            return Err(ModelError::ShapeMismatch {
                expected: vec![expected.0, expected.1],
                got: vec![input.nrows(), input.ncols()],
            });
        }
        Ok(())
    }

    fn forward_trace(&self, input: &ArrayView2<f64>) -> ForwardTrace<T> {
        let (mean, std) = (self.input_mean, self.input_std);
        let mut x: Array3<T> = input.mapv(|v| cast((v - mean) / std)).insert_axis(Axis(0));
        let k = self.arch.kernel_size;
        let mut conv_caches = Vec::with_capacity(self.conv.len());
        for layer in &self.conv {
            let (_, h, w) = x.dim();
            let cols = im2col(&x, k);
            let mut pre = layer.weight.dot(&cols);
            pre += &layer.bias.view().insert_axis(Axis(1));
            let act = pre.mapv(|v| v.max(T::zero()));
            let (pooled, argmax) = max_pool(&act, h, w);
            conv_caches.push(ConvCache {
                cols,
                pre_act: pre,
                hw: (h, w),
                pooled_hw: (h / 2, w / 2),
                argmax,
            });
            x = pooled;
        }
        let mut a: Array1<T> = Array1::from_iter(x.iter().copied());
        let mut dense_caches = Vec::with_capacity(self.dense.len());
        let last = self.dense.len() - 1;
        for (i, layer) in self.dense.iter().enumerate() {
            let pre = layer.weight.dot(&a) + &layer.bias;
            let out = if i == last {
                pre.clone()
            } else {
                pre.mapv(|v| v.max(T::zero()))
            };
            dense_caches.push(DenseCache {
                input: a,
                pre_act: pre,
            });
            a = out;
        }
        ForwardTrace {
            conv: conv_caches,
            dense: dense_caches,
            logits: a,
        }
    }

    pub fn logits(&self, input: &ArrayView2<f64>) -> Result<Vec<f64>, ModelError> {
        self.check_input(input)?;
        Ok(self
            .forward_trace(input)
            .logits
            .iter()
            .map(|v| v.to_f64().unwrap())
            .collect())
    }

    /// Class probabilities for one `n_mels × n_frames` input.
    pub fn forward(&self, input: &ArrayView2<f64>) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(&self.logits(input)?))
    }

    pub fn predict(&self, input: &ArrayView2<f64>) -> Result<usize, ModelError> {
        let p = self.forward(input)?;
        Ok(argmax(&p))
    }

    /// Accumulates `scale · ∂loss/∂θ` for one sample into `grads` and returns
    /// the sample's cross-entropy loss and whether it was classified correctly.
    fn backward_sample(
        &self,
        input: &ArrayView2<f64>,
        label: usize,
        scale: f64,
        grads: &mut [LayerParams<T>],
    ) -> (f64, bool) {
        let trace = self.forward_trace(input);
        let logits: Vec<f64> = trace.logits.iter().map(|v| v.to_f64().unwrap()).collect();
        let probs = softmax(&logits);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let loss = lse - logits[label];
        let correct = argmax(&probs) == label;

        let n_conv = self.conv.len();
        let mut delta: Array1<T> = Array1::from_iter(
            probs
                .iter()
                .enumerate()
                .map(|(i, p)| cast((p - if i == label { 1.0 } else { 0.0 }) * scale)),
        );
        let last = self.dense.len() - 1;
        for i in (0..self.dense.len()).rev() {
            let cache = &trace.dense[i];
            if i != last {
                delta.zip_mut_with(&cache.pre_act, |d, &z| {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                });
            }
            let g = &mut grads[n_conv + i];
            let outer = delta
                .view()
                .insert_axis(Axis(1))
                .dot(&cache.input.view().insert_axis(Axis(0)));
            g.weight += &outer;
            g.bias += &delta;
            delta = self.dense[i].weight.t().dot(&delta);
        }

        if n_conv == 0 {
            return (loss, correct);
        }
        // unflatten into the last pooled activation's shape
        let last_c = self.arch.conv_channels[n_conv - 1];
        let (ph, pw) = trace.conv[n_conv - 1].pooled_hw;
        let mut d_pooled: Array3<T> = delta
            .into_shape_with_order((last_c, ph, pw))
            .expect("flatten dim matches architecture");
        let k = self.arch.kernel_size;
        for i in (0..n_conv).rev() {
            let cache = &trace.conv[i];
            let (h, w) = cache.hw;
            let c_out = self.arch.conv_channels[i];
            let mut d_act: Array2<T> = Array2::zeros((c_out, h * w));
            for (cell, (&src, &g)) in cache.argmax.iter().zip(d_pooled.iter()).enumerate() {
                let ch = cell / (ph_of(cache) * pw_of(cache));
                d_act[[ch, src]] += g;
            }
            d_act.zip_mut_with(&cache.pre_act, |d, &z| {
                if z <= T::zero() {
                    *d = T::zero();
                }
            });
            let g = &mut grads[i];
            g.weight += &d_act.dot(&cache.cols.t());
            g.bias += &d_act.sum_axis(Axis(1));
            if i > 0 {
                let d_cols = self.conv[i].weight.t().dot(&d_act);
                let c_in = self.arch.conv_channels[i - 1];
                d_pooled = col2im(&d_cols, c_in, h, w, k);
            }
        }
        (loss, correct)
    }

    fn zero_grads(&self) -> Vec<LayerParams<T>> {
        self.layers().map(LayerParams::zeros_like).collect()
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradient(
        &self,
        batch: &[(ArrayView2<f64>, usize)],
    ) -> Result<(f64, Vec<LayerParams<T>>), ModelError> {
        let mut grads = self.zero_grads();
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut loss = 0.0;
        for (x, y) in batch {
            self.check_input(x)?;
            self.check_label(*y)?;
            loss += self.backward_sample(x, *y, scale, &mut grads).0 * scale;
        }
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &[(ArrayView2<f64>, usize)]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (x, y) in batch {
            self.check_label(*y)?;
            let logits = self.logits(x)?;
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            total += lse - logits[*y];
        }
        Ok(total / batch.len().max(1) as f64)
    }

    fn check_label(&self, y: usize) -> Result<(), ModelError> {
        if y >= self.arch.n_classes {
            return Err(ModelError::LabelOutOfRange {
                label: y,
                n_classes: self.arch.n_classes,
            });
        }
        Ok(())
    }

    /// Loss and accuracy over a dataset without touching gradients.
    pub fn evaluate(&self, data: &[(ArrayView2<f64>, usize)]) -> Result<(f64, f64), ModelError> {
        if data.is_empty() {
            return Ok((0.0, 0.0));
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (x, y) in data {
            self.check_label(*y)?;
            let logits = self.logits(x)?;
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            loss += lse - logits[*y];
            correct += usize::from(argmax(&logits) == *y);
        }
        let n = data.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

fn ph_of<T>(c: &ConvCache<T>) -> usize {
    c.pooled_hw.0
}

fn pw_of<T>(c: &ConvCache<T>) -> usize {
    c.pooled_hw.1
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn cnn_init<T: Scalar>(
    n_classes: usize,
    n_mels: usize,
    n_frames: usize,
    seed: u64,
) -> Result<CnnModel<T>, ModelError> {
    CnnModel::init(CnnArchitecture::standard(n_classes, n_mels, n_frames), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam<T> {
    m: Vec<LayerParams<T>>,
    v: Vec<LayerParams<T>>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(model: &CnnModel<T>) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut CnnModel<T>, grads: &[LayerParams<T>], cfg: &CnnTrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let lr_t =
            cfg.learning_rate * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
        let (b1, b2, lr_t, eps): (T, T, T, T) = (cast(b1), cast(b2), cast(lr_t), cast(cfg.epsilon));
        let one = T::one();
        for (((p, g), m), v) in model
            .layers_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let step = |p: &mut T, g: T, m: &mut T, v: &mut T| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + eps);
            };
            ndarray::Zip::from(&mut p.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| step(p, g, m, v));
            ndarray::Zip::from(&mut p.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| step(p, g, m, v));
        }
    }
}

/// Mini-batch Adam on softmax cross-entropy with early stopping on
/// validation loss (training loss when `val` is empty). Returns the weights
/// of the best epoch.
pub fn cnn_train<T: Scalar>(
    mut model: CnnModel<T>,
    train: &[(ArrayView2<f64>, usize)],
    val: &[(ArrayView2<f64>, usize)],
    config: &CnnTrainConfig,
) -> Result<(CnnModel<T>, TrainingHistory), ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if config.batch_size == 0 {
        return Err(ModelError::InvalidParameter(
            "batch size must be positive".into(),
        ));
    }
    for (x, y) in train.iter().chain(val) {
        model.check_input(x)?;
        model.check_label(*y)?;
    }
    model.train_config = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, CnnModel<T>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut grads = model.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (x, y) = &train[i];
                let (l, ok) = model.backward_sample(x, *y, scale, &mut grads);
                batch_loss += l;
                correct += usize::from(ok);
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            adam.update(&mut model, &grads, config);
        }
        let n = train.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = model.evaluate(val)?;
            if !l.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: 0 });
            }
            (Some(l), Some(a))
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4} acc {train_acc:.3}{}",
            val_loss.map_or(String::new(), |l| format!(
                ", val loss {l:.4} acc {:.3}",
                val_acc.unwrap()
            ))
        );
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        let monitored = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, history))
}

/// Sets the input standardization from the mean/std over every value of the
/// training inputs.
pub fn fit_input_scaling<T: Scalar>(model: &mut CnnModel<T>, inputs: &[ArrayView2<f64>]) {
    let n: usize = inputs.iter().map(|x| x.len()).sum();
    if n == 0 {
        return;
    }
    let mean = inputs.iter().flat_map(|x| x.iter()).sum::<f64>() / n as f64;
    let var = inputs
        .iter()
        .flat_map(|x| x.iter())
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    model.input_mean = mean;
    model.input_std = if var > 0.0 { var.sqrt() } else { 1.0 };
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> CnnArchitecture {
        CnnArchitecture {
            n_mels: 8,
            n_frames: 8,
            conv_channels: vec![2, 2, 2],
            kernel_size: 3,
            dense: vec![4],
            n_classes: 3,
        }
    }

    #[test]
    fn standard_param_count() {
        let arch = CnnArchitecture::standard(3, 128, 87);
        // 128×87 → 64×43 → 32×21 → 16×10
        assert_eq!(arch.conv_output_hw(), (16, 10));
        let expected = (9 * 256 + 256)
            + (256 * 9 * 512 + 512)
            + (512 * 9 * 1024 + 1024)
            + (16 * 10 * 1024 * 256 + 256)
            + (256 * 64 + 64)
            + (64 * 16 + 16)
            + (16 * 3 + 3);
        assert_eq!(arch.param_count(), expected);
    }

    #[test]
    fn init_is_deterministic() {
        let a = CnnModel::<f32>::init(tiny_arch(), 9).unwrap();
        let b = CnnModel::<f32>::init(tiny_arch(), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, CnnModel::<f32>::init(tiny_arch(), 10).unwrap());
        assert_eq!(a.param_count(), tiny_arch().param_count());
        assert!(a.layers().all(|p| p.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q = softmax(&[101.0, 102.0, 103.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn zero_output_layer_gives_uniform_probabilities() {
        let mut m = CnnModel::<f64>::init(tiny_arch(), 1).unwrap();
        let out = m.dense.last_mut().unwrap();
        out.weight.fill(0.0);
        out.bias.fill(0.0);
        let x = Array2::from_shape_fn((8, 8), |(i, j)| (i * j) as f64);
        let p = m.forward(&x.view()).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_wrong_shape() {
        let m = CnnModel::<f32>::init(tiny_arch(), 1).unwrap();
        let x = Array2::zeros((8, 9));
        assert!(matches!(
            m.forward(&x.view()),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn max_pool_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (c, h, w) = (3, 7, 6);
        let act = Array2::from_shape_fn((c, h * w), |_| rng.random_range(-1.0..1.0f64));
        let (pooled, _) = max_pool(&act, h, w);
        for ch in 0..c {
            for py in 0..h / 2 {
                for px in 0..w / 2 {
                    let brute = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|(dy, dx)| act[[ch, (2 * py + dy) * w + 2 * px + dx]])
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(pooled[[ch, py, px]], brute);
                }
            }
        }
    }

    #[test]
    fn max_pool_ties_pick_first() {
        let act = Array2::from_elem((1, 4), 0.5f64);
        let (_, idx) = max_pool(&act, 2, 2);
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array3::from_shape_fn((2, 5, 4), |_| rng.random_range(-1.0..1.0f64));
        let c = Array2::from_shape_fn((2 * 9, 20), |_| rng.random_range(-1.0..1.0f64));
        let lhs: f64 = (&im2col(&x, 3) * &c).sum();
        let rhs: f64 = (&x * &col2im(&c, 2, 5, 4, 3)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let m = CnnModel::<f32>::init(tiny_arch(), 2).unwrap();
        let xs: Vec<Array2<f64>> = (0..6)
            .map(|i| Array2::from_shape_fn((8, 8), |(a, b)| ((a + b + i) % 5) as f64))
            .collect();
        let data: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.view(), i % 3))
            .collect();
        let cfg = CnnTrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            batch_size: 4,
            ..CnnTrainConfig::default()
        };
        let (trained, hist) = cnn_train(m.clone(), &data, &[], &cfg).unwrap();
        assert_eq!(hist.epochs.len(), 1);
        for (a, b) in trained.layers().zip(m.layers()) {
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let model = CnnModel::<f64>::init(tiny_arch(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<Array2<f64>> = (0..3)
            .map(|_| Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let batch: Vec<_> = xs.iter().enumerate().map(|(i, x)| (x.view(), i)).collect();
        let (_, grads) = model.loss_and_gradient(&batch).unwrap();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for (li, g) in grads.iter().enumerate() {
            let n_w = g.weight.len();
            for pi in 0..n_w + g.bias.len() {
                let perturbed = |delta: f64| {
                    let mut m = model.clone();
                    let layer = m.layers_mut().nth(li).unwrap();
                    if pi < n_w {
                        let c = layer.weight.ncols();
                        layer.weight[[pi / c, pi % c]] += delta;
                    } else {
                        layer.bias[pi - n_w] += delta;
                    }
                    m.loss(&batch).unwrap()
                };
                let numeric = (perturbed(eps) - perturbed(-eps)) / (2.0 * eps);
                let analytic = if pi < n_w {
                    g.weight.iter().nth(pi).copied().unwrap()
                } else {
                    g.bias[pi - n_w]
                };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }
}
