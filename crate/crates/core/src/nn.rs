//! Dense feed-forward posterior approximator.
//!
//! Input is the one-hot evidence vector, hidden layers are affine + relu,
//! and the output layer emits one logit per (variable, value) slot. A
//! softmax is applied independently inside each variable's block.
//!
//! Training minimizes, per mini-batch,
//!
//! ```text
//! mean_n  sum_i sum_j  -y_ij * log p_ij   +   lambda * sum(W^2)
//! ```
//!
//! where `y` are exact posteriors (soft labels) and the penalty covers
//! weight matrices only. Updates use classical momentum:
//! `v <- mu * v - lr * grad; theta <- theta + v`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{EncodingLayout, Example};
use crate::error::{Error, Result};
use crate::network::{Evidence, PosteriorSet};

/// Hyperparameters of one model and its training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Input, hidden..., output. Input and output equal the layout width.
    pub layer_sizes: Vec<usize>,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub use_bias: bool,
}

impl ModelConfig {
    pub const DEFAULT_L2_LAMBDA: f64 = 0.005;
    pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_BATCH_SIZE: usize = 32;
    pub const DEFAULT_MAX_EPOCHS: usize = 2000;
    pub const DEFAULT_PATIENCE: usize = 50;

    pub fn new(layer_sizes: Vec<usize>) -> Self {
        ModelConfig {
            layer_sizes,
            l2_lambda: Self::DEFAULT_L2_LAMBDA,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            momentum: Self::DEFAULT_MOMENTUM,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            max_epochs: Self::DEFAULT_MAX_EPOCHS,
            early_stop_patience: Self::DEFAULT_PATIENCE,
            use_bias: true,
        }
    }

    /// `total_dim, hidden..., total_dim`.
    pub fn with_hidden(total_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(total_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(total_dim);
        Self::new(sizes)
    }

    pub fn hidden(&self) -> &[usize] {
        let n = self.layer_sizes.len();
        if n < 2 {
            &[]
        } else {
            &self.layer_sizes[1..n - 1]
        }
    }

    /// Weight-matrix entries only.
    pub fn weight_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn parameter_count(&self) -> usize {
        let biases = if self.use_bias {
            self.layer_sizes.iter().skip(1).sum()
        } else {
            0
        };
        self.weight_count() + biases
    }

    pub fn validate(&self, layout: &EncodingLayout) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig("need at least input and output layers".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let dim = layout.total_dim();
        if sizes[0] != dim || sizes[sizes.len() - 1] != dim {
            return Err(Error::InvalidConfig(format!(
                "input and output layers must equal the encoding width {dim}, got {sizes:?}"
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1]".into()));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig("l2 lambda must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    /// Start of the `outputs x inputs` row-major weight matrix.
    weights: usize,
    /// Start of the bias vector, when biases are used.
    bias: Option<usize>,
}

impl LayerShape {
    fn weight_range(&self) -> core::ops::Range<usize> {
        self.weights..self.weights + self.inputs * self.outputs
    }
}

fn layer_shapes(sizes: &[usize], use_bias: bool) -> (Vec<LayerShape>, usize) {
    let mut shapes = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut offset = 0;
    for w in sizes.windows(2) {
        let weights = offset;
        offset += w[0] * w[1];
        let bias = use_bias.then(|| {
            let b = offset;
            offset += w[1];
            b
        });
        shapes.push(LayerShape {
            inputs: w[0],
            outputs: w[1],
            weights,
            bias,
        });
    }
    (shapes, offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMetadata {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

/// A trained (or freshly initialized) network bound to an encoding layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layout: EncodingLayout,
    layer_sizes: Vec<usize>,
    use_bias: bool,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
    pub metadata: TrainingMetadata,
}

impl Model {
    /// All parameters zero.
    pub fn zeros(layout: &EncodingLayout, config: &ModelConfig) -> Result<Self> {
        config.validate(layout)?;
        let (shapes, count) = layer_shapes(&config.layer_sizes, config.use_bias);
        Ok(Model {
            layout: layout.clone(),
            layer_sizes: config.layer_sizes.clone(),
            use_bias: config.use_bias,
            shapes,
            params: vec![0.0; count],
            metadata: TrainingMetadata::default(),
        })
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(layout: &EncodingLayout, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(layout, config)?;
        for shape in model.shapes.clone() {
            let limit = libm::sqrt(6.0 / (shape.inputs + shape.outputs) as f64);
            for w in &mut model.params[shape.weight_range()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// Rebuilds a model from stored parts.
    pub fn from_parts(
        layout: EncodingLayout,
        layer_sizes: Vec<usize>,
        use_bias: bool,
        params: Vec<f64>,
        metadata: TrainingMetadata,
    ) -> Result<Self> {
        let mut config = ModelConfig::new(layer_sizes);
        config.use_bias = use_bias;
        let mut model = Self::zeros(&layout, &config)?;
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch {
                expected: model.params.len(),
                found: params.len(),
            });
        }
        model.params = params;
        model.metadata = metadata;
        Ok(model)
    }

    pub fn layout(&self) -> &EncodingLayout {
        &self.layout
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    /// Flat parameter vector: per layer, weights (row-major, one row per
    /// output unit) then biases.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight_count(&self) -> usize {
        self.shapes.iter().map(|s| s.inputs * s.outputs).sum()
    }

    /// Mask over `params()`: true for weight entries, false for biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for s in &self.shapes {
            mask[s.weight_range()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// `(rows, cols)` of each weight matrix.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.shapes.iter().map(|s| (s.outputs, s.inputs)).collect()
    }

    /// Weight matrix `layer` (row-major, `outputs x inputs`).
    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.shapes[layer].weight_range()]
    }

    pub fn bias(&self, layer: usize) -> Option<&[f64]> {
        let s = self.shapes[layer];
        s.bias.map(|b| &self.params[b..b + s.outputs])
    }

    /// Output logits for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let dim = self.layer_sizes[0];
        if input.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: input.len(),
            });
        }
        let mut acts = self.forward_batch(input, 1);
        Ok(acts.pop().unwrap_or_default())
    }

    /// Posterior of every variable given `ev`.
    pub fn predict(&self, ev: &Evidence) -> Result<PosteriorSet> {
        for (var, value) in ev.iter() {
            if var >= self.layout.num_variables() || value >= self.layout.cardinalities()[var] {
                return Err(Error::LayoutMismatch(format!(
                    "evidence {var}={value} does not fit layout of `{}`",
                    self.layout.network_name()
                )));
            }
        }
        let logits = self.forward(&self.layout.encode_evidence(ev))?;
        self.layout.unflatten(&multi_softmax(&self.layout, &logits))
    }

    /// Activations of every layer for a row-major batch; entry 0 is the
    /// input, the last entry holds logits.
    fn forward_batch(&self, inputs: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.shapes.len() + 1);
        acts.push(inputs.to_vec());
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let w = &self.params[s.weight_range()];
            let prev = &acts[l];
            let mut out = vec![0.0; batch * s.outputs];
            for b in 0..batch {
                let x = &prev[b * s.inputs..(b + 1) * s.inputs];
                let z = &mut out[b * s.outputs..(b + 1) * s.outputs];
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo = dot(&w[o * s.inputs..(o + 1) * s.inputs], x);
                }
                if let Some(bo) = s.bias {
                    for (zo, bias) in z.iter_mut().zip(&self.params[bo..bo + s.outputs]) {
                        *zo += bias;
                    }
                }
                if l != last {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            acts.push(out);
        }
        acts
    }
}

/// Inference-only form of a [`Model`] in single precision. Weights are
/// stored transposed so a layer is a sum of weight rows scaled by the
/// non-zero inputs; one-hot evidence and relu zeros are skipped. Outputs
/// agree with [`Model::predict`] to about 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    layout: EncodingLayout,
    layers: Vec<CompiledLayer>,
    width: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct CompiledLayer {
    outputs: usize,
    /// `inputs x outputs` row-major.
    rows: Vec<f32>,
    bias: Vec<f32>,
}

impl Model {
    pub fn compile(&self) -> CompiledModel {
        let layers = self
            .shapes
            .iter()
            .map(|s| {
                let w = &self.params[s.weight_range()];
                let mut rows = vec![0.0; w.len()];
                for o in 0..s.outputs {
                    for i in 0..s.inputs {
                        rows[i * s.outputs + o] = w[o * s.inputs + i] as f32;
                    }
                }
                let bias = match s.bias {
                    Some(b) => self.params[b..b + s.outputs].iter().map(|&x| x as f32).collect(),
                    None => vec![0.0; s.outputs],
                };
                CompiledLayer {
                    outputs: s.outputs,
                    rows,
                    bias,
                }
            })
            .collect();
        CompiledModel {
            layout: self.layout.clone(),
            layers,
            width: self.layer_sizes.iter().copied().max().unwrap_or(0),
        }
    }
}

impl CompiledModel {
    pub fn layout(&self) -> &EncodingLayout {
        &self.layout
    }

    fn logits_f32(&self, ev: &Evidence) -> Result<Vec<f32>> {
        let offsets = self.layout.offsets();
        let cards = self.layout.cardinalities();
        let mut a = Vec::with_capacity(self.width);
        let mut z = Vec::with_capacity(self.width);
        let first = &self.layers[0];
        z.extend_from_slice(&first.bias);
        for (var, value) in ev.iter() {
            if var >= cards.len() || value >= cards[var] {
                return Err(Error::LayoutMismatch(format!(
                    "evidence {var}={value} does not fit layout of `{}`",
                    self.layout.network_name()
                )));
            }
            let k = offsets[var] + value;
            for (zo, w) in z
                .iter_mut()
                .zip(&first.rows[k * first.outputs..(k + 1) * first.outputs])
            {
                *zo += w;
            }
        }
        let mut active = Vec::with_capacity(self.width);
        for layer in &self.layers[1..] {
            core::mem::swap(&mut a, &mut z);
            active.clear();
            active.extend(a.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(k, &v)| (k, v)));
            z.clear();
            z.extend_from_slice(&layer.bias);
            accumulate_rows(&mut z, &active, &layer.rows, layer.outputs);
        }
        Ok(z)
    }

    /// Output logits for `ev`.
    pub fn logits(&self, ev: &Evidence) -> Result<Vec<f64>> {
        Ok(self.logits_f32(ev)?.into_iter().map(f64::from).collect())
    }

    /// Posterior of every variable given `ev`.
    pub fn predict(&self, ev: &Evidence) -> Result<PosteriorSet> {
        let logits = self.logits_f32(ev)?;
        let mut p = Vec::with_capacity(logits.len());
        for v in 0..self.layout.num_variables() {
            let block = &logits[self.layout.block(v)];
            let max = block.iter().fold(f32::NEG_INFINITY, |m, &x| m.max(x));
            let start = p.len();
            p.extend(block.iter().map(|&x| libm::exp(f64::from(x - max))));
            let total: f64 = p[start..].iter().sum();
            p[start..].iter_mut().for_each(|x| *x /= total);
        }
        PosteriorSet::from_flat_vec(p, self.layout.cardinalities())
    }
}

/// `z += sum_k a_k * rows[k]` over the active `(k, a_k)` pairs, four rows
/// per pass over `z`.
fn accumulate_rows(z: &mut [f32], active: &[(usize, f32)], rows: &[f32], n: usize) {
    let z = &mut z[..n];
    let row = |k: usize| &rows[k * n..(k + 1) * n];
    let mut blocks = active.chunks_exact(8);
    for b in &mut blocks {
        let r: [&[f32]; 8] = core::array::from_fn(|i| row(b[i].0));
        let a: [f32; 8] = core::array::from_fn(|i| b[i].1);
        for o in 0..n {
            let lo = (a[0] * r[0][o] + a[1] * r[1][o]) + (a[2] * r[2][o] + a[3] * r[3][o]);
            let hi = (a[4] * r[4][o] + a[5] * r[5][o]) + (a[6] * r[6][o] + a[7] * r[7][o]);
            z[o] += lo + hi;
        }
    }
    for &(k, ak) in blocks.remainder() {
        for (zo, w) in z.iter_mut().zip(row(k)) {
            *zo += ak * w;
        }
    }
}

/// Unrolled dot product; fixed summation order keeps results reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Softmax applied independently inside each variable's block.
pub fn multi_softmax(layout: &EncodingLayout, logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    for var in 0..layout.num_variables() {
        let block = &mut out[layout.block(var)];
        let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in block.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        block.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Per-block log-softmax.
pub fn log_multi_softmax(layout: &EncodingLayout, logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    for var in 0..layout.num_variables() {
        let block = &mut out[layout.block(var)];
        let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(block.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        block.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Soft-label cross-entropy `-sum y log p` of one example, summed over blocks.
pub fn cross_entropy(layout: &EncodingLayout, logits: &[f64], target: &[f64]) -> f64 {
    log_multi_softmax(layout, logits)
        .iter()
        .zip(target)
        .map(|(lp, y)| if *y == 0.0 { 0.0 } else { -y * lp })
        .sum()
}

/// Mean data term and exact gradient of the full objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGradient {
    /// Mean cross-entropy plus the L2 penalty.
    pub loss: f64,
    /// Mean cross-entropy alone.
    pub data_loss: f64,
    /// Same layout as [`Model::params`].
    pub gradient: Vec<f64>,
}

/// Objective and gradient over a non-empty batch.
pub fn loss(model: &Model, l2_lambda: f64, batch: &[&Example]) -> Result<LossAndGradient> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("loss needs a non-empty batch".into()));
    }
    let dim = model.layer_sizes[0];
    let out_dim = *model.layer_sizes.last().unwrap_or(&0);
    let n = batch.len();
    let mut inputs = Vec::with_capacity(n * dim);
    for ex in batch {
        if ex.input.len() != dim || ex.target.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: ex.input.len(),
            });
        }
        inputs.extend_from_slice(&ex.input);
    }
    let acts = model.forward_batch(&inputs, n);
    let layout = &model.layout;
    let scale = 1.0 / n as f64;

    // dL/dlogits for the mean cross-entropy: (sum_j y_j) * p - y per block.
    let logits = &acts[acts.len() - 1];
    let mut delta = vec![0.0; n * out_dim];
    let mut data_loss = 0.0;
    for (b, ex) in batch.iter().enumerate() {
        let z = &logits[b * out_dim..(b + 1) * out_dim];
        let logp = log_multi_softmax(layout, z);
        let d = &mut delta[b * out_dim..(b + 1) * out_dim];
        for var in 0..layout.num_variables() {
            let r = layout.block(var);
            let mass: f64 = ex.target[r.clone()].iter().sum();
            for k in r {
                let y = ex.target[k];
                if y != 0.0 {
                    data_loss -= y * logp[k];
                }
                d[k] = scale * (mass * libm::exp(logp[k]) - y);
            }
        }
    }
    data_loss *= scale;

    let mut grad = vec![0.0; model.params.len()];
    for l in (0..model.shapes.len()).rev() {
        let s = model.shapes[l];
        let w = &model.params[s.weight_range()];
        let prev = &acts[l];
        {
            let gw = &mut grad[s.weight_range()];
            for b in 0..n {
                let x = &prev[b * s.inputs..(b + 1) * s.inputs];
                for o in 0..s.outputs {
                    let dz = delta[b * s.outputs + o];
                    if dz != 0.0 {
                        axpy(&mut gw[o * s.inputs..(o + 1) * s.inputs], dz, x);
                    }
                }
            }
        }
        if let Some(bo) = s.bias {
            let gb = &mut grad[bo..bo + s.outputs];
            for b in 0..n {
                for (g, dz) in gb.iter_mut().zip(&delta[b * s.outputs..(b + 1) * s.outputs]) {
                    *g += dz;
                }
            }
        }
        if l == 0 {
            break;
        }
        // Back through W, then through the relu of layer l - 1.
        let mut prev_delta = vec![0.0; n * s.inputs];
        for b in 0..n {
            let pd = &mut prev_delta[b * s.inputs..(b + 1) * s.inputs];
            for o in 0..s.outputs {
                let dz = delta[b * s.outputs + o];
                if dz != 0.0 {
                    axpy(pd, dz, &w[o * s.inputs..(o + 1) * s.inputs]);
                }
            }
            for (d, a) in pd.iter_mut().zip(&prev[b * s.inputs..(b + 1) * s.inputs]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        delta = prev_delta;
    }

    let mut penalty = 0.0;
    if l2_lambda != 0.0 {
        for s in &model.shapes {
            for k in s.weight_range() {
                let w = model.params[k];
                penalty += w * w;
                grad[k] += 2.0 * l2_lambda * w;
            }
        }
        penalty *= l2_lambda;
    }
    Ok(LossAndGradient {
        loss: data_loss + penalty,
        data_loss,
        gradient: grad,
    })
}

/// Mean cross-entropy of `examples` (no penalty), or `None` if empty.
pub fn mean_data_loss(model: &Model, examples: &[Example]) -> Option<f64> {
    if examples.is_empty() {
        return None;
    }
    let dim = model.layer_sizes[0];
    let mut total = 0.0;
    for chunk in examples.chunks(256) {
        let mut inputs = Vec::with_capacity(chunk.len() * dim);
        for ex in chunk {
            inputs.extend_from_slice(&ex.input);
        }
        let acts = model.forward_batch(&inputs, chunk.len());
        let logits = &acts[acts.len() - 1];
        let out_dim = logits.len() / chunk.len();
        for (b, ex) in chunk.iter().enumerate() {
            total += cross_entropy(&model.layout, &logits[b * out_dim..(b + 1) * out_dim], &ex.target);
        }
    }
    Some(total / examples.len() as f64)
}

/// Velocity for the momentum update, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(parameter_count: usize) -> Self {
        OptimizerState {
            velocity: vec![0.0; parameter_count],
        }
    }
}

/// `v <- mu * v - lr * grad`, then `theta <- theta + v`, in place.
pub fn momentum_step(theta: &mut [f64], velocity: &mut [f64], gradient: &[f64], learning_rate: f64, momentum: f64) {
    assert!(
        theta.len() == velocity.len() && theta.len() == gradient.len(),
        "parameter, velocity and gradient shapes must agree"
    );
    for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(gradient) {
        *v = momentum * *v - learning_rate * g;
        *t += *v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub improved: bool,
}

/// Trains a freshly initialized model; see [`train_with`].
pub fn train<R: Rng + ?Sized>(
    layout: &EncodingLayout,
    config: &ModelConfig,
    train_set: &[Example],
    validation: &[Example],
    rng: &mut R,
) -> Result<Model> {
    train_with(layout, config, train_set, validation, rng, |_| {})
}

/// Mini-batch momentum training with a reshuffle every epoch. After each
/// epoch the validation data loss is measured; the parameters with the
/// lowest validation loss are returned. Training stops after
/// `early_stop_patience` epochs without improvement or at `max_epochs`.
pub fn train_with<R: Rng + ?Sized>(
    layout: &EncodingLayout,
    config: &ModelConfig,
    train_set: &[Example],
    validation: &[Example],
    rng: &mut R,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Model> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut model = Model::init(layout, config, rng)?;
    let mut opt = OptimizerState::new(model.params.len());
    let mut best_params = model.params.clone();
    let mut best = TrainingMetadata {
        epochs_run: 0,
        best_epoch: 0,
        best_validation_loss: mean_data_loss(&model, validation).unwrap_or(f64::INFINITY),
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let lg = loss(&model, config.l2_lambda, &batch)?;
            if !lg.loss.is_finite() || lg.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    loss: lg.loss,
                });
            }
            epoch_loss += lg.data_loss * batch.len() as f64;
            momentum_step(
                &mut model.params,
                &mut opt.velocity,
                &lg.gradient,
                config.learning_rate,
                config.momentum,
            );
        }
        let val = mean_data_loss(&model, validation).unwrap_or(f64::INFINITY);
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                loss: val,
            });
        }
        let improved = val < best.best_validation_loss;
        if improved {
            best.best_validation_loss = val;
            best.best_epoch = epoch;
            best_params.copy_from_slice(&model.params);
            stale = 0;
        } else {
            stale += 1;
        }
        best.epochs_run = epoch;
        on_epoch(&EpochReport {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            validation_loss: val,
            improved,
        });
        if stale >= config.early_stop_patience {
            break;
        }
    }
    model.params = best_params;
    model.metadata = best;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn example(layout: &EncodingLayout, input: Vec<f64>, target: Vec<f64>) -> Example {
        Example {
            id: 0,
            evidence: layout.decode_evidence(&input).unwrap_or_default(),
            input,
            target,
            evidence_probability: 1.0,
        }
    }

    #[test]
    fn zero_model_gives_zero_logits_and_uniform_posteriors() {
        let layout = EncodingLayout::new("n", vec![2, 4]);
        let model = Model::zeros(&layout, &ModelConfig::with_hidden(6, &[5, 3])).unwrap();
        assert!(model
            .forward(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
            .unwrap()
            .iter()
            .all(|&z| z == 0.0));
        let post = model.predict(&Evidence::new().with(0, 1)).unwrap();
        assert_eq!(post.get(0), &[0.5, 0.5]);
        assert_eq!(post.get(1), &[0.25; 4]);
    }

    #[test]
    fn relu_clips_hidden_layer() {
        let layout = EncodingLayout::new("n", vec![2]);
        let mut model = Model::zeros(&layout, &ModelConfig::with_hidden(2, &[2])).unwrap();
        // Hidden = relu(I x); output = I hidden.
        model.params_mut()[0] = 1.0;
        model.params_mut()[3] = 1.0;
        model.params_mut()[6] = 1.0;
        model.params_mut()[9] = 1.0;
        assert_eq!(model.forward(&[-1.0, 2.0]).unwrap(), [0.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let layout = EncodingLayout::new("n", vec![2]);
        let model = Model::zeros(&layout, &ModelConfig::with_hidden(2, &[2])).unwrap();
        assert_eq!(
            model.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        );
        assert!(matches!(
            model.predict(&Evidence::new().with(3, 0)),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn softmax_uniform_and_shift_invariant() {
        let layout = EncodingLayout::new("n", vec![4, 2]);
        let p = multi_softmax(&layout, &[0.0; 6]);
        assert_eq!(&p[..4], &[0.25; 4]);
        let a = multi_softmax(&layout, &[0.3, -1.0, 2.0, 0.5, 1.0, 4.0]);
        let b = multi_softmax(&layout, &[10.3, 9.0, 12.0, 10.5, 1.0, 4.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_does_not_overflow() {
        let layout = EncodingLayout::new("n", vec![2]);
        assert_eq!(multi_softmax(&layout, &[1000.0, 0.0]), [1.0, 0.0]);
    }

    #[test]
    fn perfect_prediction_has_zero_data_loss() {
        let layout = EncodingLayout::new("n", vec![2]);
        assert!(cross_entropy(&layout, &[1000.0, 0.0], &[1.0, 0.0]).abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_costs_log_j() {
        let layout = EncodingLayout::new("n", vec![3, 2]);
        let ce = cross_entropy(&layout, &[0.0; 5], &[0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!((ce - (libm::log(3.0) + libm::log(2.0))).abs() < 1e-12);
    }

    #[test]
    fn momentum_degenerate_cases() {
        let mut theta = [1.0, 2.0];
        let mut v = [0.5, -0.5];
        momentum_step(&mut theta, &mut v, &[1.0, 2.0], 0.1, 0.0);
        assert_eq!(theta, [0.9, 1.8]);

        let mut theta = [1.0, 2.0];
        let mut v = [0.5, -0.5];
        momentum_step(&mut theta, &mut v, &[0.0, 0.0], 0.1, 0.9);
        assert_eq!(theta, [1.0 + 0.9 * 0.5, 2.0 - 0.9 * 0.5]);
    }

    #[test]
    fn l2_step_shrinks_weights() {
        let layout = EncodingLayout::new("n", vec![2]);
        let mut cfg = ModelConfig::with_hidden(2, &[3]);
        cfg.l2_lambda = 0.1;
        let mut model = Model::init(&layout, &cfg, &mut RngSeed(1).rng()).unwrap();
        // Uniform target with zero output weights gives a zero data
        // gradient; L2 alone acts.
        let out = model.shapes[1];
        model.params[out.weight_range()].iter_mut().for_each(|w| *w = 0.0);
        let ex = example(&layout, vec![0.0, 0.0], vec![0.5, 0.5]);
        let before = model.params.clone();
        let lg = loss(&model, cfg.l2_lambda, &[&ex]).unwrap();
        let mut v = vec![0.0; before.len()];
        momentum_step(&mut model.params, &mut v, &lg.gradient, 0.01, 0.9);
        let mask = model.weight_mask();
        for k in 0..before.len() {
            if mask[k] && before[k] != 0.0 {
                assert!(model.params[k].abs() < before[k].abs());
            }
        }
    }

    #[test]
    fn weight_count_of_reference_architecture() {
        let mut cfg = ModelConfig::with_hidden(105, &[100, 150, 100, 50]);
        assert_eq!(cfg.weight_count(), 50750);
        cfg.use_bias = false;
        assert_eq!(cfg.parameter_count(), 50750);
    }

    #[test]
    fn config_validation() {
        let layout = EncodingLayout::new("n", vec![2]);
        assert!(ModelConfig::with_hidden(3, &[2]).validate(&layout).is_err());
        let mut cfg = ModelConfig::with_hidden(2, &[2]);
        cfg.momentum = 1.5;
        assert!(cfg.validate(&layout).is_err());
        cfg.momentum = 0.9;
        cfg.learning_rate = 0.0;
        assert!(cfg.validate(&layout).is_err());
    }
}
