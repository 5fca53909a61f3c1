//! Fully connected binary classifier (416 -> 128 -> 64 -> 1 by default).
//!
//! Parameters are stored as `f32`; products are accumulated in `f64` and
//! gradients, optimizer moments and losses are `f64`. Hidden layers use ReLU
//! followed by inverted dropout during training, the output layer a sigmoid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryLabel;
use crate::mfcc::{MfccConfig, NormStats};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input has {actual} values, model expects {expected}")]
    InputSize { expected: usize, actual: usize },
    #[error("non-finite input value at index {0}")]
    NonFiniteInput(usize),
    #[error("forward cache does not match the model: {0}")]
    CacheMismatch(String),
    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("empty {0} partition")]
    EmptyPartition(&'static str),
}

pub type Result<T> = std::result::Result<T, NetError>;

pub const DEFAULT_LAYER_SIZES: [usize; 4] = [416, 128, 64, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// Weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim], activation }
    }

    pub fn row(&self, o: usize) -> &[f32] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `W x + b` in f64.
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|o| {
                let dot: f64 = self.row(o).iter().zip(x).map(|(&w, &xi)| f64::from(w) * xi).sum();
                dot + f64::from(self.bias[o])
            })
            .collect()
    }
}

/// Trained or freshly initialized float model, self-contained with its
/// feature config and normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    pub layers: Vec<DenseLayer>,
    pub norm_stats: NormStats,
    pub mfcc: MfccConfig,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dropout mode for [`DenseModel::forward`].
pub enum Dropout<'a> {
    Off,
    On { rate: f64, rng: &'a mut ChaCha8Rng },
}

/// Activations kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// ReLU outputs of each hidden layer, before dropout.
    pub hidden: Vec<Vec<f64>>,
    /// Per-unit dropout multipliers (0 or 1/(1-rate)); all ones when dropout is off.
    pub masks: Vec<Vec<f64>>,
    pub logit: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(model: &DenseModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g = 0.0);
            l.bias.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Glorot-uniform weights, zero biases, ReLU hidden layers and a sigmoid output.
pub fn init_model(layer_sizes: &[usize], seed: u64, norm_stats: NormStats, mfcc: MfccConfig) -> Result<DenseModel> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(NetError::InvalidArchitecture(format!("bad layer sizes {layer_sizes:?}")));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(NetError::InvalidArchitecture("output layer must have one unit".into()));
    }
    if norm_stats.dim() != layer_sizes[0] {
        return Err(NetError::InvalidArchitecture(format!(
            "norm stats have {} dims, input layer {}",
            norm_stats.dim(),
            layer_sizes[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = layer_sizes.len() - 1;
    let layers = layer_sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let activation = if i + 1 == n_layers { Activation::Sigmoid } else { Activation::Relu };
            let weights = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit) as f32).collect();
            DenseLayer { in_dim: fan_in, out_dim: fan_out, weights, bias: vec![0.0; fan_out], activation }
        })
        .collect();
    Ok(DenseModel { layers, norm_stats, mfcc })
}

/// Default 416-128-64-1 model.
pub fn init_default_model(seed: u64, norm_stats: NormStats, mfcc: MfccConfig) -> Result<DenseModel> {
    init_model(&DEFAULT_LAYER_SIZES, seed, norm_stats, mfcc)
}

impl DenseModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(NetError::InputSize { expected: self.input_dim(), actual: x.len() });
        }
        x.iter()
            .enumerate()
            .map(|(i, &v)| if v.is_finite() { Ok(f64::from(v)) } else { Err(NetError::NonFiniteInput(i)) })
            .collect()
    }

    /// Output logit for a normalized input, dropout off.
    pub fn logit(&self, x: &[f32]) -> Result<f64> {
        let mut a = self.check_input(x)?;
        for layer in &self.layers {
            let mut z = layer.affine(&a);
            if layer.activation == Activation::Relu {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        Ok(a[0])
    }

    /// Anomaly probability for a normalized input, dropout off.
    pub fn predict(&self, x: &[f32]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Forward pass keeping the activations needed by [`DenseModel::backward`].
    pub fn forward(&self, x: &[f32], dropout: Dropout<'_>) -> Result<ForwardCache> {
        let input = self.check_input(x)?;
        let (rate, mut rng) = match dropout {
            Dropout::Off => (0.0, None),
            Dropout::On { rate, rng } => (rate, Some(rng)),
        };
        let keep_scale = 1.0 / (1.0 - rate);
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut masks = Vec::with_capacity(self.layers.len() - 1);
        let mut a = input.clone();
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            let relu: Vec<f64> = layer.affine(&a).into_iter().map(|v| v.max(0.0)).collect();
            let mask: Vec<f64> = match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => {
                    (0..relu.len()).map(|_| if r.random::<f64>() < rate { 0.0 } else { keep_scale }).collect()
                }
                _ => vec![1.0; relu.len()],
            };
            a = relu.iter().zip(&mask).map(|(v, m)| v * m).collect();
            hidden.push(relu);
            masks.push(mask);
        }
        let logit = self.layers[last].affine(&a)[0];
        Ok(ForwardCache { input, hidden, masks, logit, prob: sigmoid(logit) })
    }

    /// Gradients of BCE for one example, using the fused output gradient `p - y`.
    pub fn backward(&self, cache: &ForwardCache, y: BinaryLabel) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, y, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale *` the example gradient into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, y: BinaryLabel, scale: f64, grads: &mut Gradients) -> Result<()> {
        self.check_cache(cache)?;
        if grads.layers.len() != self.layers.len() {
            return Err(NetError::CacheMismatch("gradient buffer has wrong layer count".into()));
        }
        let n = self.layers.len();
        // delta at the current layer's pre-activation
        let mut delta = vec![(cache.prob - y.target()) * scale];
        for li in (0..n).rev() {
            let layer = &self.layers[li];
            let input: Vec<f64> = if li == 0 {
                cache.input.clone()
            } else {
                cache.hidden[li - 1].iter().zip(&cache.masks[li - 1]).map(|(h, m)| h * m).collect()
            };
            let g = &mut grads.layers[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &xi) in row.iter_mut().zip(&input) {
                    *gw += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            let prev_relu = &cache.hidden[li - 1];
            let prev_mask = &cache.masks[li - 1];
            let mut next = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (acc, &w) in next.iter_mut().zip(layer.row(o)) {
                    *acc += d * f64::from(w);
                }
            }
            for ((v, &r), &m) in next.iter_mut().zip(prev_relu).zip(prev_mask) {
                if r <= 0.0 {
                    *v = 0.0;
                } else {
                    *v *= m;
                }
            }
            delta = next;
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.input.len() != self.input_dim() {
            return Err(NetError::CacheMismatch(format!(
                "input has {} values, model expects {}",
                cache.input.len(),
                self.input_dim()
            )));
        }
        if cache.hidden.len() != self.layers.len() - 1 || cache.masks.len() != cache.hidden.len() {
            return Err(NetError::CacheMismatch("hidden layer count differs".into()));
        }
        for (i, (h, m)) in cache.hidden.iter().zip(&cache.masks).enumerate() {
            if h.len() != self.layers[i].out_dim || m.len() != h.len() {
                return Err(NetError::CacheMismatch(format!("hidden layer {i} width differs")));
            }
        }
        Ok(())
    }

    /// Parameter tensors paired with their gradients, in a fixed order.
    pub fn param_tensors<'a>(&'a mut self, grads: &'a Gradients) -> Vec<ParamTensor<'a>> {
        self.layers
            .iter_mut()
            .zip(&grads.layers)
            .enumerate()
            .flat_map(|(i, (layer, g))| {
                [
                    ParamTensor { name: format!("layers.{i}.weight"), values: &mut layer.weights[..], grad: &g.weights[..] },
                    ParamTensor { name: format!("layers.{i}.bias"), values: &mut layer.bias[..], grad: &g.bias[..] },
                ]
            })
            .collect()
    }
}

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: BinaryLabel) -> f64 {
    const EPS: f64 = 1e-7;
    let p = p.clamp(EPS, 1.0 - EPS);
    match y {
        BinaryLabel::Anomalous => -p.ln(),
        BinaryLabel::Normal => -(1.0 - p).ln(),
    }
}

/// A named parameter tensor and its gradient, as seen by the optimizer.
pub struct ParamTensor<'a> {
    pub name: String,
    pub values: &'a mut [f32],
    pub grad: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

/// First and second moments per tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(tensor_sizes: &[usize]) -> Self {
        Self {
            t: 0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(model: &DenseModel) -> Self {
        let sizes: Vec<usize> = model.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect();
        Self::new(&sizes)
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is non-finite.
pub fn adam_step(tensors: &mut [ParamTensor<'_>], state: &mut AdamState, cfg: &AdamConfig, lr: f64) -> Result<()> {
    if tensors.len() != state.m.len() {
        return Err(NetError::CacheMismatch(format!(
            "optimizer tracks {} tensors, got {}",
            state.m.len(),
            tensors.len()
        )));
    }
    for t in tensors.iter() {
        if t.grad.iter().any(|g| !g.is_finite()) {
            return Err(NetError::NonFiniteGradient(t.name.clone()));
        }
    }
    state.t += 1;
    let step = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(step);
    let bias2 = 1.0 - cfg.beta2.powi(step);
    for ((tensor, m), v) in tensors.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for (((p, &g), mi), vi) in tensor.values.iter_mut().zip(tensor.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *p = (f64::from(*p) - lr * m_hat / (v_hat.sqrt() + cfg.epsilon)) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValLoss,
    ValAccuracy,
}

impl Monitor {
    fn value(self, record: &EpochRecord) -> f64 {
        match self {
            Monitor::ValLoss => record.val_loss,
            Monitor::ValAccuracy => record.val_accuracy,
        }
    }

    /// Whether `current` beats `best` by more than `min_delta`.
    fn improved(self, current: f64, best: f64, min_delta: f64) -> bool {
        match self {
            Monitor::ValLoss => current < best - min_delta,
            Monitor::ValAccuracy => current > best + min_delta,
        }
    }

    fn worst(self) -> f64 {
        match self {
            Monitor::ValLoss => f64::INFINITY,
            Monitor::ValAccuracy => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub restore_best: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrPlateau {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub min_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout_rate: f64,
    pub early_stopping: EarlyStopping,
    pub lr_plateau: LrPlateau,
    pub monitor: Monitor,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 50,
            dropout_rate: 0.2,
            early_stopping: EarlyStopping { patience: 5, min_delta: 0.0, restore_best: true },
            lr_plateau: LrPlateau { factor: 0.5, patience: 3, min_lr: 1e-5, min_delta: 1e-4 },
            monitor: Monitor::ValLoss,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be at least 1");
        }
        if self.early_stopping.patience == 0 || self.lr_plateau.patience == 0 {
            return bad("patience values must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_plateau.factor > 0.0 && self.lr_plateau.factor < 1.0) {
            return bad("learning_rate must be positive and plateau factor inside (0, 1)");
        }
        Ok(())
    }
}

/// Normalized feature vectors with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<BinaryLabel>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were restored, if early stopping restored any.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc,lr";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == Self::CSV_HEADER => {}
            other => return Err(format!("bad history header: {other:?}")),
        }
        let mut epochs = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields, found {}", i + 2, f.len()));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            epochs.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                train_loss: num(f[1])?,
                train_accuracy: num(f[2])?,
                val_loss: num(f[3])?,
                val_accuracy: num(f[4])?,
                learning_rate: num(f[5])?,
            });
        }
        Ok(Self { epochs, best_epoch: None, stopped_early: false })
    }
}

/// Mean BCE and accuracy (threshold 0.5, `>=`) with dropout off.
pub fn evaluate(model: &DenseModel, set: &LabeledSet) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in set.features.iter().zip(&set.labels) {
        let p = model.predict(x)?;
        loss += bce_loss(p, y);
        correct += usize::from((p >= 0.5) == (y == BinaryLabel::Anomalous));
    }
    let n = set.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam training with per-epoch shuffling, LR-on-plateau and early stopping.
pub fn train(model: DenseModel, train_set: &LabeledSet, val_set: &LabeledSet, cfg: &TrainConfig) -> Result<(DenseModel, TrainHistory)> {
    train_with_observer(model, train_set, val_set, cfg, |_, _| {})
}

/// Like [`train`], calling `observer` after every epoch with the epoch record
/// and the weights at the end of that epoch.
pub fn train_with_observer<F>(
    mut model: DenseModel,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<(DenseModel, TrainHistory)>
where
    F: FnMut(&EpochRecord, &DenseModel),
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NetError::EmptyPartition("train"));
    }
    if val_set.is_empty() {
        return Err(NetError::EmptyPartition("validation"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::for_model(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = cfg.learning_rate;

    let mut history = TrainHistory::default();
    let mut es_best = cfg.monitor.worst();
    let mut es_wait = 0usize;
    let mut best_snapshot: Option<(usize, DenseModel)> = None;
    let mut plateau_best = cfg.monitor.worst();
    let mut plateau_wait = 0usize;

    for epoch in 0..cfg.max_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let y = train_set.labels[i];
                let dropout = if cfg.dropout_rate > 0.0 {
                    Dropout::On { rate: cfg.dropout_rate, rng: &mut rng }
                } else {
                    Dropout::Off
                };
                let cache = model.forward(&train_set.features[i], dropout)?;
                loss_sum += bce_loss(cache.prob, y);
                correct += usize::from((cache.prob >= 0.5) == (y == BinaryLabel::Anomalous));
                model.backward_into(&cache, y, scale, &mut grads)?;
            }
            let mut tensors = model.param_tensors(&grads);
            adam_step(&mut tensors, &mut adam, &cfg.adam, lr)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(NetError::Diverged { epoch, loss: train_loss });
        }
        let (val_loss, val_accuracy) = evaluate(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(NetError::Diverged { epoch, loss: val_loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            learning_rate: lr,
        };
        history.epochs.push(record);
        observer(&record, &model);
        log::info!(
            "epoch {epoch}: loss {train_loss:.4} acc {:.4} val_loss {val_loss:.4} val_acc {val_accuracy:.4} lr {lr:.2e}",
            record.train_accuracy
        );

        let monitored = cfg.monitor.value(&record);
        let es = &cfg.early_stopping;
        if cfg.monitor.improved(monitored, es_best, es.min_delta) {
            es_best = monitored;
            es_wait = 0;
            if es.restore_best {
                best_snapshot = Some((epoch, model.clone()));
            }
        } else {
            es_wait += 1;
        }

        let pl = &cfg.lr_plateau;
        if cfg.monitor.improved(monitored, plateau_best, pl.min_delta) {
            plateau_best = monitored;
            plateau_wait = 0;
        } else {
            plateau_wait += 1;
            if plateau_wait >= pl.patience {
                if lr > pl.min_lr {
                    lr = (lr * pl.factor).max(pl.min_lr);
                    log::info!("epoch {epoch}: reducing learning rate to {lr:.2e}");
                }
                plateau_wait = 0;
            }
        }

        if es_wait >= es.patience {
            history.stopped_early = true;
            break;
        }
    }

    if let Some((epoch, best)) = best_snapshot {
        history.best_epoch = Some(epoch);
        model = best;
    }
    Ok((model, history))
}
