//! Post-training int8 quantization and the integer inference kernel.
//!
//! Weights are per-tensor symmetric (`zero_point = 0`, range ±127), activations
//! per-tensor affine with min/max calibration. Biases are int32 at scale
//! `input_scale * weight_scale`. Between input quantization and the final
//! dequantization every operation is integer arithmetic; rounding is
//! half-away-from-zero everywhere.

use half::f16;
use thiserror::Error;

use crate::mfcc::{MfccConfig, NormStats};
use crate::nn::{sigmoid, Activation, DenseModel};

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("representative set is empty")]
    EmptyRepresentativeSet,
    #[error("calibration has {got} activation tensors, model needs {expected}")]
    ParamsMismatch { expected: usize, got: usize },
    #[error("input has {actual} values, model expects {expected}")]
    InputSize { expected: usize, actual: usize },
    #[error("non-finite input value at index {0}")]
    NonFiniteInput(usize),
    #[error("multiplier {0} cannot be represented as a fixed-point value")]
    BadMultiplier(f64),
    #[error("layer {layer}: worst-case accumulator {bound} exceeds i32")]
    AccumulatorOverflow { layer: usize, bound: i64 },
    #[error("percentile {0} must be in (50, 100]")]
    BadPercentile(f64),
    #[error(transparent)]
    Net(#[from] crate::nn::NetError),
}

pub type Result<T> = std::result::Result<T, QuantError>;

/// Round half away from zero (what `f64::round` does).
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// `real ≈ scale * (q - zero_point)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorQuant {
    pub scale: f32,
    pub zero_point: i32,
}

impl TensorQuant {
    /// Affine int8 parameters covering `[min, max]`, widened to contain 0.
    pub fn from_range(min: f64, max: f64) -> Self {
        let (mut lo, mut hi) = (min.min(0.0), max.max(0.0));
        if hi - lo <= 0.0 {
            lo -= 1e-3;
            hi += 1e-3;
        }
        let scale = ((hi - lo) / 255.0) as f32;
        let zero_point = round_half_away(-128.0 - lo / f64::from(scale)).clamp(-128.0, 127.0) as i32;
        Self { scale, zero_point }
    }

    pub fn quantize(&self, x: f64) -> i8 {
        (round_half_away(x / f64::from(self.scale)) + f64::from(self.zero_point)).clamp(-128.0, 127.0) as i8
    }

    pub fn dequantize(&self, q: i32) -> f64 {
        f64::from(self.scale) * f64::from(q - self.zero_point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    MinMax,
    /// Clip each tensor to its `[100 - p, p]` percentile range.
    Percentile(f64),
}

/// Calibrated activation ranges and their int8 parameters. Index 0 is the
/// model input, index `i + 1` the output of layer `i` (after ReLU for hidden layers).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantParams {
    pub ranges: Vec<(f64, f64)>,
    pub activations: Vec<TensorQuant>,
}

fn activation_trace(model: &DenseModel, x: &[f32]) -> Result<Vec<Vec<f64>>> {
    // Mirrors DenseModel::logit but keeps every intermediate tensor.
    if x.len() != model.input_dim() {
        return Err(QuantError::InputSize { expected: model.input_dim(), actual: x.len() });
    }
    let mut trace = vec![x.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>()];
    for layer in &model.layers {
        let prev = trace.last().unwrap();
        let out: Vec<f64> = (0..layer.out_dim)
            .map(|o| {
                let z: f64 = layer.row(o).iter().zip(prev).map(|(&w, &a)| f64::from(w) * a).sum::<f64>()
                    + f64::from(layer.bias[o]);
                if layer.activation == Activation::Relu {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect();
        trace.push(out);
    }
    Ok(trace)
}

fn percentile_range(values: &mut [f64], p: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let pick = |q: f64| {
        let idx = (q / 100.0 * (values.len() - 1) as f64).round() as usize;
        values[idx.min(values.len() - 1)]
    };
    (pick(100.0 - p), pick(p))
}

/// Records per-tensor activation ranges over a representative set.
pub fn calibrate<V: AsRef<[f32]>>(model: &DenseModel, rep_set: &[V], mode: Calibration) -> Result<QuantParams> {
    if rep_set.is_empty() {
        return Err(QuantError::EmptyRepresentativeSet);
    }
    if let Calibration::Percentile(p) = mode {
        if !(p > 50.0 && p <= 100.0) {
            return Err(QuantError::BadPercentile(p));
        }
    }
    let n_tensors = model.layers.len() + 1;
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n_tensors];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); n_tensors];
    for x in rep_set {
        let x = x.as_ref();
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(QuantError::NonFiniteInput(i));
        }
        for (t, values) in activation_trace(model, x)?.into_iter().enumerate() {
            for &v in &values {
                ranges[t].0 = ranges[t].0.min(v);
                ranges[t].1 = ranges[t].1.max(v);
            }
            if matches!(mode, Calibration::Percentile(_)) {
                samples[t].extend(values);
            }
        }
    }
    if let Calibration::Percentile(p) = mode {
        for (range, values) in ranges.iter_mut().zip(samples.iter_mut()) {
            *range = percentile_range(values, p);
        }
    }
    let activations = ranges.iter().map(|&(lo, hi)| TensorQuant::from_range(lo, hi)).collect();
    Ok(QuantParams { ranges, activations })
}

/// Fixed-point representation `mantissa * 2^(-31 - shift)`, mantissa in `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedMultiplier {
    pub mantissa: i32,
    pub shift: i32,
}

impl FixedMultiplier {
    pub fn from_real(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(QuantError::BadMultiplier(m));
        }
        // m = f * 2^e with f in [0.5, 1)
        let mut e = m.log2().floor() as i32 + 1;
        let mut f = m / 2f64.powi(e);
        while f >= 1.0 {
            f /= 2.0;
            e += 1;
        }
        while f < 0.5 {
            f *= 2.0;
            e -= 1;
        }
        let mut mantissa = round_half_away(f * 2f64.powi(31)) as i64;
        if mantissa == 1 << 31 {
            mantissa = 1 << 30;
            e += 1;
        }
        Ok(Self { mantissa: mantissa as i32, shift: -e })
    }

    pub fn to_real(self) -> f64 {
        f64::from(self.mantissa) * 2f64.powi(-31 - self.shift)
    }
}

/// Integer rescale of an accumulator: `clamp(round(acc * M) + zp, -128, 127)`.
pub fn requantize(acc: i32, multiplier: FixedMultiplier, out_zero_point: i32) -> i8 {
    let prod = i64::from(acc) * i64::from(multiplier.mantissa);
    let total_shift = 31 + multiplier.shift;
    let scaled: i64 = if total_shift <= 0 {
        let factor = 1i64.checked_shl((-total_shift) as u32).unwrap_or(i64::MAX);
        prod.saturating_mul(factor)
    } else if total_shift >= 63 {
        // |prod| < 2^62, so the quotient rounds to 0.
        0
    } else {
        let half = 1i64 << (total_shift - 1);
        if prod >= 0 {
            (prod + half) >> total_shift
        } else {
            -((-prod + half) >> total_shift)
        }
    };
    scaled.saturating_add(i64::from(out_zero_point)).clamp(-128, 127) as i8
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`, each in `[-127, 127]`.
    pub weights: Vec<i8>,
    pub bias: Vec<i32>,
    pub input: TensorQuant,
    pub weight: TensorQuant,
    pub bias_quant: TensorQuant,
    pub output: TensorQuant,
    pub activation: Activation,
    pub multiplier: FixedMultiplier,
}

impl QuantizedLayer {
    /// Assembles a layer from stored tensors, deriving the requantization multiplier.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<i8>,
        bias: Vec<i32>,
        input: TensorQuant,
        weight: TensorQuant,
        output: TensorQuant,
        activation: Activation,
    ) -> Result<Self> {
        let bias_scale = f64::from(input.scale) * f64::from(weight.scale);
        let multiplier = FixedMultiplier::from_real(bias_scale / f64::from(output.scale))?;
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            input,
            weight,
            bias_quant: TensorQuant { scale: bias_scale as f32, zero_point: 0 },
            output,
            activation,
            multiplier,
        })
    }

    /// Largest possible `|accumulator|` over all int8 inputs.
    pub fn accumulator_bound(&self) -> i64 {
        // |x_q - zp| <= 255 for any int8 x_q and zp.
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                row.iter().map(|&w| i64::from(w).abs()).sum::<i64>() * 255 + i64::from(self.bias[o]).abs()
            })
            .max()
            .unwrap_or(0)
    }

    /// Integer-only layer: int8 in, int8 out.
    pub fn run(&self, input: &[i8]) -> Vec<i8> {
        let zp_in = self.input.zero_point;
        let zp_out = self.output.zero_point;
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let acc = row
                    .iter()
                    .zip(input)
                    .fold(self.bias[o], |acc, (&w, &x)| acc + i32::from(w) * (i32::from(x) - zp_in));
                let q = requantize(acc, self.multiplier, zp_out);
                if self.activation == Activation::Relu {
                    q.max(zp_out as i8)
                } else {
                    q
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub layers: Vec<QuantizedLayer>,
    /// Stored at half precision in model files; values here are already f16-exact.
    pub norm_stats: NormStats,
    pub mfcc: MfccConfig,
}

/// Rounds every statistic to the nearest f16 value (std kept positive).
pub fn round_stats_to_f16(stats: &NormStats) -> NormStats {
    let r = |v: f64| f16::from_f64(v).to_f64();
    NormStats {
        mean: stats.mean.iter().map(|&m| r(m)).collect(),
        std: stats.std.iter().map(|&s| r(s).max(f16::MIN_POSITIVE_SUBNORMAL.to_f64())).collect(),
    }
}

/// Symmetric per-tensor int8 weights: `scale = max|w| / 127`.
pub fn quantize_tensor_symmetric(values: &[f32]) -> (Vec<i8>, f32) {
    let max_abs = values.iter().fold(0.0f64, |m, &w| m.max(f64::from(w).abs()));
    if max_abs == 0.0 {
        return (vec![0; values.len()], 1.0);
    }
    let scale = (max_abs / 127.0) as f32;
    let q = values
        .iter()
        .map(|&w| round_half_away(f64::from(w) / f64::from(scale)).clamp(-127.0, 127.0) as i8)
        .collect();
    (q, scale)
}

/// Builds the int8 model from a float model and its calibration.
pub fn quantize_weights(model: &DenseModel, qparams: &QuantParams) -> Result<QuantizedModel> {
    let expected = model.layers.len() + 1;
    if qparams.activations.len() != expected {
        return Err(QuantError::ParamsMismatch { expected, got: qparams.activations.len() });
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let (weights, w_scale) = quantize_tensor_symmetric(&layer.weights);
        let input = qparams.activations[i];
        let bias_scale = f64::from(input.scale) * f64::from(w_scale);
        let bias = layer
            .bias
            .iter()
            .map(|&b| round_half_away(f64::from(b) / bias_scale).clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32)
            .collect();
        let q = QuantizedLayer::new(
            layer.in_dim,
            layer.out_dim,
            weights,
            bias,
            input,
            TensorQuant { scale: w_scale, zero_point: 0 },
            qparams.activations[i + 1],
            layer.activation,
        )?;
        let bound = q.accumulator_bound();
        if bound > i64::from(i32::MAX) {
            return Err(QuantError::AccumulatorOverflow { layer: i, bound });
        }
        layers.push(q);
    }
    Ok(QuantizedModel { layers, norm_stats: round_stats_to_f16(&model.norm_stats), mfcc: model.mfcc })
}

impl QuantizedModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Quantizes a normalized input with the first layer's input parameters.
    pub fn quantize_input(&self, x: &[f32]) -> Result<Vec<i8>> {
        if x.len() != self.input_dim() {
            return Err(QuantError::InputSize { expected: self.input_dim(), actual: x.len() });
        }
        let params = self.layers[0].input;
        x.iter()
            .enumerate()
            .map(|(i, &v)| if v.is_finite() { Ok(params.quantize(f64::from(v))) } else { Err(QuantError::NonFiniteInput(i)) })
            .collect()
    }

    /// Runs all layers on an already-quantized input; returns the int8 logit.
    pub fn run_integer(&self, input: &[i8]) -> i8 {
        let mut a = input.to_vec();
        for layer in &self.layers {
            a = layer.run(&a);
        }
        a[0]
    }

    pub fn logit(&self, x: &[f32]) -> Result<f64> {
        let q = self.run_integer(&self.quantize_input(x)?);
        Ok(self.layers.last().unwrap().output.dequantize(i32::from(q)))
    }

    /// Anomaly probability for a normalized input.
    pub fn predict(&self, x: &[f32]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }
}

/// Convenience wrapper matching the float `predict`.
pub fn quantized_forward(qm: &QuantizedModel, x: &[f32]) -> Result<f64> {
    qm.predict(x)
}
