//! Independent reference implementations shared by the test targets.
//! Also pulled into the CLI acceptance suite via `#[path]`.
#![allow(dead_code)]

use esad_core::dataset::BinaryLabel;
use esad_core::metrics::ScoredExample;
use esad_core::mfcc::{MfccConfig, NormStats};
use esad_core::nn::{init_model, DenseModel, Dropout};
use esad_core::quant::FixedMultiplier;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct-summation DFT power spectrum of the periodic-Hann-windowed, zero-padded frame.
pub fn naive_power_spectrum(frame: &[f32], n_fft: usize) -> Vec<f64> {
    let n = frame.len();
    let windowed: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, &s)| f64::from(s) * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (i, &x) in windowed.iter().enumerate() {
                // reduce the phase index first so the angle stays small
                let phase = 2.0 * std::f64::consts::PI * ((k * i) % n_fft) as f64 / n_fft as f64;
                re += x * phase.cos();
                im -= x * phase.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Worst relative error of `fast` against the direct DFT; bins far below the
/// spectrum peak are compared against `peak * 1e-6` instead of their own value.
pub fn spectrum_rel_error(fast: &[f64], slow: &[f64]) -> f64 {
    let peak = slow.iter().cloned().fold(0.0, f64::max);
    fast.iter()
        .zip(slow)
        .map(|(a, b)| (a - b).abs() / b.abs().max(peak * 1e-6))
        .fold(0.0, f64::max)
}

/// librosa MFCCs of a 0.5-amplitude 1 kHz sine, rows = coefficients, columns = frames.
pub fn sine_reference() -> Vec<Vec<f64>> {
    include_str!("../fixtures/sine_1khz_mfcc.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

pub fn sine_samples(freq: f64, amplitude: f64, cfg: &MfccConfig) -> Vec<f32> {
    let sr = f64::from(cfg.sample_rate);
    (0..cfg.clip_len())
        .map(|n| (amplitude * (2.0 * std::f64::consts::PI * freq * n as f64 / sr).sin()) as f32)
        .collect()
}

/// Plain f64 parameters of a dense network, copied from a model.
#[derive(Clone)]
pub struct RefNet {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl RefNet {
    pub fn from_model(m: &DenseModel) -> Self {
        Self {
            sizes: m.layer_sizes(),
            weights: m.layers.iter().map(|l| l.weights.iter().map(|&w| f64::from(w)).collect()).collect(),
            biases: m.layers.iter().map(|l| l.bias.iter().map(|&b| f64::from(b)).collect()).collect(),
        }
    }

    /// Pre-activations of every layer, applying the given dropout multipliers after each hidden ReLU.
    pub fn pre_activations(&self, x: &[f64], masks: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut a = x.to_vec();
        let n = self.sizes.len() - 1;
        for l in 0..n {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let z: Vec<f64> = (0..fan_out)
                .map(|o| self.biases[l][o] + (0..fan_in).map(|i| self.weights[l][o * fan_in + i] * a[i]).sum::<f64>())
                .collect();
            if l + 1 < n {
                a = z.iter().zip(&masks[l]).map(|(&v, &m)| v.max(0.0) * m).collect();
            }
            out.push(z);
        }
        out
    }

    pub fn probability(&self, x: &[f64], masks: &[Vec<f64>]) -> f64 {
        let z = self.pre_activations(x, masks).last().unwrap()[0];
        1.0 / (1.0 + (-z).exp())
    }

    pub fn loss(&self, x: &[f64], masks: &[Vec<f64>], y: f64) -> f64 {
        let p = self.probability(x, masks);
        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    }
}

/// Runs the central-difference check on one random tiny model with dropout
/// active. Returns the worst relative error over entries whose absolute error
/// exceeds 1e-6, and the worst absolute error; `None` if the sample sits too
/// close to a ReLU kink to be checked.
pub fn gradient_check(seed: u64) -> Option<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = vec![rng.random_range(2..7), rng.random_range(2..6), rng.random_range(2..5), 1];
    let mut model = init_model(&sizes, seed, NormStats::identity(sizes[0]), MfccConfig::default()).unwrap();
    for layer in &mut model.layers {
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3f32..0.3));
    }
    let x: Vec<f32> = (0..sizes[0]).map(|_| rng.random_range(-1.5f32..1.5)).collect();
    let y = if rng.random_bool(0.5) { BinaryLabel::Anomalous } else { BinaryLabel::Normal };

    let mut drop_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let cache = model.forward(&x, Dropout::On { rate: 0.2, rng: &mut drop_rng }).unwrap();
    let grads = model.backward(&cache, y).unwrap();

    let net = RefNet::from_model(&model);
    let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
    let pre = net.pre_activations(&xf, &cache.masks);
    let h = 1e-4;
    // a perturbation of h moves pre-activations by at most h * (1 + sum |a|); stay clear of kinks
    if pre[..pre.len() - 1].iter().flatten().any(|z| z.abs() < 0.05) {
        return None;
    }

    let target = y.target();
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    for l in 0..net.weights.len() {
        for (kind, n) in [(0, net.weights[l].len()), (1, net.biases[l].len())] {
            for i in 0..n {
                let mut plus = net.clone();
                let mut minus = net.clone();
                if kind == 0 {
                    plus.weights[l][i] += h;
                    minus.weights[l][i] -= h;
                } else {
                    plus.biases[l][i] += h;
                    minus.biases[l][i] -= h;
                }
                let numeric = (plus.loss(&xf, &cache.masks, target) - minus.loss(&xf, &cache.masks, target)) / (2.0 * h);
                let analytic = if kind == 0 { grads.layers[l].weights[i] } else { grads.layers[l].bias[i] };
                let abs = (analytic - numeric).abs();
                worst_abs = worst_abs.max(abs);
                if abs > 1e-6 {
                    worst_rel = worst_rel.max(abs / analytic.abs().max(numeric.abs()));
                }
            }
        }
    }
    Some((worst_rel, worst_abs))
}

/// Mann-Whitney U statistic divided by `P * N`; ties count one half.
pub fn mann_whitney_auc(examples: &[ScoredExample]) -> f64 {
    let pos: Vec<f64> = examples.iter().filter(|e| e.label == BinaryLabel::Anomalous).map(|e| e.score).collect();
    let neg: Vec<f64> = examples.iter().filter(|e| e.label == BinaryLabel::Normal).map(|e| e.score).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Mean over positives of the precision among all examples scored at least as high.
pub fn rank_average_precision(examples: &[ScoredExample]) -> f64 {
    let positives: Vec<f64> = examples.iter().filter(|e| e.label == BinaryLabel::Anomalous).map(|e| e.score).collect();
    let total: f64 = positives
        .iter()
        .map(|&s| {
            let above = examples.iter().filter(|e| e.score >= s);
            let (n, tp) = above.fold((0usize, 0usize), |(n, tp), e| (n + 1, tp + usize::from(e.label == BinaryLabel::Anomalous)));
            tp as f64 / n as f64
        })
        .sum();
    total / positives.len() as f64
}

/// Random scored dataset with both classes present; a third of the scores are
/// drawn from a small grid so ties are common.
pub fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredExample> {
    loop {
        let ex: Vec<ScoredExample> = (0..n)
            .map(|_| {
                let label = if rng.random_bool(0.4) { BinaryLabel::Anomalous } else { BinaryLabel::Normal };
                let shift = if label == BinaryLabel::Anomalous { 0.15 } else { 0.0 };
                let score = if rng.random_bool(0.33) {
                    f64::from(rng.random_range(0..10u8)) / 10.0
                } else {
                    (rng.random::<f64>() * 0.85 + shift).min(1.0)
                };
                ScoredExample::new(score, label)
            })
            .collect();
        let p = ex.iter().filter(|e| e.label == BinaryLabel::Anomalous).count();
        if p > 0 && p < n {
            return ex;
        }
    }
}

/// Real-arithmetic requantization: `clamp(round_half_away(acc * m) + zp, -128, 127)`.
pub fn requantize_reference(acc: i32, m: f64, zp: i32) -> i32 {
    let v = (f64::from(acc) * m).round() + f64::from(zp);
    v.clamp(-128.0, 127.0) as i32
}

/// Multiplier and accumulator drawn the way they occur in practice: `m` in
/// `(1e-6, 1)` log-uniform, `acc` spanning `|acc| < 2^31`.
pub fn random_requant_case(rng: &mut ChaCha8Rng) -> (i32, f64, i32) {
    let m = 10f64.powf(rng.random_range(-6.0..0.0));
    let bits = rng.random_range(1..32u32);
    let acc = rng.random_range(-(1i64 << (bits - 1))..(1i64 << (bits - 1))) as i32;
    let zp = rng.random_range(-128..=127);
    (acc, m, zp)
}

pub fn fixed(m: f64) -> FixedMultiplier {
    FixedMultiplier::from_real(m).unwrap()
}
