use esad_core::mfcc::{MfccConfig, NormStats};
use esad_core::nn::{init_default_model, init_model, DenseModel};
use esad_core::quant::{
    calibrate, quantize_tensor_symmetric, quantize_weights, requantize, Calibration, FixedMultiplier, QuantError,
    QuantizedModel, TensorQuant,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

mod oracles;

#[test]
fn requantize_within_one_lsb_of_real_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut exact = 0;
    for _ in 0..10_000 {
        let (acc, m, zp) = oracles::random_requant_case(&mut rng);
        let got = i32::from(requantize(acc, oracles::fixed(m), zp));
        let want = oracles::requantize_reference(acc, m, zp);
        assert!((got - want).abs() <= 1, "acc {acc} m {m} zp {zp}: {got} vs {want}");
        exact += usize::from(got == want);
    }
    assert!(exact > 9_900, "only {exact} exact matches");
}

#[test]
fn requantize_examples() {
    let half = FixedMultiplier::from_real(0.5).unwrap();
    assert_eq!(half.to_real(), 0.5);
    assert_eq!(requantize(100, half, 0), 50);
    assert_eq!(requantize(0, oracles::fixed(0.0123), -17), -17);
    assert_eq!(requantize(3, half, 0), 2);
    assert_eq!(requantize(-3, half, 0), -2);
    assert_eq!(requantize(1_000_000, half, 0), 127);
    assert_eq!(requantize(-1_000_000, half, 0), -128);
    for m in [1e-9, 3e-4, 0.25, 0.999_999, 1.0, 7.5] {
        let f = FixedMultiplier::from_real(m).unwrap();
        assert!((1 << 30..=i32::MAX).contains(&f.mantissa));
        assert!((f.to_real() - m).abs() / m < 1e-9);
    }
    assert!(matches!(FixedMultiplier::from_real(0.0), Err(QuantError::BadMultiplier(_))));
}

#[test]
fn affine_parameters_from_range() {
    let q = TensorQuant::from_range(0.0, 6.35);
    assert_eq!(q.scale, (6.35f64 / 255.0) as f32);
    assert!((f64::from(q.scale) - 0.0249).abs() < 5e-5);
    assert_eq!(q.zero_point, -128);
    let flat = TensorQuant::from_range(2.0, 2.0);
    assert!(flat.scale > 0.0);
    let zero = TensorQuant::from_range(0.0, 0.0);
    assert!(zero.scale > 0.0 && zero.dequantize(zero.zero_point) == 0.0);
    let mixed = TensorQuant::from_range(-1.0, 3.0);
    assert_eq!(mixed.dequantize(mixed.zero_point), 0.0);
}

#[test]
fn symmetric_weights() {
    let (q, s) = quantize_tensor_symmetric(&[-1.27, 0.0, 1.27]);
    assert_eq!(q, vec![-127, 0, 127]);
    assert!((f64::from(s) - 0.01).abs() < 1e-9);
    let (q, s) = quantize_tensor_symmetric(&[0.0; 4]);
    assert_eq!((q, s), (vec![0; 4], 1.0));
}

#[test]
fn default_architecture_cannot_overflow_int32() {
    // worst case per output: 416 inputs, |w_q| <= 127, |x_q - zp| <= 255
    let worst_products: i64 = 416 * 127 * 255;
    assert!(worst_products * 100 < i64::from(i32::MAX), "less than 100x headroom");

    let model = init_default_model(1, NormStats::identity(416), MfccConfig::default()).unwrap();
    let qm = quantized(&model, 300, 4);
    for layer in &qm.layers {
        let bound = layer.accumulator_bound();
        assert!(bound < i64::from(i32::MAX), "bound {bound}");
        assert!(layer.weights.iter().all(|&w| w != i8::MIN));
    }
}

fn gaussian_set(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..dim).map(|_| d.sample(&mut rng) as f32).collect()).collect()
}

fn quantized(model: &DenseModel, n: usize, seed: u64) -> QuantizedModel {
    let rep = gaussian_set(n, model.input_dim(), seed);
    quantize_weights(model, &calibrate(model, &rep, Calibration::MinMax).unwrap()).unwrap()
}

#[test]
fn weight_round_trip_within_half_step() {
    let model = init_default_model(5, NormStats::identity(416), MfccConfig::default()).unwrap();
    let qm = quantized(&model, 120, 1);
    for (fl, ql) in model.layers.iter().zip(&qm.layers) {
        let s = f64::from(ql.weight.scale);
        for (&w, &q) in fl.weights.iter().zip(&ql.weights) {
            assert!((f64::from(w) - f64::from(q) * s).abs() <= s / 2.0 + 1e-12);
        }
        assert_eq!(ql.weight.zero_point, 0);
        assert_eq!(ql.bias_quant.scale, (f64::from(ql.input.scale) * f64::from(ql.weight.scale)) as f32);
    }
}

#[test]
fn calibration_subset_agrees_with_full_set() {
    let model = init_default_model(2, NormStats::identity(416), MfccConfig::default()).unwrap();
    let full = gaussian_set(3000, 416, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let subset: Vec<&Vec<f32>> = (0..500).map(|_| &full[rng.random_range(0..full.len())]).collect();
    let subset: Vec<Vec<f32>> = subset.into_iter().cloned().collect();
    let a = calibrate(&model, &full, Calibration::MinMax).unwrap();
    let b = calibrate(&model, &subset, Calibration::MinMax).unwrap();
    for (qa, qb) in a.activations.iter().zip(&b.activations) {
        let ratio = f64::from(qb.scale) / f64::from(qa.scale);
        assert!((0.8..=1.2).contains(&ratio), "scale ratio {ratio}");
    }
    assert!(matches!(calibrate(&model, &Vec::<Vec<f32>>::new(), Calibration::MinMax), Err(QuantError::EmptyRepresentativeSet)));
    let p = calibrate(&model, &subset, Calibration::Percentile(99.9)).unwrap();
    assert!(p.ranges[0].1 <= b.ranges[0].1);
}

#[test]
fn quantized_logit_tracks_float_logit() {
    let model = init_model(&[12, 10, 6, 1], 7, NormStats::identity(12), MfccConfig::default()).unwrap();
    let qm = quantized(&model, 400, 9);
    let bound = 4.0 * qm.layers.iter().map(|l| f64::from(l.output.scale)).sum::<f64>();
    for x in gaussian_set(1000, 12, 10) {
        let f = model.logit(&x).unwrap();
        let q = qm.logit(&x).unwrap();
        assert!((f - q).abs() <= bound, "float {f} int8 {q} bound {bound}");
    }
}

#[test]
fn zero_weights_give_one_half() {
    let mut model = init_model(&[6, 5, 3, 1], 7, NormStats::identity(6), MfccConfig::default()).unwrap();
    for l in &mut model.layers {
        l.weights.iter_mut().for_each(|w| *w = 0.0);
    }
    let qm = quantized(&model, 100, 2);
    assert_eq!(qm.predict(&[0.3, -1.0, 2.0, 0.0, 0.1, 0.9]).unwrap(), 0.5);
    assert!(matches!(qm.predict(&[f32::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]), Err(QuantError::NonFiniteInput(0))));
}

#[test]
fn integer_path_ignores_float_parameters() {
    let model = init_model(&[16, 12, 8, 1], 3, NormStats::identity(16), MfccConfig::default()).unwrap();
    let qm = quantized(&model, 200, 5);
    let inputs: Vec<Vec<i8>> = gaussian_set(200, 16, 6).iter().map(|x| qm.quantize_input(x).unwrap()).collect();
    let clean: Vec<i8> = inputs.iter().map(|x| qm.run_integer(x)).collect();

    let mut poisoned = qm.clone();
    for l in &mut poisoned.layers {
        for t in [&mut l.input, &mut l.weight, &mut l.bias_quant, &mut l.output] {
            t.scale = f32::NAN;
        }
    }
    let after: Vec<i8> = inputs.iter().map(|x| poisoned.run_integer(x)).collect();
    assert_eq!(clean, after);
}

proptest! {
    #[test]
    fn requantize_matches_reference_everywhere(acc in any::<i32>(), exp in -20.0f64..1.0, zp in -128i32..=127) {
        let m = 2f64.powf(exp);
        let got = i32::from(requantize(acc, oracles::fixed(m), zp));
        prop_assert!((got - oracles::requantize_reference(acc, m, zp)).abs() <= 1);
    }

    #[test]
    fn activation_params_are_valid(lo in -50.0f64..50.0, width in 0.0f64..100.0) {
        let q = TensorQuant::from_range(lo, lo + width);
        prop_assert!(q.scale > 0.0);
        prop_assert!((-128..=127).contains(&q.zero_point));
        let (a, b) = (lo.min(0.0), (lo + width).max(0.0));
        let s = f64::from(q.scale);
        prop_assert!(q.dequantize(-128) <= a + s && q.dequantize(127) >= b - s);
    }
}
