//! MFCC front end: framing, Hann-windowed power spectrum, HTK mel filterbank,
//! log compression and orthonormal DCT-II, plus flattening and standardization
//! of the resulting 13x32 feature map.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid MFCC config: {0}")]
    InvalidConfig(String),
    #[error("signal has {len} samples, shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("clip is at {actual} Hz, expected {expected} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("mel filter {index} spans less than one FFT bin")]
    FilterTooNarrow { index: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need at least {needed} vectors, got {got}")]
    NotEnoughVectors { needed: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// All knobs of the MFCC front end. Defaults give a 13x32 map from a
/// 10,560-sample clip at 16 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub n_mfcc: usize,
    pub n_frames: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 640,
            hop: 320,
            fft_size: 1024,
            n_mels: 40,
            fmin: 0.0,
            fmax: 8_000.0,
            n_mfcc: 13,
            n_frames: 32,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if self.sample_rate == 0 || self.hop == 0 || self.n_mels == 0 || self.n_mfcc == 0 || self.n_frames == 0 {
            return bad("sample_rate, hop, n_mels, n_mfcc and n_frames must be positive".into());
        }
        if !(self.hop <= self.frame_len && self.frame_len <= self.fft_size) {
            return bad(format!(
                "need hop <= frame_len <= fft_size, got {} / {} / {}",
                self.hop, self.frame_len, self.fft_size
            ));
        }
        if self.n_mfcc > self.n_mels {
            return bad(format!("n_mfcc {} exceeds n_mels {}", self.n_mfcc, self.n_mels));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= f64::from(self.sample_rate) / 2.0) {
            return bad(format!("need 0 <= fmin < fmax <= sample_rate/2, got {} / {}", self.fmin, self.fmax));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Number of spectrum bins, `fft_size / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Samples needed for exactly `n_frames` frames.
    pub fn clip_len(&self) -> usize {
        self.frame_len + (self.n_frames - 1) * self.hop
    }

    /// Flattened feature length, `n_mfcc * n_frames`.
    pub fn feature_len(&self) -> usize {
        self.n_mfcc * self.n_frames
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Splits a signal into overlapping frames. Frame `i` covers `[i*hop, i*hop + frame_len)`.
pub fn frame_signal<'a>(samples: &'a [f32], cfg: &MfccConfig) -> Result<Vec<&'a [f32]>> {
    if samples.len() < cfg.frame_len {
        return Err(FeatureError::TooShort { len: samples.len(), frame_len: cfg.frame_len });
    }
    let count = (samples.len() - cfg.frame_len) / cfg.hop + 1;
    Ok((0..count).map(|i| &samples[i * cfg.hop..i * cfg.hop + cfg.frame_len]).collect())
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Triangular filters with unit peaks, centers equally spaced in mel between
/// `fmin` and `fmax`. Returns `n_mels` rows of `n_bins` weights.
pub fn mel_filterbank(cfg: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.fft_size as f64;
    let (mel_lo, mel_hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();

    let mut bank = Vec::with_capacity(cfg.n_mels);
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        if right - left < bin_hz {
            return Err(FeatureError::FilterTooNarrow { index: m });
        }
        let row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let rising = (f - left) / (center - left);
                let falling = (right - f) / (right - center);
                rising.min(falling).max(0.0)
            })
            .collect();
        if row.iter().all(|&w| w == 0.0) {
            return Err(FeatureError::FilterTooNarrow { index: m });
        }
        bank.push(row);
    }
    Ok(bank)
}

/// Filter center frequencies in Hz.
pub fn mel_centers(cfg: &MfccConfig) -> Vec<f64> {
    let (mel_lo, mel_hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    (1..=cfg.n_mels)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Orthonormal DCT-II basis, `n_out` rows of `n_in` entries.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
            (0..n_in)
                .map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos())
                .collect()
        })
        .collect()
}

/// 13x32 MFCC matrix stored coefficient-major: `values[c * n_frames + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub n_coeffs: usize,
    pub n_frames: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn get(&self, coeff: usize, frame: usize) -> f32 {
        self.values[coeff * self.n_frames + frame]
    }
}

/// Flattened model input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub normalized: bool,
}

/// Reusable extractor holding the FFT plan, window, filterbank and DCT basis.
pub struct MfccExtractor {
    cfg: MfccConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let filterbank = mel_filterbank(&cfg)?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            fft,
            window: hann_window(cfg.frame_len),
            filterbank,
            dct: dct_matrix(cfg.n_mfcc, cfg.n_mels),
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// `|X_k|^2` for `k = 0..=fft_size/2` of the Hann-windowed, zero-padded frame.
    pub fn power_spectrum(&self, frame: &[f32]) -> Result<Vec<f64>> {
        if frame.len() != self.cfg.frame_len {
            return Err(FeatureError::LengthMismatch { expected: self.cfg.frame_len, actual: frame.len() });
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        for ((b, &s), w) in buf.iter_mut().zip(frame).zip(&self.window) {
            b.re = f64::from(s) * w;
        }
        self.fft.process(&mut buf);
        Ok(buf[..self.cfg.n_bins()].iter().map(|c| c.norm_sqr()).collect())
    }

    /// Natural-log mel energies of one frame, floored at `log_floor`.
    pub fn log_mel(&self, frame: &[f32]) -> Result<Vec<f64>> {
        let spectrum = self.power_spectrum(frame)?;
        Ok(self
            .filterbank
            .iter()
            .map(|row| {
                let e: f64 = row.iter().zip(&spectrum).map(|(w, p)| w * p).sum();
                e.max(self.cfg.log_floor).ln()
            })
            .collect())
    }

    /// MFCC map of a clip that is already at the configured rate and length.
    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMap> {
        if clip.sample_rate != self.cfg.sample_rate {
            return Err(FeatureError::RateMismatch { expected: self.cfg.sample_rate, actual: clip.sample_rate });
        }
        let expected = self.cfg.clip_len();
        if clip.len() != expected {
            return Err(FeatureError::LengthMismatch { expected, actual: clip.len() });
        }
        let frames = frame_signal(&clip.samples, &self.cfg)?;
        let n_frames = frames.len();
        let mut values = vec![0f32; self.cfg.n_mfcc * n_frames];
        for (t, frame) in frames.iter().enumerate() {
            let log_mel = self.log_mel(frame)?;
            for (c, basis) in self.dct.iter().enumerate() {
                let v: f64 = basis.iter().zip(&log_mel).map(|(b, x)| b * x).sum();
                values[c * n_frames + t] = v as f32;
            }
        }
        Ok(FeatureMap { n_coeffs: self.cfg.n_mfcc, n_frames, values })
    }
}

/// One-shot convenience around [`MfccExtractor`].
pub fn mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<FeatureMap> {
    MfccExtractor::new(*cfg)?.extract(clip)
}

/// Per-dimension standardization statistics, fit on the training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean 0 / std 1, i.e. the identity transform.
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, values: &[f32]) -> Result<Vec<f32>> {
        if values.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch { expected: self.dim(), actual: values.len() });
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (m, s))| ((f64::from(x) - m) / s) as f32)
            .collect())
    }
}

/// Row-major flatten (coefficient outer, frame inner), optionally standardized.
pub fn flatten_and_normalize(fm: &FeatureMap, stats: Option<&NormStats>) -> Result<FeatureVector> {
    let expected = fm.n_coeffs * fm.n_frames;
    if fm.values.len() != expected {
        return Err(FeatureError::DimensionMismatch { expected, actual: fm.values.len() });
    }
    match stats {
        Some(s) => Ok(FeatureVector { values: s.apply(&fm.values)?, normalized: true }),
        None => Ok(FeatureVector { values: fm.values.clone(), normalized: false }),
    }
}

/// Per-dimension mean and population standard deviation (two-pass), std
/// floored at [`STD_FLOOR`].
pub fn fit_norm_stats<V: AsRef<[f32]>>(vectors: &[V]) -> Result<NormStats> {
    if vectors.len() < 2 {
        return Err(FeatureError::NotEnoughVectors { needed: 2, got: vectors.len() });
    }
    let dim = vectors[0].as_ref().len();
    let n = vectors.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(FeatureError::DimensionMismatch { expected: dim, actual: v.len() });
        }
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; dim];
    for v in vectors {
        for ((acc, &x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
            let d = f64::from(x) - m;
            *acc += d * d;
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    Ok(NormStats { mean, std })
}

/// Full clip-to-vector path used at inference time: resample, fix length, MFCC, flatten.
pub fn clip_to_features(extractor: &MfccExtractor, clip: &AudioClip) -> std::result::Result<FeatureMap, crate::Error> {
    let cfg = extractor.config();
    let resampled = crate::audio::resample(clip, cfg.sample_rate)?;
    let fixed = crate::audio::fix_length(&resampled, cfg.clip_len());
    Ok(extractor.extract(&fixed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MfccConfig {
        MfccConfig::default()
    }

    #[test]
    fn frame_count_closed_form_matches_enumeration() {
        let c = cfg();
        let samples = vec![0.0f32; 10_560];
        let frames = frame_signal(&samples, &c).unwrap();
        let mut enumerated = 0;
        while enumerated * c.hop + c.frame_len <= samples.len() {
            enumerated += 1;
        }
        assert_eq!(frames.len(), enumerated);
        assert_eq!(frames.len(), 32);
        assert_eq!(c.clip_len(), 10_560);
    }

    #[test]
    fn single_frame_and_too_short() {
        let c = cfg();
        let samples: Vec<f32> = (0..640).map(|i| i as f32).collect();
        let frames = frame_signal(&samples, &c).unwrap();
        assert_eq!(frames, vec![&samples[..]]);
        assert_eq!(
            frame_signal(&samples[..639], &c),
            Err(FeatureError::TooShort { len: 639, frame_len: 640 })
        );
    }

    #[test]
    fn spectrum_of_silence_is_zero() {
        let ex = MfccExtractor::new(cfg()).unwrap();
        let p = ex.power_spectrum(&[0.0; 640]).unwrap();
        assert_eq!(p.len(), 513);
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_frame_satisfies_parseval() {
        let ex = MfccExtractor::new(cfg()).unwrap();
        let p = ex.power_spectrum(&[1.0; 640]).unwrap();
        let window = hann_window(640);
        let time_energy: f64 = window.iter().map(|w| w * w).sum();
        // Full-spectrum energy from the one-sided half: bins 1..N/2-1 appear twice.
        let n = 1024.0;
        let freq_energy = (p[0] + p[512] + 2.0 * p[1..512].iter().sum::<f64>()) / n;
        assert!((freq_energy - time_energy).abs() / time_energy < 1e-6);
        let argmax = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 0);
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let ex = MfccExtractor::new(cfg()).unwrap();
        let frame: Vec<f32> = (0..640).map(|n| (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin() as f32).collect();
        let p = ex.power_spectrum(&frame).unwrap();
        let argmax = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 64);
    }

    #[test]
    fn filterbank_shape() {
        let c = cfg();
        let bank = mel_filterbank(&c).unwrap();
        assert_eq!(bank.len(), 40);
        for row in &bank {
            assert_eq!(row.len(), 513);
            assert!(row.iter().all(|&w| w >= 0.0));
            // unimodal: non-decreasing up to the peak, non-increasing after
            let peak = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
        let centers = mel_centers(&c);
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        let bin_hz = 16_000.0 / 1024.0;
        let first = (centers[0] / bin_hz).ceil() as usize;
        let last = (centers[39] / bin_hz).floor() as usize;
        for k in first..=last {
            assert!(bank.iter().map(|r| r[k]).sum::<f64>() > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn first_center_follows_mel_spacing() {
        let c = cfg();
        let mel_8k = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        let expected_mel = mel_8k / 41.0;
        let expected_hz = 700.0 * (10f64.powf(expected_mel / 2595.0) - 1.0);
        assert!((mel_centers(&c)[0] - expected_hz).abs() < 1e-9);
        assert!((mel_8k - 2840.023).abs() < 1e-3);
        // reference values from librosa.mel_frequencies(42, fmax=8000, htk=True)
        assert!((mel_centers(&c)[0] - 44.374_077_01).abs() < 1e-6);
        assert!((mel_centers(&c)[1] - 91.561_095_03).abs() < 1e-6);
    }

    #[test]
    fn too_many_mels_is_an_error() {
        let c = MfccConfig { n_mels: 400, n_mfcc: 13, ..cfg() };
        assert!(matches!(mel_filterbank(&c), Err(FeatureError::FilterTooNarrow { .. })));
    }

    #[test]
    fn silent_clip_gives_constant_log_mels() {
        let c = cfg();
        let map = mfcc(&AudioClip::new(vec![0.0; 10_560], 16_000), &c).unwrap();
        assert_eq!((map.n_coeffs, map.n_frames), (13, 32));
        let c0 = (1e-10f64).ln() * 40f64.sqrt();
        for t in 0..32 {
            assert!((f64::from(map.get(0, t)) - c0).abs() < 1e-4);
            for k in 1..13 {
                assert!(map.get(k, t).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn extract_checks_rate_and_length() {
        let ex = MfccExtractor::new(cfg()).unwrap();
        assert_eq!(
            ex.extract(&AudioClip::new(vec![0.0; 100], 16_000)),
            Err(FeatureError::LengthMismatch { expected: 10_560, actual: 100 })
        );
        assert_eq!(
            ex.extract(&AudioClip::new(vec![0.0; 10_560], 8_000)),
            Err(FeatureError::RateMismatch { expected: 16_000, actual: 8_000 })
        );
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(MfccConfig { hop: 700, ..cfg() }.validate().is_err());
        assert!(MfccConfig { n_mfcc: 41, ..cfg() }.validate().is_err());
        assert!(MfccConfig { fmax: 8_001.0, ..cfg() }.validate().is_err());
    }

    #[test]
    fn flatten_layout() {
        let values = (0..13).flat_map(|c| (0..32).map(move |t| (c * 100 + t) as f32)).collect();
        let fm = FeatureMap { n_coeffs: 13, n_frames: 32, values };
        let v = flatten_and_normalize(&fm, None).unwrap();
        assert_eq!(v.values.len(), 416);
        assert_eq!((v.values[0], v.values[31], v.values[32]), (0.0, 31.0, 100.0));
        assert!(!v.normalized);

        let stats = NormStats { mean: v.values.iter().map(|&x| f64::from(x)).collect(), std: vec![1.0; 416] };
        let n = flatten_and_normalize(&fm, Some(&stats)).unwrap();
        assert!(n.normalized);
        assert!(n.values.iter().all(|&x| x == 0.0));

        let short = NormStats::identity(10);
        assert_eq!(
            flatten_and_normalize(&fm, Some(&short)),
            Err(FeatureError::DimensionMismatch { expected: 10, actual: 416 })
        );
    }

    #[test]
    fn norm_stats_small_cases() {
        let s = fit_norm_stats(&[vec![0.0f32; 416], vec![2.0f32; 416]]).unwrap();
        assert!(s.mean.iter().all(|&m| m == 1.0));
        assert!(s.std.iter().all(|&d| d == 1.0));

        let same = fit_norm_stats(&[vec![3.0f32; 4], vec![3.0f32; 4], vec![3.0f32; 4]]).unwrap();
        assert!(same.std.iter().all(|&d| d == STD_FLOOR));

        let empty: Vec<Vec<f32>> = vec![];
        assert_eq!(fit_norm_stats(&empty), Err(FeatureError::NotEnoughVectors { needed: 2, got: 0 }));
    }
}
