//! `.esad` model files: one self-contained, little-endian, CRC-protected
//! container for either the float model or the int8 model. See `FORMAT.md`
//! at the repository root for the byte-by-byte layout.

use std::io::Write;

use half::f16;
use thiserror::Error;

use crate::mfcc::{MfccConfig, NormStats};
use crate::nn::{Activation, DenseLayer, DenseModel};
use crate::quant::{QuantizedLayer, QuantizedModel, TensorQuant};

pub const MAGIC: &[u8; 4] = b"ESAD";
pub const FORMAT_VERSION: u16 = 1;
pub const FILE_EXTENSION: &str = "esad";

const FLAVOR_FLOAT32: u8 = 0;
const FLAVOR_INT8: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("bad magic: not an .esad model file")]
    BadMagic,
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("unknown model flavor {0}")]
    UnknownFlavor(u8),
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("dims/payload mismatch at byte {offset}: {context}")]
    PayloadMismatch { offset: usize, context: String },
    #[error("invalid model content: {0}")]
    InvalidContent(String),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelFileError>;

/// Either flavor of model, as read back from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Float(DenseModel),
    Int8(QuantizedModel),
}

impl StoredModel {
    pub fn mfcc(&self) -> &MfccConfig {
        match self {
            StoredModel::Float(m) => &m.mfcc,
            StoredModel::Int8(m) => &m.mfcc,
        }
    }

    pub fn norm_stats(&self) -> &NormStats {
        match self {
            StoredModel::Float(m) => &m.norm_stats,
            StoredModel::Int8(m) => &m.norm_stats,
        }
    }

    pub fn flavor_name(&self) -> &'static str {
        match self {
            StoredModel::Float(_) => "float32",
            StoredModel::Int8(_) => "int8",
        }
    }

    /// Anomaly probability for a normalized feature vector.
    pub fn predict(&self, x: &[f32]) -> std::result::Result<f64, crate::Error> {
        Ok(match self {
            StoredModel::Float(m) => m.predict(x)?,
            StoredModel::Int8(m) => m.predict(x)?,
        })
    }
}

/// Little-endian byte builder.
#[derive(Default)]
struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn dim(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension exceeds u32"));
    }
    fn tensor_quant(&mut self, q: &TensorQuant) {
        self.f32(q.scale);
        self.i32(q.zero_point);
    }
}

/// Encoded MFCC config block; also the basis of the config fingerprint.
pub fn encode_mfcc_config(cfg: &MfccConfig) -> Vec<u8> {
    let mut e = Encoder::default();
    write_mfcc(&mut e, cfg);
    e.buf
}

/// CRC32 of the encoded MFCC config, used to tie feature caches to models.
pub fn mfcc_fingerprint(cfg: &MfccConfig) -> u32 {
    crc32fast::hash(&encode_mfcc_config(cfg))
}

fn write_mfcc(e: &mut Encoder, cfg: &MfccConfig) {
    e.u32(cfg.sample_rate);
    e.dim(cfg.frame_len);
    e.dim(cfg.hop);
    e.dim(cfg.fft_size);
    e.dim(cfg.n_mels);
    e.f64(cfg.fmin);
    e.f64(cfg.fmax);
    e.dim(cfg.n_mfcc);
    e.dim(cfg.n_frames);
    e.f64(cfg.log_floor);
}

fn header(e: &mut Encoder, flavor: u8, mfcc: &MfccConfig) {
    e.buf.extend_from_slice(MAGIC);
    e.u16(FORMAT_VERSION);
    e.u8(flavor);
    write_mfcc(e, mfcc);
}

fn finish(mut e: Encoder) -> Vec<u8> {
    let crc = crc32fast::hash(&e.buf);
    e.u32(crc);
    e.buf
}

fn layer_count(n: usize) -> u8 {
    u8::try_from(n).expect("more than 255 layers")
}

pub fn encode_float(model: &DenseModel) -> Vec<u8> {
    let mut e = Encoder::default();
    header(&mut e, FLAVOR_FLOAT32, &model.mfcc);
    e.dim(model.norm_stats.dim());
    model.norm_stats.mean.iter().for_each(|&v| e.f64(v));
    model.norm_stats.std.iter().for_each(|&v| e.f64(v));
    e.u8(layer_count(model.layers.len()));
    for l in &model.layers {
        e.dim(l.in_dim);
        e.dim(l.out_dim);
        e.u8(l.activation.code());
        l.weights.iter().for_each(|&w| e.f32(w));
        l.bias.iter().for_each(|&b| e.f32(b));
    }
    finish(e)
}

pub fn encode_int8(model: &QuantizedModel) -> Vec<u8> {
    let mut e = Encoder::default();
    header(&mut e, FLAVOR_INT8, &model.mfcc);
    e.dim(model.norm_stats.dim());
    let half_bits = |v: f64| f16::from_f64(v).to_bits();
    model.norm_stats.mean.iter().for_each(|&v| e.u16(half_bits(v)));
    model.norm_stats.std.iter().for_each(|&v| e.u16(half_bits(v)));
    e.u8(layer_count(model.layers.len()));
    for l in &model.layers {
        e.dim(l.in_dim);
        e.dim(l.out_dim);
        e.u8(l.activation.code());
        e.buf.extend(l.weights.iter().map(|&w| w as u8));
        l.bias.iter().for_each(|&b| e.i32(b));
        e.tensor_quant(&l.input);
        e.tensor_quant(&l.weight);
        e.tensor_quant(&l.bias_quant);
        e.tensor_quant(&l.output);
    }
    finish(e)
}

/// Writes a model and returns the number of bytes written.
pub fn save<W: Write>(model: &StoredModel, sink: &mut W) -> Result<usize> {
    let bytes = match model {
        StoredModel::Float(m) => encode_float(m),
        StoredModel::Int8(m) => encode_int8(m),
    };
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        // The last 4 bytes are the CRC footer and never payload.
        let available = self.bytes.len().saturating_sub(4).saturating_sub(self.pos);
        if n > available {
            return Err(ModelFileError::PayloadMismatch {
                offset: self.pos,
                context: format!("{what} needs {n} bytes, {available} remain"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn dim(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }
    fn array<T>(&mut self, count: usize, width: usize, what: &str, f: impl Fn(&[u8]) -> T) -> Result<Vec<T>> {
        let n = count.checked_mul(width).ok_or_else(|| ModelFileError::PayloadMismatch {
            offset: self.pos,
            context: format!("{what} size overflows"),
        })?;
        Ok(self.take(n, what)?.chunks_exact(width).map(f).collect())
    }
    fn tensor_quant(&mut self, what: &str) -> Result<TensorQuant> {
        let scale = self.f32(what)?;
        let zero_point = self.i32(what)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ModelFileError::InvalidContent(format!("{what}: scale {scale} is not positive")));
        }
        Ok(TensorQuant { scale, zero_point })
    }
}

fn read_mfcc(d: &mut Decoder<'_>) -> Result<MfccConfig> {
    let cfg = MfccConfig {
        sample_rate: d.u32("mfcc.sample_rate")?,
        frame_len: d.dim("mfcc.frame_len")?,
        hop: d.dim("mfcc.hop")?,
        fft_size: d.dim("mfcc.fft_size")?,
        n_mels: d.dim("mfcc.n_mels")?,
        fmin: d.f64("mfcc.fmin")?,
        fmax: d.f64("mfcc.fmax")?,
        n_mfcc: d.dim("mfcc.n_mfcc")?,
        n_frames: d.dim("mfcc.n_frames")?,
        log_floor: d.f64("mfcc.log_floor")?,
    };
    cfg.validate().map_err(|e| ModelFileError::InvalidContent(e.to_string()))?;
    Ok(cfg)
}

fn read_activation(d: &mut Decoder<'_>, layer: usize) -> Result<Activation> {
    let code = d.u8("activation")?;
    Activation::from_code(code)
        .ok_or_else(|| ModelFileError::InvalidContent(format!("layer {layer}: unknown activation code {code}")))
}

/// Reads a model written by [`save`].
///
/// Structure is checked before the CRC so a truncated file reports a
/// dims/payload mismatch rather than a checksum error.
pub fn load(bytes: &[u8]) -> Result<StoredModel> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let mut d = Decoder { bytes, pos: 4 };
    let version = d.u16("format_version")?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let flavor = d.u8("flavor")?;
    if flavor != FLAVOR_FLOAT32 && flavor != FLAVOR_INT8 {
        return Err(ModelFileError::UnknownFlavor(flavor));
    }
    let mfcc = read_mfcc(&mut d)?;
    let dim = d.dim("norm_stats.dim")?;
    let norm_stats = if flavor == FLAVOR_FLOAT32 {
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        NormStats { mean: d.array(dim, 8, "norm_stats.mean", f)?, std: d.array(dim, 8, "norm_stats.std", f)? }
    } else {
        let f = |b: &[u8]| f16::from_bits(u16::from_le_bytes([b[0], b[1]])).to_f64();
        NormStats { mean: d.array(dim, 2, "norm_stats.mean", f)?, std: d.array(dim, 2, "norm_stats.std", f)? }
    };
    let n_layers = usize::from(d.u8("layer_count")?);
    if n_layers == 0 {
        return Err(ModelFileError::InvalidContent("model has no layers".into()));
    }

    let model = if flavor == FLAVOR_FLOAT32 {
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let in_dim = d.dim("layer.in")?;
            let out_dim = d.dim("layer.out")?;
            let activation = read_activation(&mut d, i)?;
            let f = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap());
            let weights = d.array(in_dim.saturating_mul(out_dim), 4, "weights", f)?;
            let bias = d.array(out_dim, 4, "bias", f)?;
            layers.push(DenseLayer { in_dim, out_dim, weights, bias, activation });
        }
        StoredModel::Float(DenseModel { layers, norm_stats, mfcc })
    } else {
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let in_dim = d.dim("layer.in")?;
            let out_dim = d.dim("layer.out")?;
            let activation = read_activation(&mut d, i)?;
            let weights = d.array(in_dim.saturating_mul(out_dim), 1, "weights", |b| b[0] as i8)?;
            let bias = d.array(out_dim, 4, "bias", |b| i32::from_le_bytes(b.try_into().unwrap()))?;
            let input = d.tensor_quant("input quant")?;
            let weight = d.tensor_quant("weight quant")?;
            let bias_quant = d.tensor_quant("bias quant")?;
            let output = d.tensor_quant("output quant")?;
            if weights.contains(&i8::MIN) {
                return Err(ModelFileError::InvalidContent(format!("layer {i}: weight -128 outside symmetric range")));
            }
            let layer = QuantizedLayer::new(in_dim, out_dim, weights, bias, input, weight, output, activation)
                .map_err(|e| ModelFileError::InvalidContent(e.to_string()))?;
            if layer.bias_quant != bias_quant {
                return Err(ModelFileError::InvalidContent(format!("layer {i}: bias scale is not input*weight scale")));
            }
            layers.push(layer);
        }
        StoredModel::Int8(QuantizedModel { layers, norm_stats, mfcc })
    };

    if d.pos + 4 != bytes.len() {
        return Err(ModelFileError::PayloadMismatch {
            offset: d.pos,
            context: format!("{} bytes between last layer and CRC footer", bytes.len().saturating_sub(d.pos + 4)),
        });
    }
    let stored = u32::from_le_bytes(bytes[d.pos..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..d.pos]);
    if stored != computed {
        return Err(ModelFileError::CrcMismatch { stored, computed });
    }
    validate_shapes(&model)?;
    Ok(model)
}

fn validate_shapes(model: &StoredModel) -> Result<()> {
    let (dims, input_dim, stats_dim): (Vec<(usize, usize)>, usize, usize) = match model {
        StoredModel::Float(m) => (m.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect(), m.input_dim(), m.norm_stats.dim()),
        StoredModel::Int8(m) => (m.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect(), m.input_dim(), m.norm_stats.dim()),
    };
    if dims.windows(2).any(|w| w[0].1 != w[1].0) {
        return Err(ModelFileError::InvalidContent("consecutive layer dims do not chain".into()));
    }
    if dims.last().map(|d| d.1) != Some(1) {
        return Err(ModelFileError::InvalidContent("output layer must have one unit".into()));
    }
    if stats_dim != input_dim || input_dim != model.mfcc().feature_len() {
        return Err(ModelFileError::InvalidContent(format!(
            "input dim {input_dim}, norm stats dim {stats_dim}, feature length {}",
            model.mfcc().feature_len()
        )));
    }
    Ok(())
}
