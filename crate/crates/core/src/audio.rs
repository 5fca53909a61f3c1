//! WAV decoding, sample-rate conversion and fixed-length framing of clips.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("not a RIFF/WAVE file")]
    NotWav,
    #[error("unsupported codec: format tag {format_tag:#06x}, {bits} bits per sample")]
    UnsupportedCodec { format_tag: u16, bits: u16 },
    #[error("malformed `fmt ` chunk: {0}")]
    BadFormat(String),
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("truncated data chunk: header declares {declared} bytes, {available} present")]
    TruncatedData { declared: usize, available: usize },
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("clip is empty")]
    EmptyClip,
    #[error("sample rate must be positive")]
    ZeroRate,
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Mono PCM with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy)]
enum SampleFormat {
    U8,
    I16,
    I24,
    I32,
    F32,
    F64,
}

impl SampleFormat {
    fn width(self) -> usize {
        match self {
            SampleFormat::U8 => 1,
            SampleFormat::I16 => 2,
            SampleFormat::I24 => 3,
            SampleFormat::I32 | SampleFormat::F32 => 4,
            SampleFormat::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            SampleFormat::U8 => (f64::from(b[0]) - 128.0) / 128.0,
            SampleFormat::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])) / 32_768.0,
            SampleFormat::I24 => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                f64::from(v) / 8_388_608.0
            }
            SampleFormat::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0,
            SampleFormat::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            SampleFormat::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a RIFF/WAVE byte buffer to a mono clip.
///
/// Integer PCM (8/16/24/32-bit) is scaled by the type's maximum magnitude,
/// float PCM is taken as is. Channels are averaged. Values are clamped to
/// [-1, 1]; non-finite float samples are rejected.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::NotWav);
    }

    let mut format: Option<(SampleFormat, u16, u32)> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(AudioError::BadFormat(format!("chunk of {size} bytes is too short")));
                }
                let mut tag = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2);
                let rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 || body + 26 > bytes.len() {
                        return Err(AudioError::BadFormat("extensible header too short".into()));
                    }
                    // First two bytes of the sub-format GUID carry the real tag.
                    tag = read_u16(bytes, body + 24);
                }
                if channels == 0 {
                    return Err(AudioError::BadFormat("zero channels".into()));
                }
                if rate == 0 {
                    return Err(AudioError::ZeroRate);
                }
                let sample_format = match (tag, bits) {
                    (FORMAT_PCM, 8) => SampleFormat::U8,
                    (FORMAT_PCM, 16) => SampleFormat::I16,
                    (FORMAT_PCM, 24) => SampleFormat::I24,
                    (FORMAT_PCM, 32) => SampleFormat::I32,
                    (FORMAT_FLOAT, 32) => SampleFormat::F32,
                    (FORMAT_FLOAT, 64) => SampleFormat::F64,
                    (format_tag, bits) => return Err(AudioError::UnsupportedCodec { format_tag, bits }),
                };
                format = Some((sample_format, channels, rate));
            }
            b"data" => {
                let (sample_format, channels, rate) = format.ok_or(AudioError::MissingChunk("fmt "))?;
                let available = bytes.len() - body;
                // Some writers leave the size at 0 or u32::MAX when streaming.
                let declared = if size == 0 || size == u32::MAX as usize { available } else { size };
                if declared > available {
                    return Err(AudioError::TruncatedData { declared, available });
                }
                return mixdown(&bytes[body..body + declared], sample_format, channels, rate);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    Err(AudioError::MissingChunk(if format.is_some() { "data" } else { "fmt " }))
}

fn mixdown(data: &[u8], format: SampleFormat, channels: u16, rate: u32) -> Result<AudioClip> {
    let frame_bytes = format.width() * usize::from(channels);
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for (i, frame) in data.chunks_exact(frame_bytes).enumerate() {
        let sum: f64 = frame.chunks_exact(format.width()).map(|b| format.decode(b)).sum();
        let v = sum / f64::from(channels);
        if !v.is_finite() {
            return Err(AudioError::NonFiniteSample(i));
        }
        samples.push(v.clamp(-1.0, 1.0) as f32);
    }
    Ok(AudioClip { samples, sample_rate: rate })
}

/// Encodes a mono clip as 16-bit PCM WAV (round half away from zero, saturating).
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let q = (f64::from(s) * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Taps per polyphase branch.
pub const RESAMPLER_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.92;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Polyphase windowed-sinc filter bank for a rational ratio `up/down`.
struct PolyphaseBank {
    up: u64,
    down: u64,
    /// `up` rows of `RESAMPLER_TAPS` coefficients.
    taps: Vec<f64>,
}

impl PolyphaseBank {
    fn new(from_rate: u32, to_rate: u32) -> Self {
        let g = gcd(u64::from(from_rate), u64::from(to_rate));
        let up = u64::from(to_rate) / g;
        let down = u64::from(from_rate) / g;
        // Cutoff in cycles per input sample.
        let cutoff = 0.5 * (up as f64 / down as f64).min(1.0) * ROLLOFF;
        let half = (RESAMPLER_TAPS / 2) as f64;
        let norm = bessel_i0(KAISER_BETA);
        let mut taps = Vec::with_capacity(up as usize * RESAMPLER_TAPS);
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let start = taps.len();
            for j in 0..RESAMPLER_TAPS {
                // Tap j reads input sample base + j - (TAPS/2 - 1).
                let t = (j as f64 - (half - 1.0)) - frac;
                let r = t / half;
                let window = if r.abs() >= 1.0 { 0.0 } else { bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm };
                taps.push(2.0 * cutoff * sinc(2.0 * cutoff * t) * window);
            }
            // Unity DC gain per phase.
            let sum: f64 = taps[start..].iter().sum();
            taps[start..].iter_mut().for_each(|c| *c /= sum);
        }
        Self { up, down, taps }
    }

    fn run(&self, input: &[f32], out_len: usize) -> Vec<f32> {
        let offset = RESAMPLER_TAPS as i64 / 2 - 1;
        let n_in = input.len() as i64;
        (0..out_len as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let phase = (pos % self.up) as usize;
                let coeffs = &self.taps[phase * RESAMPLER_TAPS..(phase + 1) * RESAMPLER_TAPS];
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate() {
                    let idx = base + j as i64 - offset;
                    if (0..n_in).contains(&idx) {
                        acc += c * f64::from(input[idx as usize]);
                    }
                }
                acc.clamp(-1.0, 1.0) as f32
            })
            .collect()
    }
}

/// Band-limited sample-rate conversion (Kaiser-windowed sinc, polyphase).
///
/// Output length is `round(len * target / source)`. A clip already at the
/// target rate is returned unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    if target_rate == 0 || clip.sample_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let out_len = ((clip.len() as u128 * u128::from(target_rate) * 2 + u128::from(clip.sample_rate))
        / (2 * u128::from(clip.sample_rate))) as usize;
    let bank = PolyphaseBank::new(clip.sample_rate, target_rate);
    Ok(AudioClip { samples: bank.run(&clip.samples, out_len), sample_rate: target_rate })
}

/// Truncates from the end or zero-pads at the end to exactly `target_len` samples.
pub fn fix_length(clip: &AudioClip, target_len: usize) -> AudioClip {
    let mut samples = clip.samples.clone();
    samples.resize(target_len, 0.0);
    AudioClip { samples, sample_rate: clip.sample_rate }
}
