//! Audio ingestion: RIFF/WAVE decoding, band-limited resampling, mono downmix
//! and peak normalization.
//!
//! Every function here is pure. The canonical clip used by the rest of the
//! pipeline is produced by [`load_canonical`]: decode, resample to 44.1 kHz,
//! downmix to mono, then peak-normalize.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::SAMPLE_RATE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported sample format (format tag {format_tag:#06x}, {bits} bits)")]
    UnsupportedFormat { format_tag: u16, bits: u16 },
    #[error("truncated data chunk: header declares {declared} bytes, only {available} present")]
    TruncatedData { declared: usize, available: usize },
    #[error("non-finite sample at frame {0}")]
    NonFiniteSample(usize),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Decoded audio, one `Vec` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(
        channels: Vec<Vec<f64>>,
        sample_rate: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip(
                "sample rate must be positive".into(),
            ));
        }
        if channels.is_empty() {
            return Err(AudioError::InvalidClip("clip has no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(AudioError::InvalidClip("channels differ in length".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Self::new(vec![samples], sample_rate, source_id).expect("single channel clip is valid")
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Length in samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Sample encodings accepted by [`decode_wav`] and produced by [`encode_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl SampleFormat {
    fn bytes_per_sample(self) -> usize {
        match self {
            SampleFormat::Pcm16 => 2,
            SampleFormat::Pcm24 => 3,
            SampleFormat::Float32 => 4,
        }
    }
}

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a RIFF/WAVE byte stream holding PCM16, PCM24 or float32 samples.
///
/// Integer samples are divided by the format's largest positive value
/// (32767 or 8388607) and clamped to [-1, 1]; float samples pass through.
pub fn decode_wav(bytes: &[u8], source_id: &str) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader(
            "missing RIFF/WAVE signature".into(),
        ));
    }
    let mut pos = 12;
    let mut fmt: Option<(SampleFormat, usize, u32)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + size > bytes.len() {
                    return Err(AudioError::MalformedHeader("fmt chunk too short".into()));
                }
                let mut tag = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2) as usize;
                let rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(AudioError::MalformedHeader(
                            "extensible fmt chunk too short".into(),
                        ));
                    }
                    // first two bytes of the sub-format GUID carry the real tag
                    tag = read_u16(bytes, body + 24);
                }
                if channels == 0 {
                    return Err(AudioError::MalformedHeader("zero channels".into()));
                }
                if rate == 0 {
                    return Err(AudioError::MalformedHeader("zero sample rate".into()));
                }
                let format = match (tag, bits) {
                    (FORMAT_PCM, 16) => SampleFormat::Pcm16,
                    (FORMAT_PCM, 24) => SampleFormat::Pcm24,
                    (FORMAT_FLOAT, 32) => SampleFormat::Float32,
                    _ => {
                        return Err(AudioError::UnsupportedFormat {
                            format_tag: tag,
                            bits,
                        })
                    }
                };
                fmt = Some((format, channels, rate));
            }
            b"data" => {
                let (format, channels, rate) = fmt.ok_or_else(|| {
                    AudioError::MalformedHeader("data chunk precedes fmt chunk".into())
                })?;
                let available = bytes.len() - body;
                if size > available {
                    return Err(AudioError::TruncatedData {
                        declared: size,
                        available,
                    });
                }
                let frame_bytes = format.bytes_per_sample() * channels;
                if size % frame_bytes != 0 {
                    return Err(AudioError::TruncatedData {
                        declared: size,
                        available: size - size % frame_bytes,
                    });
                }
                let data = &bytes[body..body + size];
                return decode_samples(data, format, channels, rate, source_id);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    Err(AudioError::MalformedHeader(if fmt.is_none() {
        "no fmt chunk".into()
    } else {
        "no data chunk".into()
    }))
}

fn decode_samples(
    data: &[u8],
    format: SampleFormat,
    n_channels: usize,
    rate: u32,
    source_id: &str,
) -> Result<AudioClip, AudioError> {
    let width = format.bytes_per_sample();
    let frames = data.len() / (width * n_channels);
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for (i, chunk) in data.chunks_exact(width).enumerate() {
        let value = match format {
            SampleFormat::Pcm16 => {
                let v = i16::from_le_bytes([chunk[0], chunk[1]]);
                (f64::from(v) / 32767.0).max(-1.0)
            }
            SampleFormat::Pcm24 => {
                let raw = i32::from_le_bytes([0, chunk[0], chunk[1], chunk[2]]) >> 8;
                (f64::from(raw) / 8_388_607.0).max(-1.0)
            }
            SampleFormat::Float32 => {
                let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                if !v.is_finite() {
                    return Err(AudioError::NonFiniteSample(i / n_channels));
                }
                f64::from(v)
            }
        };
        channels[i % n_channels].push(value);
    }
    AudioClip::new(channels, rate, source_id)
}

/// Serializes a clip as a RIFF/WAVE byte stream. Values are clamped to [-1, 1]
/// for the integer formats.
pub fn encode_wav(clip: &AudioClip, format: SampleFormat) -> Vec<u8> {
    let n_channels = clip.num_channels();
    let width = format.bytes_per_sample();
    let data_len = clip.len() * n_channels * width;
    let (tag, bits) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 16u16),
        SampleFormat::Pcm24 => (FORMAT_PCM, 24),
        SampleFormat::Float32 => (FORMAT_FLOAT, 32),
    };
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(n_channels as u16).to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    let block_align = (n_channels * width) as u16;
    out.extend_from_slice(&(clip.sample_rate * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for frame in 0..clip.len() {
        for ch in &clip.channels {
            let x = ch[frame];
            match format {
                SampleFormat::Pcm16 => {
                    let v = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                    out.extend_from_slice(&v.to_le_bytes());
                }
                SampleFormat::Pcm24 => {
                    let v = (x.clamp(-1.0, 1.0) * 8_388_607.0).round() as i32;
                    out.extend_from_slice(&v.to_le_bytes()[..3]);
                }
                SampleFormat::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            }
        }
    }
    out
}

pub fn read_wav(path: &Path) -> Result<AudioClip, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, &id)
}

/// Reads a WAV file and brings it to canonical form: 44.1 kHz, mono, peak 1.0.
pub fn load_canonical(path: &Path, source_id: &str) -> Result<AudioClip, AudioError> {
    let mut clip = read_wav(path)?;
    clip.source_id = source_id.to_owned();
    Ok(canonicalize(&clip))
}

pub fn canonicalize(clip: &AudioClip) -> AudioClip {
    peak_normalize(&downmix_mono(&resample(clip, SAMPLE_RATE)))
}

/// Polyphase windowed-sinc resampler.
///
/// The interpolation kernel is a Kaiser-windowed sinc (beta 8.6) spanning 32
/// zero crossings on each side, i.e. at least 64 taps per phase; when
/// downsampling the kernel is stretched so the cutoff sits at 95% of the
/// lower Nyquist frequency. Each phase is normalized to unit DC gain, and the
/// signal is edge-extended so constant inputs stay constant up to the borders.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: u64,
    down: u64,
    cutoff: f64,
    half_taps: usize,
    // taps[phase][j], present when the phase count is small enough to tabulate
    table: Option<Vec<Vec<f64>>>,
}

impl Resampler {
    const ZERO_CROSSINGS: f64 = 32.0;
    const KAISER_BETA: f64 = 8.6;
    const ROLLOFF: f64 = 0.95;
    const MAX_TABLE_PHASES: u64 = 4096;

    pub fn new(source_rate: u32, target_rate: u32) -> Self {
        let g = gcd(u64::from(source_rate), u64::from(target_rate));
        let up = u64::from(target_rate) / g;
        let down = u64::from(source_rate) / g;
        let cutoff = Self::ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half_taps = (Self::ZERO_CROSSINGS / cutoff).ceil() as usize;
        let mut r = Self {
            up,
            down,
            cutoff,
            half_taps,
            table: None,
        };
        if up <= Self::MAX_TABLE_PHASES {
            r.table = Some((0..up).map(|p| r.phase_taps(p)).collect());
        }
        r
    }

    /// Number of filter taps applied per output sample.
    pub fn taps_per_phase(&self) -> usize {
        2 * self.half_taps
    }

    fn kernel(&self, tau: f64) -> f64 {
        let span = self.half_taps as f64;
        if tau.abs() >= span {
            return 0.0;
        }
        let x = self.cutoff * tau;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        let r = tau / span;
        let window = bessel_i0(Self::KAISER_BETA * (1.0 - r * r).max(0.0).sqrt())
            / bessel_i0(Self::KAISER_BETA);
        self.cutoff * sinc * window
    }

    fn phase_taps(&self, phase: u64) -> Vec<f64> {
        let frac = phase as f64 / self.up as f64;
        let w = self.half_taps as f64;
        let mut taps: Vec<f64> = (0..2 * self.half_taps)
            .map(|j| self.kernel(frac + w - 1.0 - j as f64))
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= sum;
        }
        taps
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return input.to_vec();
        }
        if input.is_empty() {
            return Vec::new();
        }
        let out_len = ((input.len() as u128 * self.up as u128 + self.down as u128 / 2)
            / self.down as u128) as usize;
        let last = input.len() as i64 - 1;
        let w = self.half_taps as i64;
        let mut out = Vec::with_capacity(out_len);
        let mut scratch;
        for n in 0..out_len as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let taps: &[f64] = match &self.table {
                Some(t) => &t[phase as usize],
                None => {
                    scratch = self.phase_taps(phase);
                    &scratch
                }
            };
            let start = base - (w - 1);
            let acc: f64 = taps
                .iter()
                .enumerate()
                .map(|(j, &h)| h * input[(start + j as i64).clamp(0, last) as usize])
                .sum();
            out.push(acc);
        }
        out
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Resamples every channel to `target_rate`. Identical rates return an exact copy.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate {
        return clip.clone();
    }
    let rs = Resampler::new(clip.sample_rate, target_rate);
    AudioClip {
        channels: clip.channels.iter().map(|c| rs.process(c)).collect(),
        sample_rate: target_rate,
        source_id: clip.source_id.clone(),
    }
}

/// Unweighted mean across channels.
pub fn downmix_mono(clip: &AudioClip) -> AudioClip {
    if clip.num_channels() == 1 {
        return clip.clone();
    }
    let n = clip.num_channels() as f64;
    let mono = (0..clip.len())
        .map(|i| clip.channels.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect();
    AudioClip {
        channels: vec![mono],
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    }
}

/// Scales the clip so its largest absolute sample is exactly 1.0. All-zero
/// clips are returned unchanged.
pub fn peak_normalize(clip: &AudioClip) -> AudioClip {
    let peak = clip
        .channels
        .iter()
        .flatten()
        .fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak == 0.0 {
        return clip.clone();
    }
    // division (not multiplication by 1/peak) keeps the peak sample at exactly ±1
    AudioClip {
        channels: clip
            .channels
            .iter()
            .map(|c| c.iter().map(|&x| x / peak).collect())
            .collect(),
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    }
}
