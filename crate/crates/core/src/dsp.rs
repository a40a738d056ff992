//! Frame-level signal analysis.
//!
//! All frame-based descriptors use centered frames: the signal is reflect-padded
//! by half a window on both sides, so a signal of `len` samples yields
//! `1 + len / hop` frames. Spectra are computed with a periodic Hann window.
//!
//! Degenerate frames never produce non-finite values: silent frames give 0 for
//! centroid, roll-off and contrast, and floor-driven values for flatness and
//! log-mel.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SAMPLE_RATE;

pub const WINDOW_SIZE: usize = 2048;
pub const HOP_SIZE: usize = 1024;
pub const N_MELS: usize = 128;
pub const N_MFCC: usize = 13;
pub const DELTA_WIDTH: usize = 9;
pub const POWER_FLOOR: f64 = 1e-10;
pub const ROLLOFF_FRACTION: f64 = 0.85;
pub const CONTRAST_BANDS: usize = 6;
pub const CONTRAST_FMIN: f64 = 200.0;
pub const CONTRAST_QUANTILE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("window size {0} is not a power of two")]
    WindowNotPowerOfTwo(usize),
    #[error("hop {hop} must be in 1..={window}")]
    InvalidHop { hop: usize, window: usize },
    #[error("invalid mel band edges: fmin {fmin} Hz, fmax {fmax} Hz, nyquist {nyquist} Hz")]
    InvalidBandEdges { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid contrast band layout: {0}")]
    InvalidBandLayout(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Framing parameters shared by the STFT and the time-domain descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub window: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            window: WINDOW_SIZE,
            hop: HOP_SIZE,
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl FrameConfig {
    fn validate(&self) -> Result<(), DspError> {
        if !self.window.is_power_of_two() || self.window < 2 {
            return Err(DspError::WindowNotPowerOfTwo(self.window));
        }
        if self.hop == 0 || self.hop > self.window {
            return Err(DspError::InvalidHop {
                hop: self.hop,
                window: self.window,
            });
        }
        if self.sample_rate == 0 {
            return Err(DspError::InvalidParameter(
                "sample rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.window / 2 + 1
    }

    pub fn nyquist(&self) -> f64 {
        f64::from(self.sample_rate) / 2.0
    }
}

/// Maps an index in `-pad..len+pad` onto the signal by mirror reflection
/// (edge sample not repeated).
fn reflect_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    if m >= len as i64 {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Centered, reflect-padded frames of `cfg.window` samples.
fn centered_frames<'a>(
    samples: &'a [f64],
    cfg: &FrameConfig,
) -> impl Iterator<Item = Vec<f64>> + 'a {
    let half = (cfg.window / 2) as i64;
    let n = samples.len();
    let (window, hop) = (cfg.window, cfg.hop);
    (0..cfg.n_frames(n)).map(move |t| {
        let start = (t * hop) as i64 - half;
        (0..window as i64)
            .map(|j| samples[reflect_index(start + j, n)])
            .collect()
    })
}

/// Periodic Hann window.
pub fn hann_window(size: usize) -> Vec<f64> {
    (0..size)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / size as f64).cos())
        .collect()
}

/// Magnitude spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `bins × frames`, non-negative.
    pub magnitudes: Array2<f64>,
    pub bin_freqs: Vec<f64>,
    pub frame_hop: usize,
    pub window_size: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.ncols()
    }

    pub fn power(&self) -> Array2<f64> {
        self.magnitudes.mapv(|m| m * m)
    }
}

/// Reusable STFT engine: the FFT plan and window are built once.
#[derive(Clone)]
pub struct Analyzer {
    cfg: FrameConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl std::fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Analyzer").field("cfg", &self.cfg).finish()
    }
}

impl Analyzer {
    pub fn new(cfg: FrameConfig) -> Result<Self, DspError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.window);
        Ok(Self {
            cfg,
            fft,
            window: hann_window(cfg.window),
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn stft(&self, samples: &[f64]) -> Result<Spectrogram, DspError> {
        if samples.is_empty() {
            return Err(DspError::EmptySignal);
        }
        let n_bins = self.cfg.n_bins();
        let n_frames = self.cfg.n_frames(samples.len());
        let mut mags = Array2::zeros((n_bins, n_frames));
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.window];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (t, frame) in centered_frames(samples, &self.cfg).enumerate() {
            for ((b, x), w) in buf.iter_mut().zip(&frame).zip(&self.window) {
                *b = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..n_bins {
                mags[[k, t]] = buf[k].norm();
            }
        }
        let bin_hz = f64::from(self.cfg.sample_rate) / self.cfg.window as f64;
        Ok(Spectrogram {
            magnitudes: mags,
            bin_freqs: (0..n_bins).map(|k| k as f64 * bin_hz).collect(),
            frame_hop: self.cfg.hop,
            window_size: self.cfg.window,
        })
    }
}

/// Hann-windowed, centered magnitude STFT.
pub fn stft(samples: &[f64], cfg: &FrameConfig) -> Result<Spectrogram, DspError> {
    Analyzer::new(*cfg)?.stft(samples)
}

/// Slaney-style mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    } else {
        F_SP * mel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelParams {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            n_mels: N_MELS,
            fmin: 0.0,
            fmax: f64::from(SAMPLE_RATE) / 2.0,
        }
    }
}

/// Area-normalized triangular mel filters (`n_mels × bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    /// Center frequency of each filter in Hz.
    pub centers: Vec<f64>,
    pub params: MelParams,
}

impl MelFilterbank {
    pub fn new(params: MelParams, cfg: &FrameConfig) -> Result<Self, DspError> {
        let nyquist = cfg.nyquist();
        let MelParams { n_mels, fmin, fmax } = params;
        if n_mels == 0 {
            return Err(DspError::InvalidParameter(
                "n_mels must be at least 1".into(),
            ));
        }
        if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
            return Err(DspError::InvalidBandEdges {
                fmin,
                fmax,
                nyquist,
            });
        }
        let n_bins = cfg.n_bins();
        let bin_hz = f64::from(cfg.sample_rate) / cfg.window as f64;
        let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let enorm = 2.0 / (hi - lo);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (mid - lo);
                let falling = (hi - f) / (hi - mid);
                weights[[m, k]] = rising.min(falling).max(0.0) * enorm;
            }
        }
        Ok(Self {
            weights,
            centers: edges[1..=n_mels].to_vec(),
            params,
        })
    }
}

/// Mel-band power (before log compression), `n_mels × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub params: MelParams,
}

/// Natural-log mel power, floored at [`POWER_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Array2<f64>,
    pub params: MelParams,
    pub floor: f64,
}

impl LogMelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Applies the filterbank to the power spectrum.
pub fn mel_spectrogram(
    spec: &Spectrogram,
    bank: &MelFilterbank,
) -> Result<MelSpectrogram, DspError> {
    if bank.weights.ncols() != spec.n_bins() {
        return Err(DspError::ShapeMismatch(format!(
            "filterbank has {} bins, spectrogram {}",
            bank.weights.ncols(),
            spec.n_bins()
        )));
    }
    Ok(MelSpectrogram {
        values: bank.weights.dot(&spec.power()),
        params: bank.params,
    })
}

pub fn log_compress(mel: &MelSpectrogram) -> LogMelSpectrogram {
    LogMelSpectrogram {
        values: mel.values.mapv(|p| p.max(POWER_FLOOR).ln()),
        params: mel.params,
        floor: POWER_FLOOR,
    }
}

/// Which descriptor a [`FrameSeries`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descriptor {
    Mfcc,
    DeltaMfcc,
    Rms,
    Zcr,
    Centroid,
    Contrast,
    Flatness,
    Rolloff,
}

impl Descriptor {
    /// Rows per frame under the default configuration.
    pub fn dims(self) -> usize {
        match self {
            Descriptor::Mfcc | Descriptor::DeltaMfcc => N_MFCC,
            Descriptor::Contrast => CONTRAST_BANDS + 1,
            _ => 1,
        }
    }
}

/// Per-frame descriptor values, `dims × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub name: Descriptor,
    pub values: Array2<f64>,
}

impl FrameSeries {
    pub fn dims(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    fn single_row(name: Descriptor, row: Vec<f64>) -> Self {
        let n = row.len();
        Self {
            name,
            values: Array2::from_shape_vec((1, n), row).expect("row shape"),
        }
    }
}

/// Orthonormal DCT-II basis, `n_coeffs × n`.
pub fn dct_matrix(n_coeffs: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_coeffs, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Cepstral coefficients: orthonormal DCT-II along the mel axis, first
/// `n_coeffs` kept.
pub fn mfcc(logmel: &LogMelSpectrogram, n_coeffs: usize) -> Result<FrameSeries, DspError> {
    let n_mels = logmel.n_mels();
    if n_coeffs == 0 || n_coeffs > n_mels {
        return Err(DspError::InvalidParameter(format!(
            "n_coeffs {n_coeffs} must be in 1..={n_mels}"
        )));
    }
    Ok(FrameSeries {
        name: Descriptor::Mfcc,
        values: dct_matrix(n_coeffs, n_mels).dot(&logmel.values),
    })
}

/// Local regression slope over a centered window of `width` frames, with edge
/// replication.
pub fn delta(series: &FrameSeries, width: usize) -> Result<FrameSeries, DspError> {
    if width < 3 || width % 2 == 0 {
        return Err(DspError::InvalidParameter(format!(
            "delta width {width} must be odd and >= 3"
        )));
    }
    let frames = series.n_frames();
    if frames == 0 {
        return Err(DspError::EmptySignal);
    }
    let half = (width / 2) as i64;
    let denom = 2.0 * (1..=half).map(|n| (n * n) as f64).sum::<f64>();
    let last = frames as i64 - 1;
    let mut out = Array2::zeros(series.values.raw_dim());
    for (d, row) in series.values.axis_iter(Axis(0)).enumerate() {
        for t in 0..frames as i64 {
            let num: f64 = (1..=half)
                .map(|n| {
                    let ahead = row[(t + n).min(last) as usize];
                    let behind = row[(t - n).max(0) as usize];
                    n as f64 * (ahead - behind)
                })
                .sum();
            out[[d, t as usize]] = num / denom;
        }
    }
    Ok(FrameSeries {
        name: Descriptor::DeltaMfcc,
        values: out,
    })
}

pub fn frame_rms(samples: &[f64], cfg: &FrameConfig) -> Result<FrameSeries, DspError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let row = centered_frames(samples, cfg)
        .map(|f| (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt())
        .collect();
    Ok(FrameSeries::single_row(Descriptor::Rms, row))
}

/// Fraction of adjacent sample pairs whose sign differs; zero counts as positive.
pub fn frame_zcr(samples: &[f64], cfg: &FrameConfig) -> Result<FrameSeries, DspError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let row = centered_frames(samples, cfg)
        .map(|f| {
            let crossings = f
                .windows(2)
                .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
                .count();
            crossings as f64 / (f.len() - 1) as f64
        })
        .collect();
    Ok(FrameSeries::single_row(Descriptor::Zcr, row))
}

pub fn spectral_centroid(spec: &Spectrogram) -> FrameSeries {
    let row = spec
        .magnitudes
        .axis_iter(Axis(1))
        .map(|col| {
            let total: f64 = col.sum();
            if total <= 0.0 {
                0.0
            } else {
                col.iter()
                    .zip(&spec.bin_freqs)
                    .map(|(m, f)| m * f)
                    .sum::<f64>()
                    / total
            }
        })
        .collect();
    FrameSeries::single_row(Descriptor::Centroid, row)
}

/// Geometric over arithmetic mean of the floored power spectrum.
pub fn spectral_flatness(spec: &Spectrogram) -> FrameSeries {
    let row = spec
        .magnitudes
        .axis_iter(Axis(1))
        .map(|col| {
            let n = col.len() as f64;
            let (log_sum, sum) = col.iter().fold((0.0, 0.0), |(l, s), m| {
                let p = (m * m).max(POWER_FLOOR);
                (l + p.ln(), s + p)
            });
            ((log_sum / n).exp() / (sum / n)).min(1.0)
        })
        .collect();
    FrameSeries::single_row(Descriptor::Flatness, row)
}

/// Frequency of the first bin whose cumulative magnitude reaches
/// `fraction` of the frame total.
pub fn spectral_rolloff(spec: &Spectrogram, fraction: f64) -> Result<FrameSeries, DspError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DspError::InvalidParameter(format!(
            "roll-off fraction {fraction} must be in (0, 1)"
        )));
    }
    let row = spec
        .magnitudes
        .axis_iter(Axis(1))
        .map(|col| {
            let total: f64 = col.sum();
            if total <= 0.0 {
                return 0.0;
            }
            let threshold = fraction * total;
            let mut cum = 0.0;
            for (k, m) in col.iter().enumerate() {
                cum += m;
                if cum >= threshold {
                    return spec.bin_freqs[k];
                }
            }
            *spec.bin_freqs.last().unwrap()
        })
        .collect();
    Ok(FrameSeries::single_row(Descriptor::Rolloff, row))
}

/// Bin ranges of the contrast sub-bands: `[0, fmin)`, then `n_bands` octaves,
/// the last one extended to Nyquist.
pub fn contrast_bands(
    bin_freqs: &[f64],
    n_bands: usize,
    fmin: f64,
) -> Result<Vec<std::ops::Range<usize>>, DspError> {
    if n_bands == 0 || fmin <= 0.0 {
        return Err(DspError::InvalidBandLayout(format!(
            "need n_bands >= 1 and fmin > 0, got {n_bands} and {fmin}"
        )));
    }
    let nyquist = *bin_freqs.last().ok_or(DspError::EmptySignal)?;
    let mut edges = vec![0.0];
    edges.extend((0..n_bands).map(|i| fmin * 2f64.powi(i as i32)));
    if *edges.last().unwrap() >= nyquist {
        return Err(DspError::InvalidBandLayout(format!(
            "top band edge {} Hz is above nyquist {nyquist} Hz",
            edges.last().unwrap()
        )));
    }
    edges.push(f64::INFINITY);
    let bands: Vec<_> = edges
        .windows(2)
        .map(|e| {
            let lo = bin_freqs
                .iter()
                .position(|&f| f >= e[0])
                .unwrap_or(bin_freqs.len());
            let hi = bin_freqs
                .iter()
                .position(|&f| f >= e[1])
                .unwrap_or(bin_freqs.len());
            lo..hi
        })
        .collect();
    if let Some(i) = bands.iter().position(|b| b.is_empty()) {
        return Err(DspError::InvalidBandLayout(format!(
            "sub-band {i} contains no bins"
        )));
    }
    Ok(bands)
}

/// Per sub-band log ratio of peak to valley magnitude, where peak and valley
/// are the means of the top and bottom `quantile` of the band's bins.
pub fn spectral_contrast(
    spec: &Spectrogram,
    n_bands: usize,
    quantile: f64,
) -> Result<FrameSeries, DspError> {
    spectral_contrast_with_fmin(spec, n_bands, CONTRAST_FMIN, quantile)
}

pub fn spectral_contrast_with_fmin(
    spec: &Spectrogram,
    n_bands: usize,
    fmin: f64,
    quantile: f64,
) -> Result<FrameSeries, DspError> {
    if !(quantile > 0.0 && quantile < 0.5) {
        return Err(DspError::InvalidParameter(format!(
            "contrast quantile {quantile} must be in (0, 0.5)"
        )));
    }
    let bands = contrast_bands(&spec.bin_freqs, n_bands, fmin)?;
    let mut out = Array2::zeros((bands.len(), spec.n_frames()));
    let mut sorted = Vec::new();
    for (t, col) in spec.magnitudes.axis_iter(Axis(1)).enumerate() {
        for (b, range) in bands.iter().enumerate() {
            sorted.clear();
            sorted.extend(
                col.slice(ndarray::s![range.clone()])
                    .iter()
                    .map(|m| m.max(POWER_FLOOR)),
            );
            sorted.sort_by(f64::total_cmp);
            let nq = ((quantile * sorted.len() as f64).round() as usize).max(1);
            let valley = sorted[..nq].iter().sum::<f64>() / nq as f64;
            let peak = sorted[sorted.len() - nq..].iter().sum::<f64>() / nq as f64;
            out[[b, t]] = peak.ln() - valley.ln();
        }
    }
    Ok(FrameSeries {
        name: Descriptor::Contrast,
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize, amp: f64) -> Vec<f64> {
        (0..len)
            .map(|n| amp * (2.0 * PI * freq * n as f64 / 44_100.0).sin())
            .collect()
    }

    fn flat_spec(bins: usize, value: f64) -> Spectrogram {
        Spectrogram {
            magnitudes: Array2::from_elem((bins, 1), value),
            bin_freqs: (0..bins).map(|k| k as f64 * 44_100.0 / 2048.0).collect(),
            frame_hop: HOP_SIZE,
            window_size: WINDOW_SIZE,
        }
    }

    #[test]
    fn frame_count_for_default_block() {
        let s = stft(&vec![0.0; 88_200], &FrameConfig::default()).unwrap();
        assert_eq!(s.n_frames(), 87);
        assert_eq!(s.n_bins(), 1025);
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn stft_peak_bin_of_1khz() {
        let s = stft(&sine(1000.0, 88_200, 1.0), &FrameConfig::default()).unwrap();
        // edge frames see the reflected signal
        for col in s.magnitudes.axis_iter(Axis(1)).skip(1).take(85) {
            let argmax = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 46);
        }
    }

    #[test]
    fn stft_rejects_bad_config() {
        let cfg = FrameConfig {
            window: 1000,
            ..FrameConfig::default()
        };
        assert_eq!(
            stft(&[0.0; 10], &cfg),
            Err(DspError::WindowNotPowerOfTwo(1000))
        );
        assert_eq!(
            stft(&[], &FrameConfig::default()),
            Err(DspError::EmptySignal)
        );
    }

    #[test]
    fn reflect_padding_handles_short_signals() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(-9, 5), 1);
        let s = stft(&[0.5, -0.25, 0.1], &FrameConfig::default()).unwrap();
        assert_eq!(s.n_frames(), 1);
        assert!(s.magnitudes.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn mel_filters_nonnegative_and_nonempty() {
        let bank = MelFilterbank::new(MelParams::default(), &FrameConfig::default()).unwrap();
        assert!(bank.weights.iter().all(|&w| w >= 0.0));
        for row in bank.weights.axis_iter(Axis(0)) {
            assert!(row.sum() > 0.0);
        }
        let bad = MelParams {
            fmin: 5000.0,
            fmax: 4000.0,
            ..MelParams::default()
        };
        assert!(matches!(
            MelFilterbank::new(bad, &FrameConfig::default()),
            Err(DspError::InvalidBandEdges { .. })
        ));
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 440.0, 999.0, 1000.0, 8000.0, 22_050.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn silence_log_mel_hits_floor() {
        let cfg = FrameConfig::default();
        let bank = MelFilterbank::new(MelParams::default(), &cfg).unwrap();
        let spec = stft(&vec![0.0; 4096], &cfg).unwrap();
        let lm = log_compress(&mel_spectrogram(&spec, &bank).unwrap());
        assert!(lm.values.iter().all(|&v| v == POWER_FLOOR.ln()));
        let c = mfcc(&lm, 13).unwrap();
        for t in 0..c.n_frames() {
            assert!(c.values[[0, t]] != 0.0);
            for k in 1..13 {
                assert!(c.values[[k, t]].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn delta_of_ramp_and_constant() {
        let ramp = FrameSeries {
            name: Descriptor::Mfcc,
            values: Array2::from_shape_fn(
                (2, 30),
                |(d, t)| if d == 0 { 2.5 * t as f64 } else { 7.0 },
            ),
        };
        let d = delta(&ramp, 9).unwrap();
        for t in 4..26 {
            assert!((d.values[[0, t]] - 2.5).abs() < 1e-12);
        }
        assert!(d.values.row(1).iter().all(|&v| v == 0.0));
        assert!(delta(&ramp, 4).is_err());
    }

    #[test]
    fn rms_and_zcr_simple_signals() {
        let cfg = FrameConfig::default();
        let r = frame_rms(&vec![0.5; 10_000], &cfg).unwrap();
        assert!(r.values.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(frame_rms(&vec![0.0; 10_000], &cfg)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        let z = frame_zcr(&vec![0.3; 10_000], &cfg).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let alt: Vec<f64> = (0..10_000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let z = frame_zcr(&alt, &cfg).unwrap();
        assert!(z.values.iter().all(|&v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn centroid_flat_and_silent() {
        let c = spectral_centroid(&flat_spec(1025, 1.0));
        assert!((c.values[[0, 0]] - 11_025.0).abs() < 1e-9);
        assert_eq!(spectral_centroid(&flat_spec(1025, 0.0)).values[[0, 0]], 0.0);
    }

    #[test]
    fn flatness_extremes() {
        let f = spectral_flatness(&flat_spec(1025, 0.3));
        assert!((f.values[[0, 0]] - 1.0).abs() < 1e-9);
        let mut spike = flat_spec(1025, 0.0);
        spike.magnitudes[[100, 0]] = 1.0;
        assert!(spectral_flatness(&spike).values[[0, 0]] < 0.01);
        let silent = spectral_flatness(&flat_spec(1025, 0.0));
        assert!((silent.values[[0, 0]] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rolloff_cases() {
        let r = spectral_rolloff(&flat_spec(1025, 1.0), 0.85).unwrap();
        assert_eq!(r.values[[0, 0]], 871.0 * 44_100.0 / 2048.0);
        let mut tone = flat_spec(1025, 0.0);
        tone.magnitudes[[46, 0]] = 3.0;
        let r = spectral_rolloff(&tone, 0.85).unwrap();
        assert_eq!(r.values[[0, 0]], tone.bin_freqs[46]);
        assert_eq!(
            spectral_rolloff(&flat_spec(1025, 0.0), 0.85)
                .unwrap()
                .values[[0, 0]],
            0.0
        );
        assert!(spectral_rolloff(&tone, 1.0).is_err());
    }

    #[test]
    fn contrast_degenerate_frames() {
        let flat = spectral_contrast(&flat_spec(1025, 0.7), 6, 0.02).unwrap();
        assert_eq!(flat.dims(), 7);
        assert!(flat.values.iter().all(|&v| v.abs() < 1e-12));
        let zero = spectral_contrast(&flat_spec(1025, 0.0), 6, 0.02).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert!(matches!(
            spectral_contrast(&flat_spec(1025, 1.0), 8, 0.02),
            Err(DspError::InvalidBandLayout(_))
        ));
    }

    #[test]
    fn contrast_peaks_in_tone_band() {
        let spec = stft(&sine(1000.0, 20_000, 0.8), &FrameConfig::default()).unwrap();
        let c = spectral_contrast(&spec, 6, 0.02).unwrap();
        // 1 kHz sits in the 800-1600 Hz band (index 3)
        let t = c.n_frames() / 2;
        for b in (0..7).filter(|&b| b != 3) {
            assert!(c.values[[3, t]] > c.values[[b, t]]);
        }
    }
}
