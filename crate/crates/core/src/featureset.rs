//! Feature Sets 1–5.
//!
//! | set | content                                                    | shape     |
//! |-----|------------------------------------------------------------|-----------|
//! | FS1 | MFCC, ΔMFCC, RMS, ZCR, centroid, contrast, flatness, roll-off | 76       |
//! | FS2 | precomputed VGGish embedding                                | 128       |
//! | FS3 | MFCC, ΔMFCC                                                 | 52        |
//! | FS4 | RMS, ZCR, centroid, contrast, flatness, roll-off            | 24        |
//! | FS5 | log-mel spectrogram                                         | 128 × 87  |
//!
//! FS1, FS3 and FS4 aggregate every per-frame dimension into its mean followed
//! by its population standard deviation, in the descriptor order listed above.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Class6;
use crate::dsp::{
    self, Analyzer, DspError, FrameConfig, FrameSeries, LogMelSpectrogram, MelFilterbank, MelParams,
};
use crate::segmentation::{Block, BlockRef};

pub const VGGISH_DIM: usize = 128;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("cannot aggregate an empty series list")]
    EmptySeries,
    #[error("series disagree on frame count: {0} vs {1}")]
    FrameCountMismatch(usize, usize),
    #[error("{0} features are not computed from audio")]
    NotComputable(FeatureSetId),
    #[error("line {line}: embedding has {got} values, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: bad block reference: {message}")]
    BadBlockRef { line: usize, message: String },
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("mixed feature sets: {0} and {1}")]
    MixedSets(FeatureSetId, FeatureSetId),
    #[error("{0} is not z-score normalized")]
    NotNormalizable(FeatureSetId),
    #[error("vector length {got} does not match {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite feature value in {0}")]
    NonFinite(BlockRef),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSetId {
    Fs1,
    Fs2,
    Fs3,
    Fs4,
    Fs5,
}

impl FeatureSetId {
    pub const ALL: [FeatureSetId; 5] = [
        FeatureSetId::Fs1,
        FeatureSetId::Fs2,
        FeatureSetId::Fs3,
        FeatureSetId::Fs4,
        FeatureSetId::Fs5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSetId::Fs1 => "fs1",
            FeatureSetId::Fs2 => "fs2",
            FeatureSetId::Fs3 => "fs3",
            FeatureSetId::Fs4 => "fs4",
            FeatureSetId::Fs5 => "fs5",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
    }

    /// Frame descriptors that make up an aggregated set.
    pub fn descriptors(self) -> &'static [dsp::Descriptor] {
        use dsp::Descriptor::*;
        match self {
            FeatureSetId::Fs1 => &[
                Mfcc, DeltaMfcc, Rms, Zcr, Centroid, Contrast, Flatness, Rolloff,
            ],
            FeatureSetId::Fs3 => &[Mfcc, DeltaMfcc],
            FeatureSetId::Fs4 => &[Rms, Zcr, Centroid, Contrast, Flatness, Rolloff],
            FeatureSetId::Fs2 | FeatureSetId::Fs5 => &[],
        }
    }

    /// Flat vector length under default settings (FS5: 128 × 87).
    pub fn expected_len(self) -> usize {
        match self {
            FeatureSetId::Fs2 => VGGISH_DIM,
            FeatureSetId::Fs5 => dsp::N_MELS * 87,
            other => 2 * other.descriptors().iter().map(|d| d.dims()).sum::<usize>(),
        }
    }

    /// Whether the set is z-score normalized before classification.
    pub fn is_normalized(self) -> bool {
        self != FeatureSetId::Fs5
    }
}

impl std::fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s).ok_or_else(|| format!("unknown feature set {s:?} (expected fs1..fs5)"))
    }
}

/// One block's representation under a feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub set_id: FeatureSetId,
    /// Flat values; FS5 stores its `n_mels × frames` matrix row-major.
    pub values: Vec<f64>,
    /// `[rows, cols]` for matrix-valued sets.
    pub shape: Option<[usize; 2]>,
    pub block_ref: BlockRef,
    pub label: Option<Class6>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Concatenates per-dimension `(mean, population std)` pairs across frames.
pub fn aggregate(series: &[FrameSeries]) -> Result<Vec<f64>, FeatureError> {
    let frames = series.first().ok_or(FeatureError::EmptySeries)?.n_frames();
    let mut out = Vec::with_capacity(2 * series.iter().map(FrameSeries::dims).sum::<usize>());
    for s in series {
        if s.n_frames() != frames {
            return Err(FeatureError::FrameCountMismatch(frames, s.n_frames()));
        }
        if frames == 0 {
            return Err(FeatureError::EmptySeries);
        }
        for row in s.values.axis_iter(Axis(0)) {
            let n = frames as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            out.push(mean);
            out.push(var.sqrt());
        }
    }
    Ok(out)
}

/// Computes audio-derived feature sets for blocks. Holds the FFT plan,
/// filterbank and DCT basis so they are built once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    analyzer: Analyzer,
    filterbank: MelFilterbank,
    n_mfcc: usize,
    delta_width: usize,
}

impl FeatureExtractor {
    pub fn new(frame: FrameConfig, mel: MelParams) -> Result<Self, FeatureError> {
        Ok(Self {
            analyzer: Analyzer::new(frame)?,
            filterbank: MelFilterbank::new(mel, &frame)?,
            n_mfcc: dsp::N_MFCC,
            delta_width: dsp::DELTA_WIDTH,
        })
    }

    pub fn log_mel(&self, samples: &[f64]) -> Result<LogMelSpectrogram, FeatureError> {
        let spec = self.analyzer.stft(samples)?;
        Ok(dsp::log_compress(&dsp::mel_spectrogram(
            &spec,
            &self.filterbank,
        )?))
    }

    /// Frame series for every descriptor in `descriptors`, in that order.
    pub fn frame_series(
        &self,
        samples: &[f64],
        descriptors: &[dsp::Descriptor],
    ) -> Result<Vec<FrameSeries>, FeatureError> {
        use dsp::Descriptor::*;
        let cfg = self.analyzer.config();
        let spec = self.analyzer.stft(samples)?;
        let needs_mfcc = descriptors.iter().any(|d| matches!(d, Mfcc | DeltaMfcc));
        let mfcc = if needs_mfcc {
            let lm = dsp::log_compress(&dsp::mel_spectrogram(&spec, &self.filterbank)?);
            Some(dsp::mfcc(&lm, self.n_mfcc)?)
        } else {
            None
        };
        descriptors
            .iter()
            .map(|d| -> Result<FrameSeries, FeatureError> {
                Ok(match d {
                    Mfcc => mfcc.clone().expect("computed above"),
                    DeltaMfcc => {
                        dsp::delta(mfcc.as_ref().expect("computed above"), self.delta_width)?
                    }
                    Rms => dsp::frame_rms(samples, cfg)?,
                    Zcr => dsp::frame_zcr(samples, cfg)?,
                    Centroid => dsp::spectral_centroid(&spec),
                    Contrast => {
                        dsp::spectral_contrast(&spec, dsp::CONTRAST_BANDS, dsp::CONTRAST_QUANTILE)?
                    }
                    Flatness => dsp::spectral_flatness(&spec),
                    Rolloff => dsp::spectral_rolloff(&spec, dsp::ROLLOFF_FRACTION)?,
                })
            })
            .collect()
    }

    /// Builds `set_id` for one block. FS2 is ingested, not computed.
    pub fn assemble(
        &self,
        block: &Block,
        set_id: FeatureSetId,
    ) -> Result<FeatureVector, FeatureError> {
        let (values, shape) = match set_id {
            FeatureSetId::Fs2 => return Err(FeatureError::NotComputable(set_id)),
            FeatureSetId::Fs5 => {
                let lm = self.log_mel(&block.samples)?;
                let shape = [lm.n_mels(), lm.n_frames()];
                (lm.values.iter().copied().collect(), Some(shape))
            }
            _ => (
                aggregate(&self.frame_series(&block.samples, set_id.descriptors())?)?,
                None,
            ),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(block.block_ref()));
        }
        Ok(FeatureVector {
            set_id,
            values,
            shape,
            block_ref: block.block_ref(),
            label: None,
        })
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(FrameConfig::default(), MelParams::default())
            .expect("default parameters are valid")
    }
}

/// Convenience wrapper over a default [`FeatureExtractor`].
pub fn assemble(block: &Block, set_id: FeatureSetId) -> Result<FeatureVector, FeatureError> {
    FeatureExtractor::default().assemble(block, set_id)
}

#[derive(Debug, Deserialize)]
struct EmbeddingRecord {
    source_id: serde_json::Value,
    block_index: serde_json::Value,
    embedding: Vec<f64>,
}

/// Reads precomputed 128-d VGGish embeddings (JSON-Lines
/// `{source_id, block_index, embedding}`).
pub fn ingest_vggish(path: &Path) -> Result<Vec<FeatureVector>, FeatureError> {
    let file = std::fs::File::open(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_vggish_reader(std::io::BufReader::new(file), VGGISH_DIM)
}

pub fn ingest_vggish_reader(
    reader: impl BufRead,
    expected_dim: usize,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| FeatureError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| FeatureError::MalformedJson {
                line: line_no,
                message: e.to_string(),
            })?;
        let source_id = match rec.source_id.as_str() {
            Some(s) if !s.is_empty() => s.to_owned(),
            _ => {
                return Err(FeatureError::BadBlockRef {
                    line: line_no,
                    message: format!(
                        "source_id must be a non-empty string, got {}",
                        rec.source_id
                    ),
                })
            }
        };
        let block_index = rec
            .block_index
            .as_u64()
            .ok_or_else(|| FeatureError::BadBlockRef {
                line: line_no,
                message: format!(
                    "block_index must be a non-negative integer, got {}",
                    rec.block_index
                ),
            })? as usize;
        if rec.embedding.len() != expected_dim {
            return Err(FeatureError::DimensionMismatch {
                line: line_no,
                expected: expected_dim,
                got: rec.embedding.len(),
            });
        }
        out.push(FeatureVector {
            set_id: FeatureSetId::Fs2,
            values: rec.embedding,
            shape: None,
            block_ref: BlockRef::new(source_id, block_index),
            label: None,
        });
    }
    Ok(out)
}

/// Per-dimension z-score statistics fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub set_id: FeatureSetId,
    pub means: Vec<f64>,
    /// Strictly positive; zero-variance dimensions store 1.
    pub stds: Vec<f64>,
    /// Dimensions that were constant in training; they normalize to 0.
    pub constant: Vec<bool>,
}

impl Normalizer {
    pub fn fit(train: &[FeatureVector]) -> Result<Self, FeatureError> {
        let first = train.first().ok_or(FeatureError::EmptyTrainingSet)?;
        if !first.set_id.is_normalized() {
            return Err(FeatureError::NotNormalizable(first.set_id));
        }
        let dim = first.len();
        for v in train {
            if v.set_id != first.set_id {
                return Err(FeatureError::MixedSets(first.set_id, v.set_id));
            }
            if v.len() != dim {
                return Err(FeatureError::LengthMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let n = train.len() as f64;
        let mut means = vec![0.0; dim];
        for v in train {
            for (m, x) in means.iter_mut().zip(&v.values) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; dim];
        for v in train {
            for ((s, x), m) in vars.iter_mut().zip(&v.values).zip(&means) {
                *s += (x - m).powi(2);
            }
        }
        let mut constant = Vec::with_capacity(dim);
        let stds = vars
            .iter()
            .zip(&means)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                let is_const = sd <= 1e-12 * m.abs().max(1.0);
                constant.push(is_const);
                if is_const {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self {
            set_id: first.set_id,
            means,
            stds,
            constant,
        })
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector, FeatureError> {
        if v.set_id != self.set_id {
            return Err(FeatureError::MixedSets(self.set_id, v.set_id));
        }
        Ok(FeatureVector {
            values: self.apply_values(&v.values)?,
            ..v.clone()
        })
    }

    pub fn apply_values(&self, values: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if values.len() != self.means.len() {
            return Err(FeatureError::LengthMismatch {
                expected: self.means.len(),
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if self.constant[i] {
                    0.0
                } else {
                    (x - self.means[i]) / self.stds[i]
                }
            })
            .collect())
    }

    /// Maps normalized values back; constant dimensions return their mean.
    pub fn invert_values(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, z)| {
                if self.constant[i] {
                    self.means[i]
                } else {
                    z * self.stds[i] + self.means[i]
                }
            })
            .collect()
    }
}

pub fn fit_normalizer(train: &[FeatureVector]) -> Result<Normalizer, FeatureError> {
    Normalizer::fit(train)
}

pub fn apply_normalizer(
    norm: &Normalizer,
    v: &FeatureVector,
) -> Result<FeatureVector, FeatureError> {
    norm.apply(v)
}

/// One line of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub source_id: String,
    pub band_id: String,
    pub block_index: usize,
    pub start_s: f64,
    pub label: Option<Class6>,
    pub set_id: FeatureSetId,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 2]>,
}

impl FeatureRecord {
    pub fn from_vector(v: FeatureVector, band_id: &str, start_s: f64) -> Self {
        Self {
            source_id: v.block_ref.source_id,
            band_id: band_id.to_owned(),
            block_index: v.block_ref.block_index,
            start_s,
            label: v.label,
            set_id: v.set_id,
            values: v.values,
            shape: v.shape,
        }
    }

    pub fn block_ref(&self) -> BlockRef {
        BlockRef::new(self.source_id.clone(), self.block_index)
    }

    pub fn to_vector(&self) -> FeatureVector {
        FeatureVector {
            set_id: self.set_id,
            values: self.values.clone(),
            shape: self.shape,
            block_ref: self.block_ref(),
            label: self.label,
        }
    }
}

pub fn write_feature_file(path: &Path, records: &[FeatureRecord]) -> Result<(), FeatureError> {
    let io_err = |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for r in records {
        let line = serde_json::to_string(r).expect("feature records serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureRecord>, FeatureError> {
    let file = std::fs::File::open(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| FeatureError::MalformedJson {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
