//! Classification of extreme vocal techniques in heavy-metal recordings.
//!
//! The crate covers the whole benchmark pipeline:
//!
//! - [`audio_io`]: WAV decoding, resampling to 44.1 kHz, downmix and peak normalization
//! - [`segmentation`]: 2 s observation blocks with a 1 s hop
//! - [`dsp`]: STFT, log-mel, MFCC/delta and the low-level spectral descriptors
//! - [`featureset`]: Feature Sets 1–5, aggregation, z-score normalization, embedding ingestion
//! - [`dataset`]: annotations, block labeling, undersampling and band-disjoint splits
//! - [`models`]: one-vs-one kernel SVM (SMO) and a small CNN on log-mel input
//! - [`eval`]: metrics, confusion matrices, exact t-SNE and SVG/JSON reports
//! - [`pipeline`]: the `extract`/`split`/`train`/`eval`/`project`/`stats` commands
//! - [`synth`]: synthetic annotated songs for demos and smoke tests
//!
//! Runnable walkthroughs for each stage live under `examples/`.

pub mod audio_io;
pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod featureset;
pub mod models;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use audio_io::AudioClip;
pub use dataset::{Class3, Class6, LabeledBlock};
pub use featureset::{FeatureSetId, FeatureVector};
pub use segmentation::Block;

/// Canonical pipeline sample rate.
pub const SAMPLE_RATE: u32 = 44_100;
