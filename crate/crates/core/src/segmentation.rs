//! Overlapping fixed-length observation blocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::SAMPLE_RATE;

pub const DEFAULT_BLOCK_SECS: f64 = 2.0;
pub const DEFAULT_HOP_SECS: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("expected a mono clip, got {0} channels")]
    NotMono(usize),
    #[error("expected {expected} Hz audio, got {actual} Hz")]
    WrongRate { expected: u32, actual: u32 },
    #[error("invalid block layout: block {block_len} s, hop {hop} s")]
    InvalidLayout { block_len: f64, hop: f64 },
}

/// Identity of a block: originating song plus position in it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub source_id: String,
    pub block_index: usize,
}

impl BlockRef {
    pub fn new(source_id: impl Into<String>, block_index: usize) -> Self {
        Self {
            source_id: source_id.into(),
            block_index,
        }
    }
}

impl std::fmt::Display for BlockRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.source_id, self.block_index)
    }
}

/// One observation window cut from a canonical clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub samples: Vec<f64>,
    pub start_time: f64,
    pub source_id: String,
    pub block_index: usize,
}

impl Block {
    /// Wraps raw samples as block 0 of an anonymous source.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        Self {
            samples,
            start_time: 0.0,
            source_id: String::new(),
            block_index: 0,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(SAMPLE_RATE)
    }

    pub fn block_ref(&self) -> BlockRef {
        BlockRef::new(self.source_id.clone(), self.block_index)
    }
}

/// Number of full blocks that fit in `len` samples.
pub fn block_count(len: usize, block_samples: usize, hop_samples: usize) -> usize {
    if len < block_samples {
        0
    } else {
        (len - block_samples) / hop_samples + 1
    }
}

/// Cuts `clip` into blocks starting at 0, hop, 2·hop, …; a trailing segment
/// shorter than `block_len` is dropped.
pub fn make_blocks(clip: &AudioClip, block_len: f64, hop: f64) -> Result<Vec<Block>, SegmentError> {
    if clip.num_channels() != 1 {
        return Err(SegmentError::NotMono(clip.num_channels()));
    }
    if clip.sample_rate != SAMPLE_RATE {
        return Err(SegmentError::WrongRate {
            expected: SAMPLE_RATE,
            actual: clip.sample_rate,
        });
    }
    if !(block_len > 0.0 && hop > 0.0 && hop <= block_len) {
        return Err(SegmentError::InvalidLayout { block_len, hop });
    }
    let rate = f64::from(clip.sample_rate);
    let block_samples = (block_len * rate).round() as usize;
    let hop_samples = (hop * rate).round() as usize;
    if block_samples == 0 || hop_samples == 0 {
        return Err(SegmentError::InvalidLayout { block_len, hop });
    }
    let samples = &clip.channels[0];
    let n = block_count(samples.len(), block_samples, hop_samples);
    Ok((0..n)
        .map(|i| {
            let start = i * hop_samples;
            Block {
                samples: samples[start..start + block_samples].to_vec(),
                start_time: i as f64 * hop,
                source_id: clip.source_id.clone(),
                block_index: i,
            }
        })
        .collect())
}
