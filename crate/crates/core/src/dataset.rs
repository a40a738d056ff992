//! Annotations, block labeling, class schemes, undersampling and
//! band-disjoint dataset splits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmentation::{Block, BlockRef};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: u64, label: String },
    #[error("line {line}: end {end} s is not after start {start} s")]
    EndBeforeStart { line: u64, start: f64, end: f64 },
    #[error("annotations overlap: [{a_start}, {a_end}) and [{b_start}, {b_end})")]
    Overlap {
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },
    #[error("band split needs at least 2 bands, found {0}")]
    TooFewBands(usize),
    #[error("invalid split ratios {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("band {band} appears in train and in validation/test")]
    BandLeak { band: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The six-way label inventory, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class6 {
    Sing,
    LowFry,
    MidFry,
    HighFry,
    Layered,
    NoVocal,
}

impl Class6 {
    pub const ALL: [Class6; 6] = [
        Class6::Sing,
        Class6::LowFry,
        Class6::MidFry,
        Class6::HighFry,
        Class6::Layered,
        Class6::NoVocal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class6::Sing => "Sing",
            Class6::LowFry => "LowFry",
            Class6::MidFry => "MidFry",
            Class6::HighFry => "HighFry",
            Class6::Layered => "Layered",
            Class6::NoVocal => "NoVocal",
        }
    }

    pub fn is_vocal(self) -> bool {
        self != Class6::NoVocal
    }

    /// Tie-break rank used by [`label_blocks`]; higher wins.
    fn priority(self) -> u8 {
        match self {
            Class6::NoVocal => 0,
            Class6::Sing => 1,
            Class6::HighFry => 2,
            Class6::MidFry => 3,
            Class6::LowFry => 4,
            Class6::Layered => 5,
        }
    }

    /// Accepts the canonical names plus spaced/underscored/lowercase variants
    /// ("High Fry", "mid_fry").
    pub fn parse(label: &str) -> Option<Self> {
        let key: String = label
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match key.as_str() {
            "sing" => Class6::Sing,
            "lowfry" => Class6::LowFry,
            "midfry" => Class6::MidFry,
            "highfry" => Class6::HighFry,
            "layered" => Class6::Layered,
            "novocal" => Class6::NoVocal,
            _ => return None,
        })
    }
}

impl std::fmt::Display for Class6 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class3 {
    Sing,
    Scream,
    NoVocal,
}

impl Class3 {
    pub const ALL: [Class3; 3] = [Class3::Sing, Class3::Scream, Class3::NoVocal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Class3::Sing => "Sing",
            Class3::Scream => "Scream",
            Class3::NoVocal => "NoVocal",
        }
    }
}

/// How `Layered` is treated when collapsing to three classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeClassMapping {
    pub layered_as_scream: bool,
}

impl Default for ThreeClassMapping {
    fn default() -> Self {
        Self {
            layered_as_scream: true,
        }
    }
}

impl ThreeClassMapping {
    pub fn map(self, label: Class6) -> Class3 {
        match label {
            Class6::Sing => Class3::Sing,
            Class6::NoVocal => Class3::NoVocal,
            Class6::Layered if !self.layered_as_scream => Class3::Sing,
            _ => Class3::Scream,
        }
    }

    /// The mapping as a table over [`Class6`] indices.
    pub fn table(self) -> Vec<usize> {
        Class6::ALL.iter().map(|&c| self.map(c).index()).collect()
    }
}

/// All fry and layered screams collapse to `Scream`.
pub fn map_3class(label: Class6) -> Class3 {
    ThreeClassMapping::default().map(label)
}

/// Which label granularity an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassScheme {
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "6")]
    Six,
}

impl ClassScheme {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            3 => Some(ClassScheme::Three),
            6 => Some(ClassScheme::Six),
            _ => None,
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            ClassScheme::Three => 3,
            ClassScheme::Six => 6,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            ClassScheme::Three => Class3::ALL.iter().map(|c| c.name().to_owned()).collect(),
            ClassScheme::Six => Class6::ALL.iter().map(|c| c.name().to_owned()).collect(),
        }
    }

    pub fn class_index(self, label: Class6, mapping: ThreeClassMapping) -> usize {
        match self {
            ClassScheme::Three => mapping.map(label).index(),
            ClassScheme::Six => label.index(),
        }
    }
}

/// A labeled vocal interval within one song.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: f64,
    pub end: f64,
    pub label: Class6,
}

impl Annotation {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

const ANNOTATION_HEADER: [&str; 3] = ["start_seconds", "end_seconds", "label"];

/// Parses the annotation CSV (`start_seconds,end_seconds,label`), sorting by
/// start and rejecting overlaps, inverted intervals and unknown labels.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| DatasetError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ANNOTATION_HEADER {
        return Err(DatasetError::Parse {
            line: 1,
            message: format!("expected header {}", ANNOTATION_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |i: usize| -> Result<f64, DatasetError> {
            let field = record.get(i).unwrap_or("");
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::Parse {
                    line,
                    message: format!("{:?} is not a number", field),
                })
        };
        let (start, end) = (number(0)?, number(1)?);
        let raw = record.get(2).unwrap_or("");
        let label = Class6::parse(raw).filter(|c| c.is_vocal()).ok_or_else(|| {
            DatasetError::UnknownLabel {
                line,
                label: raw.to_owned(),
            }
        })?;
        if start < 0.0 {
            return Err(DatasetError::Parse {
                line,
                message: format!("negative start {start}"),
            });
        }
        if end <= start {
            return Err(DatasetError::EndBeforeStart { line, start, end });
        }
        out.push(Annotation { start, end, label });
    }
    out.sort_by(|a, b| a.start.total_cmp(&b.start));
    for w in out.windows(2) {
        if w[0].end > w[1].start {
            return Err(DatasetError::Overlap {
                a_start: w[0].start,
                a_end: w[0].end,
                b_start: w[1].start,
                b_end: w[1].end,
            });
        }
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_annotations(&text)
}

/// A block with its song/band identity and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBlock {
    pub block_ref: BlockRef,
    pub band_id: String,
    pub start_time: f64,
    pub label6: Class6,
}

impl LabeledBlock {
    pub fn label3(&self) -> Class3 {
        map_3class(self.label6)
    }

    pub fn class_index(&self, scheme: ClassScheme, mapping: ThreeClassMapping) -> usize {
        scheme.class_index(self.label6, mapping)
    }
}

const TIE_EPS: f64 = 1e-9;

/// Majority-overlap label of the span `[start, end)`. Unannotated time counts
/// toward `NoVocal`; ties prefer vocal classes, then
/// Layered > LowFry > MidFry > HighFry > Sing.
pub fn label_span(start: f64, end: f64, annotations: &[Annotation]) -> Class6 {
    let mut overlap = [0.0f64; 6];
    for a in annotations {
        let ov = (a.end.min(end) - a.start.max(start)).max(0.0);
        overlap[a.label.index()] += ov;
    }
    let vocal: f64 = overlap.iter().sum();
    overlap[Class6::NoVocal.index()] = ((end - start) - vocal).max(0.0);
    let mut best = Class6::NoVocal;
    for c in Class6::ALL {
        let (ov, best_ov) = (overlap[c.index()], overlap[best.index()]);
        if ov > best_ov + TIE_EPS
            || ((ov - best_ov).abs() <= TIE_EPS && c.priority() > best.priority())
        {
            best = c;
        }
    }
    best
}

pub fn label_blocks(
    blocks: &[Block],
    annotations: &[Annotation],
    band_id: &str,
) -> Vec<LabeledBlock> {
    blocks
        .iter()
        .map(|b| LabeledBlock {
            block_ref: b.block_ref(),
            band_id: band_id.to_owned(),
            start_time: b.start_time,
            label6: label_span(b.start_time, b.start_time + b.duration_secs(), annotations),
        })
        .collect()
}

/// Class-balancing target: the minimum class count floored to a multiple of
/// 1000, or the minimum itself when it is below 1000.
pub fn undersample_target(min_count: usize) -> usize {
    if min_count < 1000 {
        min_count
    } else {
        (min_count / 1000) * 1000
    }
    .max(1)
}

/// Reduces every class above the target count by seeded uniform sampling
/// without replacement. Output is sorted by block reference.
pub fn undersample(
    blocks: &[LabeledBlock],
    scheme: ClassScheme,
    mapping: ThreeClassMapping,
    seed: u64,
) -> Vec<LabeledBlock> {
    let mut sorted: Vec<&LabeledBlock> = blocks.iter().collect();
    sorted.sort_by(|a, b| a.block_ref.cmp(&b.block_ref));
    let mut by_class: BTreeMap<usize, Vec<&LabeledBlock>> = BTreeMap::new();
    for b in sorted {
        by_class
            .entry(b.class_index(scheme, mapping))
            .or_default()
            .push(b);
    }
    let Some(min) = by_class.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let target = undersample_target(min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<LabeledBlock> = Vec::with_capacity(target * by_class.len());
    for members in by_class.values() {
        if members.len() > target {
            let mut picks = index::sample(&mut rng, members.len(), target).into_vec();
            picks.sort_unstable();
            kept.extend(picks.into_iter().map(|i| members[i].clone()));
        } else {
            kept.extend(members.iter().map(|&b| b.clone()));
        }
    }
    kept.sort_by(|a, b| a.block_ref.cmp(&b.block_ref));
    kept
}

/// Train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledBlock>,
    pub validation: Vec<LabeledBlock>,
    pub test: Vec<LabeledBlock>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl Split {
    /// Bands that occur both in train and in validation ∪ test.
    pub fn band_violations(&self) -> Vec<String> {
        let train: BTreeSet<&str> = self.train.iter().map(|b| b.band_id.as_str()).collect();
        let rest: BTreeSet<&str> = self
            .validation
            .iter()
            .chain(&self.test)
            .map(|b| b.band_id.as_str())
            .collect();
        train.intersection(&rest).map(|s| (*s).to_owned()).collect()
    }

    pub fn to_file(&self) -> SplitFile {
        let refs = |v: &[LabeledBlock]| v.iter().map(|b| b.block_ref.clone()).collect();
        SplitFile {
            seed: self.seed,
            ratios: self.ratios,
            train: refs(&self.train),
            validation: refs(&self.validation),
            test: refs(&self.test),
        }
    }
}

/// On-disk split: block references per partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<BlockRef>,
    pub validation: Vec<BlockRef>,
    pub test: Vec<BlockRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl SplitFile {
    pub fn partition_of(&self) -> BTreeMap<BlockRef, Partition> {
        let mut map = BTreeMap::new();
        for (refs, p) in [
            (&self.train, Partition::Train),
            (&self.validation, Partition::Validation),
            (&self.test, Partition::Test),
        ] {
            for r in refs {
                map.insert(r.clone(), p);
            }
        }
        map
    }
}

/// Band-level split: whole bands are packed greedily (seeded order, largest
/// first) into train until it is as close as possible to `ratios[0]` of the
/// blocks; the remaining blocks are shuffled and divided between validation
/// and test in proportion `ratios[1] : ratios[2]`.
pub fn band_split(
    blocks: &[LabeledBlock],
    ratios: [f64; 3],
    seed: u64,
) -> Result<Split, DatasetError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0))
        || ratios[0] <= 0.0
        || ratios[1] + ratios[2] <= 0.0
    {
        return Err(DatasetError::InvalidRatios(ratios));
    }
    let total_ratio: f64 = ratios.iter().sum();
    let mut sorted: Vec<&LabeledBlock> = blocks.iter().collect();
    sorted.sort_by(|a, b| a.block_ref.cmp(&b.block_ref));
    let mut by_band: BTreeMap<&str, Vec<&LabeledBlock>> = BTreeMap::new();
    for b in &sorted {
        by_band.entry(b.band_id.as_str()).or_default().push(b);
    }
    if by_band.len() < 2 {
        return Err(DatasetError::TooFewBands(by_band.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bands: Vec<&str> = by_band.keys().copied().collect();
    bands.shuffle(&mut rng);
    // stable: equal-size bands keep their shuffled order
    bands.sort_by_key(|b| std::cmp::Reverse(by_band[b].len()));

    let target = sorted.len() as f64 * ratios[0] / total_ratio;
    let mut train_bands = BTreeSet::new();
    let mut train_count = 0usize;
    for band in &bands {
        // leave at least one band outside train
        if train_bands.len() + 1 == bands.len() {
            break;
        }
        let size = by_band[band].len();
        let improves =
            ((train_count + size) as f64 - target).abs() < (train_count as f64 - target).abs();
        if train_bands.is_empty() || improves {
            train_bands.insert(*band);
            train_count += size;
        }
    }

    let mut train = Vec::new();
    let mut rest = Vec::new();
    for b in sorted {
        if train_bands.contains(b.band_id.as_str()) {
            train.push(b.clone());
        } else {
            rest.push(b.clone());
        }
    }
    rest.shuffle(&mut rng);
    let n_val = (rest.len() as f64 * ratios[1] / (ratios[1] + ratios[2])).round() as usize;
    let mut test = rest.split_off(n_val.min(rest.len()));
    let mut validation = rest;
    validation.sort_by(|a, b| a.block_ref.cmp(&b.block_ref));
    test.sort_by(|a, b| a.block_ref.cmp(&b.block_ref));
    let split = Split {
        train,
        validation,
        test,
        seed,
        ratios,
    };
    if let Some(band) = split.band_violations().into_iter().next() {
        return Err(DatasetError::BandLeak { band });
    }
    Ok(split)
}

/// Counts and durations describing a labeled dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_blocks: usize,
    pub block_counts6: BTreeMap<String, usize>,
    pub block_counts3: BTreeMap<String, usize>,
    pub annotated_seconds: BTreeMap<String, f64>,
    pub total_annotated_seconds: f64,
    pub songs_per_band: BTreeMap<String, usize>,
}

/// `annotations` maps song id to that song's intervals.
pub fn dataset_stats(
    blocks: &[LabeledBlock],
    annotations: &BTreeMap<String, Vec<Annotation>>,
) -> DatasetStats {
    let mut stats = DatasetStats {
        total_blocks: blocks.len(),
        ..DatasetStats::default()
    };
    for c in Class6::ALL {
        stats.block_counts6.insert(c.name().to_owned(), 0);
        if c.is_vocal() {
            stats.annotated_seconds.insert(c.name().to_owned(), 0.0);
        }
    }
    for c in Class3::ALL {
        stats.block_counts3.insert(c.name().to_owned(), 0);
    }
    let mut songs: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for b in blocks {
        *stats.block_counts6.get_mut(b.label6.name()).unwrap() += 1;
        *stats.block_counts3.get_mut(b.label3().name()).unwrap() += 1;
        songs
            .entry(&b.band_id)
            .or_default()
            .insert(&b.block_ref.source_id);
    }
    stats.songs_per_band = songs
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.len()))
        .collect();
    for a in annotations.values().flatten() {
        *stats.annotated_seconds.get_mut(a.label.name()).unwrap() += a.duration();
        stats.total_annotated_seconds += a.duration();
    }
    stats
}

/// One song of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub song_id: String,
    pub band_id: String,
    pub audio_path: PathBuf,
    pub annotation_path: PathBuf,
    /// Optional per-song embedding file (JSON-Lines) for Feature Set 2.
    #[serde(default)]
    pub vggish_path: Option<PathBuf>,
}

/// Reads `song_id,band_id,audio_path,annotation_path[,vggish_path]`. Relative
/// paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = parse_manifest(&text)?;
    for row in &mut rows {
        for p in [&mut row.audio_path, &mut row.annotation_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = row.vggish_path.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    }
    Ok(rows)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize::<ManifestRow>() {
        let row = record.map_err(|e| DatasetError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        rows.push(ManifestRow {
            vggish_path: row.vggish_path.filter(|p| !p.as_os_str().is_empty()),
            ..row
        });
    }
    Ok(rows)
}
