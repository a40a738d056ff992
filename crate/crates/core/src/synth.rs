//! Synthetic songs with known annotations, for demos and smoke tests.
//!
//! Sing is a vibrato tone with harmonics, the scream classes are band-passed
//! noise bursts with class-specific centre frequencies, and NoVocal is
//! near-silence.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{encode_wav, AudioClip, SampleFormat};
use crate::dataset::{Annotation, Class6};
use crate::featureset::{FeatureError, FeatureExtractor};
use crate::segmentation::make_blocks;
use crate::SAMPLE_RATE;

/// RBJ band-pass biquad (constant peak gain).
struct BandPass {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl BandPass {
    fn new(center: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * center / f64::from(SAMPLE_RATE);
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

fn scream_centers(label: Class6) -> &'static [f64] {
    match label {
        Class6::LowFry => &[350.0],
        Class6::MidFry => &[1200.0],
        Class6::HighFry => &[3500.0],
        Class6::Layered => &[350.0, 3500.0],
        _ => &[],
    }
}

/// Renders one segment of `label` lasting `n` samples.
pub fn render_segment(label: Class6, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let sr = f64::from(SAMPLE_RATE);
    match label {
        Class6::Sing => {
            let f0 = rng.random_range(180.0..420.0);
            let mut phase = 0.0;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let f = f0 * (1.0 + 0.01 * (2.0 * PI * 5.5 * t).sin());
                    phase += 2.0 * PI * f / sr;
                    0.6 * phase.sin() + 0.25 * (2.0 * phase).sin() + 0.1 * (3.0 * phase).sin()
                })
                .collect()
        }
        Class6::NoVocal => (0..n).map(|_| rng.random_range(-1e-3..1e-3)).collect(),
        scream => {
            let mut filters: Vec<BandPass> = scream_centers(scream)
                .iter()
                .map(|&c| BandPass::new(c * rng.random_range(0.9..1.1), 2.0))
                .collect();
            // bursts of 150-400 ms with short gaps
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let burst = (rng.random_range(0.15..0.4) * sr) as usize;
                let gap = (rng.random_range(0.02..0.08) * sr) as usize;
                for _ in 0..burst {
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    out.push(filters.iter_mut().map(|f| f.step(noise)).sum::<f64>() * 2.0);
                }
                for _ in 0..gap {
                    out.push(filters.iter_mut().map(|f| f.step(0.0)).sum::<f64>() * 2.0);
                }
            }
            out.truncate(n);
            out
        }
    }
}

/// Renders consecutive `(label, seconds)` segments into a mono clip and the
/// matching annotations (NoVocal segments are left unannotated).
pub fn synth_song(
    segments: &[(Class6, f64)],
    song_id: &str,
    seed: u64,
) -> (AudioClip, Vec<Annotation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(SAMPLE_RATE);
    let mut samples = Vec::new();
    let mut annotations = Vec::new();
    for &(label, secs) in segments {
        let start = samples.len() as f64 / sr;
        let n = (secs * sr).round() as usize;
        samples.extend(render_segment(label, n, &mut rng));
        if label != Class6::NoVocal {
            annotations.push(Annotation {
                start,
                end: samples.len() as f64 / sr,
                label,
            });
        }
    }
    (AudioClip::mono(samples, SAMPLE_RATE, song_id), annotations)
}

pub fn annotations_csv(annotations: &[Annotation]) -> String {
    let mut s = String::from("start_seconds,end_seconds,label\n");
    for a in annotations {
        s.push_str(&format!("{},{},{}\n", a.start, a.end, a.label.name()));
    }
    s
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub bands: usize,
    pub songs_per_band: usize,
    /// Segments per song; each lasts 4-8 s.
    pub segments_per_song: usize,
    /// Labels drawn uniformly for each segment.
    pub classes: Vec<Class6>,
    /// Also write 128-d proxy embeddings for FS2 (block-mean log-mel).
    pub embeddings: bool,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            bands: 4,
            songs_per_band: 2,
            segments_per_song: 6,
            classes: vec![
                Class6::Sing,
                Class6::MidFry,
                Class6::HighFry,
                Class6::LowFry,
                Class6::NoVocal,
            ],
            embeddings: false,
            seed: 0,
        }
    }
}

/// Writes WAVs, annotation CSVs, optional embedding files and a manifest into
/// `dir`. Returns the manifest path.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Result<PathBuf, FeatureError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| FeatureError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut manifest = String::from("song_id,band_id,audio_path,annotation_path,vggish_path\n");
    let extractor = FeatureExtractor::default();
    for band in 0..spec.bands {
        for song in 0..spec.songs_per_band {
            let song_id = format!("band{band}_song{song}");
            // every song starts with one pass through all classes so each
            // band covers the inventory
            let mut labels = spec.classes.clone();
            while labels.len() < spec.segments_per_song {
                labels.push(spec.classes[rng.random_range(0..spec.classes.len())]);
            }
            let segments: Vec<(Class6, f64)> = labels
                .into_iter()
                .map(|l| (l, rng.random_range(4.0..8.0f64).round()))
                .collect();
            let (clip, anns) = synth_song(&segments, &song_id, rng.random());
            let wav = dir.join(format!("{song_id}.wav"));
            let csv = dir.join(format!("{song_id}.csv"));
            std::fs::write(&wav, encode_wav(&clip, SampleFormat::Pcm16)).map_err(io(&wav))?;
            std::fs::write(&csv, annotations_csv(&anns)).map_err(io(&csv))?;
            let mut vggish = String::new();
            if spec.embeddings {
                let path = dir.join(format!("{song_id}.vggish.jsonl"));
                let canonical = crate::audio_io::canonicalize(&clip);
                let blocks = make_blocks(&canonical, 2.0, 1.0).expect("canonical clip");
                let mut file = std::fs::File::create(&path).map_err(io(&path))?;
                for b in &blocks {
                    let lm = extractor.log_mel(&b.samples)?;
                    let emb: Vec<f64> = lm
                        .values
                        .rows()
                        .into_iter()
                        .map(|r| r.mean().unwrap_or(0.0))
                        .collect();
                    let line = serde_json::json!({"source_id": song_id, "block_index": b.block_index, "embedding": emb});
                    writeln!(file, "{line}").map_err(io(&path))?;
                }
                vggish = path.file_name().unwrap().to_string_lossy().into_owned();
            }
            manifest.push_str(&format!(
                "{song_id},band{band},{},{},{vggish}\n",
                wav.file_name().unwrap().to_string_lossy(),
                csv.file_name().unwrap().to_string_lossy()
            ));
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(io(&path))?;
    Ok(path)
}
