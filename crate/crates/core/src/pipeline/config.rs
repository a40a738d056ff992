use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{ClassScheme, ThreeClassMapping};
use crate::eval::TsneParams;
use crate::featureset::FeatureSetId;
use crate::models::{CnnArchitecture, CnnTrainConfig, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Svm,
    Cnn,
}

impl Classifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::Svm => "svm",
            Classifier::Cnn => "cnn",
        }
    }

    /// The classifier paired with a feature set: the CNN takes FS5, the SVM
    /// everything else.
    pub fn for_set(set: FeatureSetId) -> Self {
        if set == FeatureSetId::Fs5 {
            Classifier::Cnn
        } else {
            Classifier::Svm
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub feature_set: FeatureSetId,
    pub classifier: Classifier,
}

impl ExperimentSpec {
    pub fn new(feature_set: FeatureSetId) -> Self {
        Self {
            feature_set,
            classifier: Classifier::for_set(feature_set),
        }
    }

    pub fn stem(&self, scheme: ClassScheme) -> String {
        format!(
            "{}_{}_{}class",
            self.feature_set,
            self.classifier.as_str(),
            scheme.n_classes()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnSettings {
    pub conv_channels: Vec<usize>,
    pub dense: Vec<usize>,
    pub train: CnnTrainConfig,
}

impl Default for CnnSettings {
    fn default() -> Self {
        let arch = CnnArchitecture::standard(3, 1, 1);
        Self {
            conv_channels: arch.conv_channels,
            dense: arch.dense,
            train: CnnTrainConfig::default(),
        }
    }
}

impl CnnSettings {
    pub fn architecture(
        &self,
        n_classes: usize,
        n_mels: usize,
        n_frames: usize,
    ) -> CnnArchitecture {
        CnnArchitecture {
            n_mels,
            n_frames,
            conv_channels: self.conv_channels.clone(),
            kernel_size: 3,
            dense: self.dense.clone(),
            n_classes,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_classes() -> u8 {
    3
}

fn default_ratios() -> [f64; 3] {
    [0.70, 0.15, 0.15]
}

fn default_true() -> bool {
    true
}

fn default_tsne_max_points() -> usize {
    500
}

/// JSON experiment configuration. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// 3 or 6.
    #[serde(default = "default_classes")]
    pub classes: u8,
    /// Sets written by `extract`; defaults to the sets the experiments use.
    #[serde(default)]
    pub feature_sets: Vec<FeatureSetId>,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
    pub split_seed: u64,
    pub undersample_seed: u64,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default = "default_true")]
    pub layered_as_scream: bool,
    /// Feature file whose blocks define the split; defaults to the first
    /// extracted set other than FS2.
    #[serde(default)]
    pub split_features: Option<FeatureSetId>,
    #[serde(default)]
    pub svm: SvmParams,
    #[serde(default)]
    pub cnn: CnnSettings,
    #[serde(default)]
    pub tsne: TsneParams,
    #[serde(default = "default_tsne_max_points")]
    pub tsne_max_points: usize,
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = Self {
            manifest: None,
            out: default_out(),
            classes: default_classes(),
            feature_sets: Vec::new(),
            experiments: Vec::new(),
            split_seed: seed,
            undersample_seed: seed,
            ratios: default_ratios(),
            layered_as_scream: true,
            split_features: None,
            svm: SvmParams::default(),
            cnn: CnnSettings::default(),
            tsne: TsneParams::default(),
            tsne_max_points: default_tsne_max_points(),
        };
        cfg.set_seed(seed);
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| PipelineError::MissingInput(path.to_owned()))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = cfg.manifest.as_mut().filter(|m| m.is_relative()) {
            *m = base.join(&*m);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    /// Sets every seed (split, undersampling, CNN, t-SNE).
    pub fn set_seed(&mut self, seed: u64) {
        self.split_seed = seed;
        self.undersample_seed = seed;
        self.cnn.train.seed = seed;
        self.tsne.seed = seed;
    }

    pub fn scheme(&self) -> Result<ClassScheme, PipelineError> {
        ClassScheme::from_count(self.classes).ok_or_else(|| {
            PipelineError::Config(format!("classes must be 3 or 6, got {}", self.classes))
        })
    }

    pub fn mapping(&self) -> ThreeClassMapping {
        ThreeClassMapping {
            layered_as_scream: self.layered_as_scream,
        }
    }

    /// Sets `extract` computes.
    pub fn extract_sets(&self) -> Vec<FeatureSetId> {
        let mut sets = if self.feature_sets.is_empty() {
            self.experiments.iter().map(|e| e.feature_set).collect()
        } else {
            self.feature_sets.clone()
        };
        if sets.is_empty() {
            sets.push(FeatureSetId::Fs1);
        }
        sets.sort_unstable();
        sets.dedup();
        sets
    }

    pub fn split_set(&self) -> FeatureSetId {
        self.split_features.unwrap_or_else(|| {
            self.extract_sets()
                .into_iter()
                .find(|&s| s != FeatureSetId::Fs2)
                .unwrap_or(FeatureSetId::Fs2)
        })
    }

    /// Checks scheme, ratios and the set/classifier pairing of every
    /// experiment.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scheme()?;
        if self.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || self.ratios[0] <= 0.0 {
            return Err(PipelineError::Config(format!(
                "invalid ratios {:?}",
                self.ratios
            )));
        }
        for e in &self.experiments {
            if Classifier::for_set(e.feature_set) != e.classifier {
                return Err(PipelineError::Config(format!(
                    "feature set {} cannot be used with classifier {}: fs5 requires cnn, fs1-fs4 require svm",
                    e.feature_set,
                    e.classifier.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub feature_sets: Vec<FeatureSetId>,
    pub classes: Option<u8>,
    /// Explicit feature file for `split` and `project`.
    pub features: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(c) = self.classes {
            cfg.classes = c;
        }
        if !self.feature_sets.is_empty() {
            cfg.feature_sets = self.feature_sets.clone();
            let kept: Vec<ExperimentSpec> = cfg
                .experiments
                .iter()
                .filter(|e| self.feature_sets.contains(&e.feature_set))
                .cloned()
                .collect();
            cfg.experiments = if kept.is_empty() {
                self.feature_sets
                    .iter()
                    .map(|&s| ExperimentSpec::new(s))
                    .collect()
            } else {
                kept
            };
        }
    }
}
