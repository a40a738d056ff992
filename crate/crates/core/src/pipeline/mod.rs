//! End-to-end commands: extract, split, train, eval, project, stats.
//!
//! Output layout under the configured `out` directory:
//!
//! ```text
//! features/<set>.jsonl          one FeatureRecord per block
//! split.json                    block references per partition
//! models/<stem>.json            trained model (+ <stem>_history.json for the CNN)
//! reports/<stem>.json           EvalReport (+ _recall.svg, _confusion.svg)
//! projections/<set>.json/.svg   t-SNE projection and scatter plot
//! stats.json                    dataset statistics
//! ```
//!
//! `<stem>` is `<set>_<classifier>_<k>class`, e.g. `fs1_svm_3class`.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{
    cmd_eval, cmd_extract, cmd_project, cmd_split, cmd_stats, cmd_train, ExtractSummary,
    RowFailure, SplitSummary, TrainSummary,
};
pub use config::{Classifier, CnnSettings, ExperimentConfig, ExperimentSpec, Overrides};

use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::featureset::{FeatureError, FeatureSetId};
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(PathBuf),
    #[error("invalid input {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{} of {} rows failed", failures.len(), total)]
    Partial {
        failures: Vec<RowFailure>,
        total: usize,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// 1 for partial or runtime failures, 2 for invalid configuration or
    /// input.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Partial { .. }
            | PipelineError::Write { .. }
            | PipelineError::Model(_)
            | PipelineError::Eval(_) => 1,
            _ => 2,
        }
    }
}

/// Paths of every artifact under an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn features(&self, set: FeatureSetId) -> PathBuf {
        self.out.join("features").join(format!("{set}.jsonl"))
    }

    pub fn split(&self) -> PathBuf {
        self.out.join("split.json")
    }

    pub fn model(&self, stem: &str) -> PathBuf {
        self.out.join("models").join(format!("{stem}.json"))
    }

    pub fn history(&self, stem: &str) -> PathBuf {
        self.out.join("models").join(format!("{stem}_history.json"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn report(&self, stem: &str) -> PathBuf {
        self.reports_dir().join(format!("{stem}.json"))
    }

    pub fn projection(&self, set: FeatureSetId) -> PathBuf {
        self.out.join("projections").join(format!("{set}.json"))
    }

    pub fn stats(&self) -> PathBuf {
        self.out.join("stats.json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Extract,
    Split,
    Train,
    Eval,
    Project,
    Stats,
}

impl Command {
    fn uses_seed(self) -> bool {
        matches!(self, Command::Split | Command::Train | Command::Project)
    }
}

/// Loads the config (or builds one from flags), applies overrides and runs
/// `command`.
pub fn run(
    command: Command,
    config: Option<&Path>,
    overrides: &Overrides,
) -> Result<(), PipelineError> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            if command.uses_seed() && overrides.seed.is_none() {
                return Err(PipelineError::Config(
                    "--seed is required without --config".into(),
                ));
            }
            ExperimentConfig::with_seed(overrides.seed.unwrap_or(0))
        }
    };
    overrides.apply(&mut cfg);
    if cfg.experiments.is_empty() {
        cfg.experiments = cfg
            .extract_sets()
            .into_iter()
            .map(ExperimentSpec::new)
            .collect();
    }
    cfg.validate()?;
    match command {
        Command::Extract => cmd_extract(&cfg).map(drop),
        Command::Split => cmd_split(&cfg, overrides.features.as_deref()).map(drop),
        Command::Train => cmd_train(&cfg).map(drop),
        Command::Eval => cmd_eval(&cfg).map(drop),
        Command::Project => cmd_project(&cfg, overrides.features.as_deref()).map(drop),
        Command::Stats => cmd_stats(&cfg).map(drop),
    }
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| PipelineError::Write {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}
