//! Classifiers and model persistence.

pub mod cnn;
pub mod svm;

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::ClassScheme;
use crate::featureset::FeatureSetId;

pub use cnn::{
    cnn_init, cnn_train, CnnArchitecture, CnnModel, CnnTrainConfig, EpochStats, TrainingHistory,
};
pub use svm::{svm_predict, svm_train, Kernel, KernelSpec, SvmModel, SvmParams, SvmPrediction};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("solver did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("{samples} samples but {labels} labels")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected input shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("model expects feature set {expected}, got {got}")]
    WrongFeatureSet {
        expected: FeatureSetId,
        got: FeatureSetId,
    },
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A trained classifier of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Svm(SvmModel),
    Cnn(CnnModel<f32>),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Svm(_) => "svm",
            Model::Cnn(_) => "cnn",
        }
    }
}

/// A model plus the context it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub scheme: ClassScheme,
    pub set_id: FeatureSetId,
    pub model: Model,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlatLayer {
    rows: usize,
    cols: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CnnSnapshot {
    arch: CnnArchitecture,
    input_mean: f64,
    input_std: f64,
    train_config: CnnTrainConfig,
    conv: Vec<FlatLayer>,
    dense: Vec<FlatLayer>,
}

fn flatten(layers: &[cnn::LayerParams<f32>]) -> Vec<FlatLayer> {
    layers
        .iter()
        .map(|p| FlatLayer {
            rows: p.weight.nrows(),
            cols: p.weight.ncols(),
            weight: p.weight.iter().copied().collect(),
            bias: p.bias.to_vec(),
        })
        .collect()
}

fn unflatten(layers: Vec<FlatLayer>) -> Result<Vec<cnn::LayerParams<f32>>, ModelError> {
    layers
        .into_iter()
        .map(|l| {
            if l.bias.len() != l.rows {
                return Err(ModelError::Corrupt(
                    "bias length does not match layer".into(),
                ));
            }
            let weight = Array2::from_shape_vec((l.rows, l.cols), l.weight)
                .map_err(|e| ModelError::Corrupt(e.to_string()))?;
            Ok(cnn::LayerParams {
                weight,
                bias: Array1::from(l.bias),
            })
        })
        .collect()
}

impl CnnSnapshot {
    fn from_model(m: &CnnModel<f32>) -> Self {
        Self {
            arch: m.arch.clone(),
            input_mean: m.input_mean,
            input_std: m.input_std,
            train_config: m.train_config,
            conv: flatten(&m.conv),
            dense: flatten(&m.dense),
        }
    }

    fn into_model(self) -> Result<CnnModel<f32>, ModelError> {
        let reference = CnnModel::<f32>::init(self.arch.clone(), 0)?;
        let model = CnnModel {
            arch: self.arch,
            conv: unflatten(self.conv)?,
            dense: unflatten(self.dense)?,
            input_mean: self.input_mean,
            input_std: self.input_std,
            train_config: self.train_config,
        };
        let shapes = |m: &CnnModel<f32>| -> Vec<(usize, usize)> {
            m.layers().map(|p| p.weight.dim()).collect()
        };
        if shapes(&model) != shapes(&reference) {
            return Err(ModelError::Corrupt(
                "layer shapes do not match architecture".into(),
            ));
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    version: u32,
    checksum: String,
    payload: Value,
}

fn checksum(payload: &Value) -> Result<String, ModelError> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(payload)?)))
}

/// Serializes a model into the versioned, checksummed JSON container.
pub fn model_to_json(saved: &SavedModel) -> Result<String, ModelError> {
    let model = match &saved.model {
        Model::Svm(m) => serde_json::to_value(m)?,
        Model::Cnn(m) => serde_json::to_value(CnnSnapshot::from_model(m))?,
    };
    let payload = serde_json::json!({
        "scheme": saved.scheme,
        "set_id": saved.set_id,
        "model": model,
    });
    let file = ModelFile {
        kind: saved.model.kind().to_owned(),
        version: MODEL_FORMAT_VERSION,
        checksum: checksum(&payload)?,
        payload,
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn model_from_json(text: &str) -> Result<SavedModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: file.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if checksum(&file.payload)? != file.checksum {
        return Err(ModelError::ChecksumMismatch);
    }
    #[derive(Deserialize)]
    struct Payload {
        scheme: ClassScheme,
        set_id: FeatureSetId,
        model: Value,
    }
    let p: Payload = serde_json::from_value(file.payload)?;
    let model = match file.kind.as_str() {
        "svm" => Model::Svm(serde_json::from_value(p.model)?),
        "cnn" => Model::Cnn(serde_json::from_value::<CnnSnapshot>(p.model)?.into_model()?),
        other => return Err(ModelError::Corrupt(format!("unknown model kind {other:?}"))),
    };
    Ok(SavedModel {
        scheme: p.scheme,
        set_id: p.set_id,
        model,
    })
}

pub fn model_save(saved: &SavedModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, model_to_json(saved)?)?;
    Ok(())
}

pub fn model_load(path: &Path) -> Result<SavedModel, ModelError> {
    model_from_json(&std::fs::read_to_string(path)?)
}
