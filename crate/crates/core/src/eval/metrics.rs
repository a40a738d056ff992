use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        Self {
            counts: vec![vec![0; k]; k],
            class_names,
        }
    }

    /// Builds from raw counts with generic class names `c0, c1, …`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(EvalError::NotSquare);
        }
        Ok(Self {
            counts,
            class_names: (0..k).map(|i| format!("c{i}")).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    k: usize,
) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::from_counts(vec![vec![0; k]; k])?;
    fill(&mut cm, y_true, y_pred)?;
    Ok(cm)
}

/// Like [`confusion_matrix`], with class names taken from `class_names`.
pub fn confusion_matrix_named(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: &[&str],
) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::zeros(class_names.iter().map(|s| s.to_string()).collect());
    fill(&mut cm, y_true, y_pred)?;
    Ok(cm)
}

fn fill(cm: &mut ConfusionMatrix, y_true: &[usize], y_pred: &[usize]) -> Result<(), EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    let k = cm.k();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(EvalError::LabelOutOfRange { label: t.max(p), k });
        }
        cm.counts[t][p] += 1;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    pub bal_acc: f64,
    pub macro_f1: f64,
    pub class_recall: Vec<f64>,
    pub class_f1: Vec<f64>,
}

/// Empty classes contribute a recall and F1 of 0 and still count in the
/// macro averages.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let k = cm.k();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let class_recall: Vec<f64> = (0..k)
        .map(|i| ratio(cm.counts[i][i], cm.row_sum(i)))
        .collect();
    // F1 = 2·tp / (row + col)
    let class_f1: Vec<f64> = (0..k)
        .map(|i| ratio(2 * cm.counts[i][i], cm.row_sum(i) + cm.col_sum(i)))
        .collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Metrics {
        acc: ratio(cm.trace(), cm.total()),
        bal_acc: mean(&class_recall),
        macro_f1: mean(&class_f1),
        class_recall,
        class_f1,
    }
}

/// Sums cells into target classes; `mapping[i]` is the target of class `i`.
pub fn collapse_confusion(
    cm: &ConfusionMatrix,
    mapping: &[usize],
    target_names: &[&str],
) -> Result<ConfusionMatrix, EvalError> {
    let k = target_names.len();
    if mapping.len() != cm.k() {
        return Err(EvalError::LengthMismatch {
            truth: cm.k(),
            predicted: mapping.len(),
        });
    }
    if let Some(&m) = mapping.iter().find(|&&m| m >= k) {
        return Err(EvalError::LabelOutOfRange { label: m, k });
    }
    let mut out = ConfusionMatrix::zeros(target_names.iter().map(|s| s.to_string()).collect());
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            out.counts[mapping[i]][mapping[j]] += c;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentDescriptor {
    pub feature_set: String,
    pub classifier: String,
    pub classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: ExperimentDescriptor,
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub acc: f64,
    pub bal_acc: f64,
    pub macro_f1: f64,
    pub class_recall: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn new(experiment: ExperimentDescriptor, cm: &ConfusionMatrix) -> Self {
        let m = metrics(cm);
        Self {
            experiment,
            class_names: cm.class_names.clone(),
            confusion: cm.counts.clone(),
            acc: m.acc,
            bal_acc: m.bal_acc,
            macro_f1: m.macro_f1,
            class_recall: cm.class_names.iter().cloned().zip(m.class_recall).collect(),
        }
    }

    pub fn confusion_matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: self.confusion.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Recalls in class order.
    pub fn recalls(&self) -> Vec<f64> {
        self.class_names
            .iter()
            .map(|n| self.class_recall[n])
            .collect()
    }
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| EvalError::Write(path.to_owned(), e))
}

pub fn read_report(path: &Path) -> Result<EvalReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Read(path.to_owned(), e))?;
    Ok(serde_json::from_str(&text)?)
}
