use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::ArrayView2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Classifier, ExperimentConfig, ExperimentSpec};
use super::{write_json, Layout, PipelineError};
use crate::audio_io::load_canonical;
use crate::dataset::{
    band_split, dataset_stats, label_blocks, read_annotations, read_manifest, undersample,
    undersample_target, Annotation, Class6, ClassScheme, LabeledBlock, ManifestRow, Partition,
    SplitFile,
};
use crate::eval::{
    collapse_confusion, confusion_matrix_named, emit_projection_plot, emit_report,
    emit_report_plots, tsne, EvalReport, ExperimentDescriptor,
};
use crate::featureset::{
    ingest_vggish, read_feature_file, write_feature_file, FeatureExtractor, FeatureRecord,
    FeatureSetId, Normalizer,
};
use crate::models::cnn::fit_input_scaling;
use crate::models::{cnn_train, model_load, model_save, CnnModel, Model, SavedModel, SvmModel};
use crate::segmentation::{make_blocks, DEFAULT_BLOCK_SECS, DEFAULT_HOP_SECS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFailure {
    pub row: usize,
    pub song_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub files: BTreeMap<FeatureSetId, PathBuf>,
    pub records: BTreeMap<FeatureSetId, usize>,
    pub songs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub path: PathBuf,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub undersample_target: usize,
}

/// Per-experiment record counts seen by training; test records are counted
/// but never used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub stem: String,
    pub model_path: PathBuf,
    pub train_records: usize,
    pub validation_records: usize,
    pub excluded_test_records: usize,
}

fn manifest_rows(cfg: &ExperimentConfig) -> Result<Vec<ManifestRow>, PipelineError> {
    let path = cfg.manifest.as_ref().ok_or_else(|| {
        PipelineError::Config("no manifest given (--manifest or config key)".into())
    })?;
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.clone()));
    }
    Ok(read_manifest(path)?)
}

fn load_labeled(
    row: &ManifestRow,
) -> Result<(Vec<crate::Block>, Vec<Annotation>, Vec<LabeledBlock>), String> {
    let clip = load_canonical(&row.audio_path, &row.song_id)
        .map_err(|e| format!("{}: {e}", row.audio_path.display()))?;
    let anns = read_annotations(&row.annotation_path)
        .map_err(|e| format!("{}: {e}", row.annotation_path.display()))?;
    let blocks =
        make_blocks(&clip, DEFAULT_BLOCK_SECS, DEFAULT_HOP_SECS).map_err(|e| e.to_string())?;
    let labeled = label_blocks(&blocks, &anns, &row.band_id);
    Ok((blocks, anns, labeled))
}

fn extract_row(
    row: &ManifestRow,
    sets: &[FeatureSetId],
    extractor: &FeatureExtractor,
) -> Result<Vec<Vec<FeatureRecord>>, String> {
    let (blocks, _, labeled) = load_labeled(row)?;
    let mut per_set = Vec::with_capacity(sets.len());
    for &set in sets {
        let records = if set == FeatureSetId::Fs2 {
            let path = row.vggish_path.as_ref().ok_or_else(|| {
                "fs2 requested but the manifest row has no vggish_path".to_string()
            })?;
            let vectors = ingest_vggish(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut by_index = BTreeMap::new();
            for v in vectors {
                if v.block_ref.source_id != row.song_id {
                    return Err(format!(
                        "{}: embedding for {:?} in file of song {:?}",
                        path.display(),
                        v.block_ref.source_id,
                        row.song_id
                    ));
                }
                by_index.insert(v.block_ref.block_index, v);
            }
            labeled
                .iter()
                .filter_map(|lb| {
                    by_index.remove(&lb.block_ref.block_index).map(|mut v| {
                        v.label = Some(lb.label6);
                        FeatureRecord::from_vector(v, &row.band_id, lb.start_time)
                    })
                })
                .collect()
        } else {
            let mut out = Vec::with_capacity(blocks.len());
            for (block, lb) in blocks.iter().zip(&labeled) {
                let mut v = extractor.assemble(block, set).map_err(|e| e.to_string())?;
                v.label = Some(lb.label6);
                out.push(FeatureRecord::from_vector(v, &row.band_id, lb.start_time));
            }
            out
        };
        per_set.push(records);
    }
    Ok(per_set)
}

/// Runs `f` over `items` on all cores, returning results in input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

/// Extracts every configured feature set for every manifest row. Rows that
/// fail are reported together after the others are written.
pub fn cmd_extract(cfg: &ExperimentConfig) -> Result<ExtractSummary, PipelineError> {
    let rows = manifest_rows(cfg)?;
    let sets = cfg.extract_sets();
    let layout = Layout::new(&cfg.out);
    let extractor = FeatureExtractor::default();
    let results = parallel_map(&rows, |row| {
        let r = extract_row(row, &sets, &extractor);
        match &r {
            Ok(per_set) => log::info!(
                "extracted {} ({} blocks)",
                row.song_id,
                per_set.first().map_or(0, Vec::len)
            ),
            Err(e) => log::error!("failed {}: {e}", row.song_id),
        }
        r
    });
    let mut merged: Vec<Vec<FeatureRecord>> = vec![Vec::new(); sets.len()];
    let mut failures = Vec::new();
    for (i, (row, result)) in rows.iter().zip(results).enumerate() {
        match result {
            Ok(per_set) => {
                for (dst, recs) in merged.iter_mut().zip(per_set) {
                    dst.extend(recs);
                }
            }
            Err(message) => failures.push(RowFailure {
                row: i + 1,
                song_id: row.song_id.clone(),
                message,
            }),
        }
    }
    let mut summary = ExtractSummary {
        files: BTreeMap::new(),
        records: BTreeMap::new(),
        songs: rows.len() - failures.len(),
    };
    for (&set, records) in sets.iter().zip(&merged) {
        let path = layout.features(set);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
                path: dir.to_owned(),
                source,
            })?;
        }
        write_feature_file(&path, records)?;
        log::info!("wrote {} records to {}", records.len(), path.display());
        summary.records.insert(set, records.len());
        summary.files.insert(set, path);
    }
    if !failures.is_empty() {
        for f in &failures {
            log::error!("row {} ({}): {}", f.row, f.song_id, f.message);
        }
        return Err(PipelineError::Partial {
            failures,
            total: rows.len(),
        });
    }
    Ok(summary)
}

fn read_records(path: &Path) -> Result<Vec<FeatureRecord>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_owned()));
    }
    read_feature_file(path).map_err(|e| PipelineError::Schema {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn labeled_from_records(
    records: &[FeatureRecord],
    path: &Path,
) -> Result<Vec<LabeledBlock>, PipelineError> {
    records
        .iter()
        .map(|r| {
            let label6 = r.label.ok_or_else(|| PipelineError::Schema {
                path: path.to_owned(),
                message: format!("record {} has no label", r.block_ref()),
            })?;
            Ok(LabeledBlock {
                block_ref: r.block_ref(),
                band_id: r.band_id.clone(),
                start_time: r.start_s,
                label6,
            })
        })
        .collect()
}

/// Undersamples the labeled blocks of one feature file and splits them by
/// band; writes the split file.
pub fn cmd_split(
    cfg: &ExperimentConfig,
    features: Option<&Path>,
) -> Result<SplitSummary, PipelineError> {
    let layout = Layout::new(&cfg.out);
    let path = features.map_or_else(|| layout.features(cfg.split_set()), Path::to_path_buf);
    let records = read_records(&path)?;
    let blocks = labeled_from_records(&records, &path)?;
    let scheme = cfg.scheme()?;
    let mut per_class = BTreeMap::new();
    for b in &blocks {
        *per_class
            .entry(b.class_index(scheme, cfg.mapping()))
            .or_insert(0usize) += 1;
    }
    let target = per_class
        .values()
        .copied()
        .min()
        .map_or(0, undersample_target);
    let balanced = undersample(&blocks, scheme, cfg.mapping(), cfg.undersample_seed);
    let split = band_split(&balanced, cfg.ratios, cfg.split_seed)?;
    let violations = split.band_violations();
    if !violations.is_empty() {
        return Err(PipelineError::Config(format!(
            "band leak in split: {violations:?}"
        )));
    }
    let file = split.to_file();
    let out = layout.split();
    write_json(&out, &file)?;
    log::info!(
        "split {} blocks (target {target} per class): {} train, {} validation, {} test",
        balanced.len(),
        file.train.len(),
        file.validation.len(),
        file.test.len()
    );
    Ok(SplitSummary {
        path: out,
        train: file.train.len(),
        validation: file.validation.len(),
        test: file.test.len(),
        undersample_target: target,
    })
}

fn read_split(layout: &Layout) -> Result<SplitFile, PipelineError> {
    let path = layout.split();
    let text =
        std::fs::read_to_string(&path).map_err(|_| PipelineError::MissingInput(path.clone()))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Schema {
        path,
        message: e.to_string(),
    })
}

struct Partitioned {
    train: Vec<FeatureRecord>,
    validation: Vec<FeatureRecord>,
    test: Vec<FeatureRecord>,
}

fn partition(records: Vec<FeatureRecord>, split: &SplitFile) -> Partitioned {
    let map = split.partition_of();
    let mut p = Partitioned {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for r in records {
        match map.get(&r.block_ref()) {
            Some(Partition::Train) => p.train.push(r),
            Some(Partition::Validation) => p.validation.push(r),
            Some(Partition::Test) => p.test.push(r),
            None => {}
        }
    }
    p
}

fn class_of(
    r: &FeatureRecord,
    cfg: &ExperimentConfig,
    scheme: ClassScheme,
    path: &Path,
) -> Result<usize, PipelineError> {
    let label: Class6 = r.label.ok_or_else(|| PipelineError::Schema {
        path: path.to_owned(),
        message: format!("record {} has no label", r.block_ref()),
    })?;
    Ok(scheme.class_index(label, cfg.mapping()))
}

fn spectrogram_view<'a>(
    r: &'a FeatureRecord,
    path: &Path,
) -> Result<ArrayView2<'a, f64>, PipelineError> {
    let [rows, cols] = r.shape.ok_or_else(|| PipelineError::Schema {
        path: path.to_owned(),
        message: format!("record {} has no shape", r.block_ref()),
    })?;
    ArrayView2::from_shape((rows, cols), &r.values).map_err(|e| PipelineError::Schema {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn train_one(
    cfg: &ExperimentConfig,
    exp: &ExperimentSpec,
    split: &SplitFile,
    layout: &Layout,
) -> Result<TrainSummary, PipelineError> {
    let scheme = cfg.scheme()?;
    let stem = exp.stem(scheme);
    let path = layout.features(exp.feature_set);
    let records = read_records(&path)?;
    if let Some(r) = records.iter().find(|r| r.set_id != exp.feature_set) {
        return Err(PipelineError::Schema {
            path,
            message: format!("record {} belongs to {}", r.block_ref(), r.set_id),
        });
    }
    let parts = partition(records, split);
    // training reads only the train and validation partitions
    let Partitioned {
        train,
        validation,
        test,
    } = parts;
    log::info!(
        "{stem}: training on {} train + {} validation records; {} test records excluded",
        train.len(),
        validation.len(),
        test.len()
    );
    let excluded_test_records = test.len();
    drop(test);
    if train.is_empty() {
        return Err(PipelineError::Schema {
            path,
            message: "no records fall in the train partition".into(),
        });
    }
    let y_train = train
        .iter()
        .map(|r| class_of(r, cfg, scheme, &path))
        .collect::<Result<Vec<_>, _>>()?;
    let model = match exp.classifier {
        Classifier::Svm => {
            let vectors: Vec<_> = train.iter().map(FeatureRecord::to_vector).collect();
            let (vectors, normalizer) = if exp.feature_set.is_normalized() {
                let n = Normalizer::fit(&vectors)?;
                let v = vectors
                    .iter()
                    .map(|v| n.apply(v))
                    .collect::<Result<Vec<_>, _>>()?;
                (v, Some(n))
            } else {
                (vectors, None)
            };
            let mut m = crate::models::svm_train(&vectors, &y_train, &cfg.svm)?;
            m.normalizer = normalizer;
            Model::Svm(m)
        }
        Classifier::Cnn => {
            let xs = train
                .iter()
                .map(|r| spectrogram_view(r, &path))
                .collect::<Result<Vec<_>, _>>()?;
            let (h, w) = xs[0].dim();
            let train_set: Vec<_> = xs.iter().cloned().zip(y_train.iter().copied()).collect();
            let val_set = validation
                .iter()
                .map(|r| {
                    Ok((
                        spectrogram_view(r, &path)?,
                        class_of(r, cfg, scheme, &path)?,
                    ))
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let arch = cfg.cnn.architecture(scheme.n_classes(), h, w);
            let mut m = CnnModel::<f32>::init(arch, cfg.cnn.train.seed)?;
            fit_input_scaling(&mut m, &xs);
            let (m, history) = cnn_train(m, &train_set, &val_set, &cfg.cnn.train)?;
            write_json(&layout.history(&stem), &history)?;
            Model::Cnn(m)
        }
    };
    let saved = SavedModel {
        scheme,
        set_id: exp.feature_set,
        model,
    };
    let model_path = layout.model(&stem);
    if let Some(dir) = model_path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    model_save(&saved, &model_path)?;
    log::info!("{stem}: saved {}", model_path.display());
    Ok(TrainSummary {
        stem,
        model_path,
        train_records: train.len(),
        validation_records: validation.len(),
        excluded_test_records,
    })
}

/// Trains every configured experiment on the train (and, for the CNN,
/// validation) partition.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<TrainSummary>, PipelineError> {
    let layout = Layout::new(&cfg.out);
    let split = read_split(&layout)?;
    cfg.experiments
        .iter()
        .map(|exp| train_one(cfg, exp, &split, &layout))
        .collect()
}

fn predict(model: &Model, r: &FeatureRecord, path: &Path) -> Result<usize, PipelineError> {
    Ok(match model {
        Model::Svm(m) => predict_svm(m, r)?,
        Model::Cnn(m) => m.predict(&spectrogram_view(r, path)?)?,
    })
}

fn predict_svm(m: &SvmModel, r: &FeatureRecord) -> Result<usize, PipelineError> {
    let v = r.to_vector();
    let v = match &m.normalizer {
        Some(n) => n.apply(&v)?,
        None => v,
    };
    Ok(m.predict_vector(&v)?.label)
}

fn eval_one(
    cfg: &ExperimentConfig,
    exp: &ExperimentSpec,
    split: &SplitFile,
    layout: &Layout,
) -> Result<Vec<PathBuf>, PipelineError> {
    let scheme = cfg.scheme()?;
    let stem = exp.stem(scheme);
    let model_path = layout.model(&stem);
    if !model_path.exists() {
        return Err(PipelineError::MissingInput(model_path));
    }
    let saved = model_load(&model_path)?;
    if saved.set_id != exp.feature_set
        || saved.scheme != scheme
        || saved.model.kind() != exp.classifier.as_str()
    {
        return Err(PipelineError::Config(format!(
            "{} was trained for {} / {} classes / {}",
            model_path.display(),
            saved.set_id,
            saved.scheme.n_classes(),
            saved.model.kind()
        )));
    }
    let path = layout.features(exp.feature_set);
    let test = partition(read_records(&path)?, split).test;
    let mut y_true = Vec::with_capacity(test.len());
    let mut y_pred = Vec::with_capacity(test.len());
    for r in &test {
        y_true.push(class_of(r, cfg, scheme, &path)?);
        y_pred.push(predict(&saved.model, r, &path)?);
    }
    let names = scheme.class_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cm = confusion_matrix_named(&y_true, &y_pred, &name_refs)?;
    let descriptor = ExperimentDescriptor {
        feature_set: exp.feature_set.to_string(),
        classifier: exp.classifier.as_str().to_owned(),
        classes: scheme.n_classes(),
        seed: cfg.split_seed,
    };
    let report = EvalReport::new(descriptor.clone(), &cm);
    std::fs::create_dir_all(layout.reports_dir()).map_err(|source| PipelineError::Write {
        path: layout.reports_dir(),
        source,
    })?;
    let report_path = layout.report(&stem);
    emit_report(&report, &report_path)?;
    emit_report_plots(&report, &layout.reports_dir(), &stem)?;
    log::info!(
        "{stem}: acc {:.3}, bal_acc {:.3}, macro_f1 {:.3} on {} test blocks",
        report.acc,
        report.bal_acc,
        report.macro_f1,
        test.len()
    );
    let mut written = vec![report_path];
    if scheme == ClassScheme::Six {
        let three = ClassScheme::Three.class_names();
        let three_refs: Vec<&str> = three.iter().map(String::as_str).collect();
        let collapsed = collapse_confusion(&cm, &cfg.mapping().table(), &three_refs)?;
        let report3 = EvalReport::new(
            ExperimentDescriptor {
                classes: 3,
                ..descriptor
            },
            &collapsed,
        );
        let collapsed_stem = format!("{stem}_collapsed3");
        let p = layout.report(&collapsed_stem);
        emit_report(&report3, &p)?;
        emit_report_plots(&report3, &layout.reports_dir(), &collapsed_stem)?;
        written.push(p);
    }
    Ok(written)
}

/// Evaluates every configured experiment's model on the test partition and
/// writes reports and plots. Returns the report paths.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let layout = Layout::new(&cfg.out);
    let split = read_split(&layout)?;
    let mut out = Vec::new();
    for exp in &cfg.experiments {
        out.extend(eval_one(cfg, exp, &split, &layout)?);
    }
    Ok(out)
}

/// t-SNE projection of one feature file (at most `tsne_max_points` blocks,
/// chosen by seeded sampling). Aggregated sets are z-scored first.
pub fn cmd_project(
    cfg: &ExperimentConfig,
    features: Option<&Path>,
) -> Result<PathBuf, PipelineError> {
    let layout = Layout::new(&cfg.out);
    let set = cfg.extract_sets()[0];
    let path = features.map_or_else(|| layout.features(set), Path::to_path_buf);
    let mut records = read_records(&path)?;
    if records.len() > cfg.tsne_max_points {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.tsne.seed);
        let mut keep = index::sample(&mut rng, records.len(), cfg.tsne_max_points).into_vec();
        keep.sort_unstable();
        records = keep.into_iter().map(|i| records[i].clone()).collect();
    }
    let set = records.first().map_or(set, |r| r.set_id);
    let mut vectors: Vec<_> = records.iter().map(FeatureRecord::to_vector).collect();
    if set.is_normalized() && !vectors.is_empty() {
        let n = Normalizer::fit(&vectors)?;
        vectors = vectors
            .iter()
            .map(|v| n.apply(v))
            .collect::<Result<_, _>>()?;
    }
    let projection = tsne(&vectors, &cfg.tsne).map_err(|e| match e {
        crate::eval::EvalError::TooFewPoints { .. } => PipelineError::Config(e.to_string()),
        other => other.into(),
    })?;
    let out = layout.projection(set);
    write_json(&out, &projection)?;
    emit_projection_plot(&projection, &out.with_extension("svg"))?;
    log::info!(
        "projected {} blocks, final KL {:.4}",
        projection.points.len(),
        projection.final_kl
    );
    Ok(out)
}

/// Block counts and annotated durations over the manifest.
pub fn cmd_stats(cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let rows = manifest_rows(cfg)?;
    let results = parallel_map(&rows, load_labeled);
    let mut blocks = Vec::new();
    let mut annotations = BTreeMap::new();
    let mut failures = Vec::new();
    for (i, (row, r)) in rows.iter().zip(results).enumerate() {
        match r {
            Ok((_, anns, labeled)) => {
                blocks.extend(labeled);
                annotations.insert(row.song_id.clone(), anns);
            }
            Err(message) => failures.push(RowFailure {
                row: i + 1,
                song_id: row.song_id.clone(),
                message,
            }),
        }
    }
    let stats = dataset_stats(&blocks, &annotations);
    let out = Layout::new(&cfg.out).stats();
    write_json(&out, &stats)?;
    if !failures.is_empty() {
        return Err(PipelineError::Partial {
            failures,
            total: rows.len(),
        });
    }
    Ok(out)
}
