//! Generates a small synthetic corpus and runs extract → split → train →
//! eval → project → stats on it.
//!
//! ```sh
//! cargo run --release --example full_pipeline -- /tmp/screamkit-demo
//! ```

use std::path::PathBuf;

use screamkit::dataset::Class6;
use screamkit::eval::read_report;
use screamkit::pipeline::{
    cmd_eval, cmd_extract, cmd_project, cmd_split, cmd_stats, cmd_train, ExperimentConfig,
    ExperimentSpec,
};
use screamkit::synth::{write_corpus, CorpusSpec};
use screamkit::FeatureSetId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCREAMKIT_LOG", "info")).init();
    let root = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("screamkit-demo"),
        PathBuf::from,
    );

    let manifest = write_corpus(
        &root.join("corpus"),
        &CorpusSpec {
            bands: 5,
            songs_per_band: 2,
            segments_per_song: 6,
            classes: vec![
                Class6::Sing,
                Class6::MidFry,
                Class6::HighFry,
                Class6::LowFry,
                Class6::NoVocal,
            ],
            embeddings: true,
            seed: 7,
        },
    )?;

    let mut cfg = ExperimentConfig::with_seed(42);
    cfg.manifest = Some(manifest);
    cfg.out = root.join("out");
    cfg.experiments = [
        FeatureSetId::Fs1,
        FeatureSetId::Fs2,
        FeatureSetId::Fs4,
        FeatureSetId::Fs5,
    ]
    .map(ExperimentSpec::new)
    .to_vec();
    // a CNN small enough to train in seconds
    cfg.cnn.conv_channels = vec![4, 8, 8];
    cfg.cnn.dense = vec![16];
    cfg.cnn.train.epochs = 15;
    cfg.tsne.perplexity = 20.0;
    cfg.validate()?;

    cmd_stats(&cfg)?;
    cmd_extract(&cfg)?;
    let split = cmd_split(&cfg, None)?;
    println!(
        "split: {} train / {} validation / {} test",
        split.train, split.validation, split.test
    );
    for t in cmd_train(&cfg)? {
        println!("trained {} on {} blocks", t.stem, t.train_records);
    }
    for path in cmd_eval(&cfg)? {
        let r = read_report(&path)?;
        println!(
            "{:<24} acc {:.3}  bal_acc {:.3}  macro_f1 {:.3}",
            path.file_stem().unwrap().to_string_lossy(),
            r.acc,
            r.bal_acc,
            r.macro_f1
        );
    }
    let proj = cmd_project(&cfg, None)?;
    println!("projection written to {}", proj.display());
    Ok(())
}
