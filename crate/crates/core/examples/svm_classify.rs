//! Trains a one-vs-one RBF SVM on FS4 vectors of synthetic scream proxies,
//! saves it to JSON and reloads it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use screamkit::dataset::{Class6, ClassScheme};
use screamkit::featureset::FeatureExtractor;
use screamkit::models::{model_load, model_save, svm_train, Model, SavedModel, SvmParams};
use screamkit::synth::render_segment;
use screamkit::{Block, FeatureSetId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let classes = [Class6::Sing, Class6::MidFry, Class6::NoVocal];
    let extractor = FeatureExtractor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..12 {
        for (k, &c) in classes.iter().enumerate() {
            let block = Block::from_samples(render_segment(c, 88_200, &mut rng));
            vectors.push(extractor.assemble(&block, FeatureSetId::Fs4)?);
            labels.push(k);
        }
    }
    let (train, test) = vectors.split_at(27);
    let model = svm_train(train, &labels[..27], &SvmParams::default())?;
    println!(
        "support vectors per pair: {:?}",
        model
            .pairs
            .iter()
            .map(|p| p.support_vectors.len())
            .collect::<Vec<_>>()
    );

    let path = std::env::temp_dir().join("screamkit_svm_demo.json");
    model_save(
        &SavedModel {
            scheme: ClassScheme::Three,
            set_id: FeatureSetId::Fs4,
            model: Model::Svm(model),
        },
        &path,
    )?;
    let Model::Svm(reloaded) = model_load(&path)?.model else {
        unreachable!("saved an svm")
    };
    for (v, &y) in test.iter().zip(&labels[27..]) {
        let p = reloaded.predict_vector(v)?;
        println!(
            "true {:<8} predicted {:<8} votes {:?}",
            classes[y].name(),
            classes[p.label].name(),
            p.votes
        );
    }
    println!("model written to {}", path.display());
    Ok(())
}
