//! Projects three Gaussian clusters in 20 dimensions to 2-D with exact
//! t-SNE and writes a scatter plot.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use screamkit::dataset::Class6;
use screamkit::eval::{emit_projection_plot, tsne, TsneParams};
use screamkit::segmentation::BlockRef;
use screamkit::{FeatureSetId, FeatureVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0)?;
    let labels = [Class6::Sing, Class6::HighFry, Class6::NoVocal];
    let vectors: Vec<FeatureVector> = (0..150)
        .map(|i| {
            let c = i % 3;
            FeatureVector {
                set_id: FeatureSetId::Fs1,
                values: (0..20)
                    .map(|d| normal.sample(&mut rng) + if d == c { 12.0 } else { 0.0 })
                    .collect(),
                shape: None,
                block_ref: BlockRef::new("demo", i),
                label: Some(labels[c]),
            }
        })
        .collect();

    let params = TsneParams {
        perplexity: 20.0,
        seed: 3,
        ..TsneParams::default()
    };
    let projection = tsne(&vectors, &params)?;
    println!(
        "KL: initial {:.3}, after exaggeration {:.3}, final {:.3}",
        projection.initial_kl, projection.post_exaggeration_kl, projection.final_kl
    );
    let path = std::env::temp_dir().join("screamkit_tsne_demo.svg");
    emit_projection_plot(&projection, &path)?;
    println!("scatter plot written to {}", path.display());
    Ok(())
}
