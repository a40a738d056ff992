//! Assembles every computable feature set for one block and z-scores FS1
//! with a normalizer fitted on a handful of blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screamkit::featureset::{FeatureExtractor, Normalizer};
use screamkit::{Block, FeatureSetId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let extractor = FeatureExtractor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let blocks: Vec<Block> = (0..8)
        .map(|_| {
            let amp = rng.random_range(0.05..1.0);
            Block::from_samples(
                (0..88_200)
                    .map(|_| amp * rng.random_range(-1.0..1.0))
                    .collect(),
            )
        })
        .collect();

    for set in [
        FeatureSetId::Fs1,
        FeatureSetId::Fs3,
        FeatureSetId::Fs4,
        FeatureSetId::Fs5,
    ] {
        let v = extractor.assemble(&blocks[0], set)?;
        println!(
            "{set}: {} values{}, normalized: {}",
            v.len(),
            v.shape
                .map_or(String::new(), |[r, c]| format!(" ({r} x {c})")),
            set.is_normalized()
        );
    }

    let fs1: Vec<_> = blocks
        .iter()
        .map(|b| extractor.assemble(b, FeatureSetId::Fs1))
        .collect::<Result<_, _>>()?;
    let norm = Normalizer::fit(&fs1)?;
    let z = norm.apply(&fs1[0])?;
    println!("fs1 block 0, first 5 raw:    {:.3?}", &fs1[0].values[..5]);
    println!("fs1 block 0, first 5 scaled: {:.3?}", &z.values[..5]);
    Ok(())
}
