//! Labels blocks of a synthetic multi-band corpus, undersamples to balanced
//! classes and splits band-disjointly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screamkit::dataset::{
    band_split, dataset_stats, label_blocks, undersample, Class6, ClassScheme, ThreeClassMapping,
};
use screamkit::segmentation::make_blocks;
use screamkit::synth::synth_song;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut blocks = Vec::new();
    let mut annotations = BTreeMap::new();
    for band in 0..6 {
        for song in 0..2 {
            let segments: Vec<(Class6, f64)> = (0..5)
                .map(|_| {
                    (
                        Class6::ALL[rng.random_range(0..6)],
                        rng.random_range(3.0..7.0),
                    )
                })
                .collect();
            let id = format!("band{band}_song{song}");
            let (clip, anns) = synth_song(&segments, &id, rng.random());
            blocks.extend(label_blocks(
                &make_blocks(&clip, 2.0, 1.0)?,
                &anns,
                &format!("band{band}"),
            ));
            annotations.insert(id, anns);
        }
    }
    let stats = dataset_stats(&blocks, &annotations);
    println!(
        "{} blocks; 6-class counts {:?}",
        stats.total_blocks, stats.block_counts6
    );
    println!("3-class counts {:?}", stats.block_counts3);

    let balanced = undersample(&blocks, ClassScheme::Three, ThreeClassMapping::default(), 5);
    println!("after undersampling: {} blocks", balanced.len());

    let split = band_split(&balanced, [0.7, 0.15, 0.15], 5)?;
    for (name, part) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        let mut bands: Vec<&str> = part.iter().map(|b| b.band_id.as_str()).collect();
        bands.dedup();
        println!("{name:<10} {:>4} blocks from {bands:?}", part.len());
    }
    assert!(split.band_violations().is_empty());
    Ok(())
}
