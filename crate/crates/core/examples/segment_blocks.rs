//! Cuts a synthetic annotated song into 2 s blocks with a 1 s hop and labels
//! each block by majority overlap.

use screamkit::dataset::{label_blocks, Class6};
use screamkit::segmentation::{block_count, make_blocks};
use screamkit::synth::synth_song;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (clip, annotations) = synth_song(
        &[
            (Class6::NoVocal, 2.5),
            (Class6::Sing, 4.0),
            (Class6::HighFry, 3.0),
            (Class6::LowFry, 2.5),
        ],
        "demo_song",
        7,
    );
    println!("{:.1} s song, annotations:", clip.duration_secs());
    for a in &annotations {
        println!("  {:>5.2} - {:>5.2}  {}", a.start, a.end, a.label.name());
    }

    let blocks = make_blocks(&clip, 2.0, 1.0)?;
    assert_eq!(blocks.len(), block_count(clip.len(), 88_200, 44_100));
    for lb in label_blocks(&blocks, &annotations, "demo_band") {
        println!(
            "{:<14} start {:>4.1} s  {}",
            lb.block_ref.to_string(),
            lb.start_time,
            lb.label6.name()
        );
    }
    Ok(())
}
