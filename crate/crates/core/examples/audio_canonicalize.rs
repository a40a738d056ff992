//! Decodes a WAV file (or a generated stereo 48 kHz tone) and converts it to
//! the canonical 44.1 kHz mono, peak-normalized form.
//!
//! ```sh
//! cargo run --example audio_canonicalize -- song.wav
//! ```

use std::f64::consts::PI;

use screamkit::audio_io::{canonicalize, decode_wav, encode_wav, read_wav, SampleFormat};
use screamkit::AudioClip;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clip = match std::env::args().nth(1) {
        Some(path) => read_wav(path.as_ref())?,
        None => {
            let n = 48_000;
            let left = (0..n)
                .map(|i| 0.4 * (2.0 * PI * 440.0 * i as f64 / 48_000.0).sin())
                .collect();
            let right = (0..n)
                .map(|i| 0.2 * (2.0 * PI * 660.0 * i as f64 / 48_000.0).sin())
                .collect();
            let stereo = AudioClip::new(vec![left, right], 48_000, "tone")?;
            // round trip through a 24-bit file image
            decode_wav(&encode_wav(&stereo, SampleFormat::Pcm24), "tone")?
        }
    };
    println!(
        "input:     {} Hz, {} channel(s), {:.3} s",
        clip.sample_rate,
        clip.num_channels(),
        clip.duration_secs()
    );

    let canon = canonicalize(&clip);
    let peak = canon.channels[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!(
        "canonical: {} Hz, {} channel(s), {} samples, peak {peak:.6}",
        canon.sample_rate,
        canon.num_channels(),
        canon.len()
    );
    Ok(())
}
