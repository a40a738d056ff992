//! Frame-level descriptors of a 2 s test signal: a 1 kHz tone followed by
//! white noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screamkit::dsp::{self, FrameConfig, MelFilterbank, MelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<f64> = (0..88_200)
        .map(|n| {
            if n < 44_100 {
                0.5 * (2.0 * PI * 1000.0 * n as f64 / 44_100.0).sin()
            } else {
                rng.random_range(-0.5..0.5)
            }
        })
        .collect();

    let cfg = FrameConfig::default();
    let spec = dsp::stft(&samples, &cfg)?;
    println!("stft: {} bins x {} frames", spec.n_bins(), spec.n_frames());

    let bank = MelFilterbank::new(MelParams::default(), &cfg)?;
    let logmel = dsp::log_compress(&dsp::mel_spectrogram(&spec, &bank)?);
    let mfcc = dsp::mfcc(&logmel, dsp::N_MFCC)?;
    let centroid = dsp::spectral_centroid(&spec);
    let flatness = dsp::spectral_flatness(&spec);
    let rolloff = dsp::spectral_rolloff(&spec, dsp::ROLLOFF_FRACTION)?;
    let zcr = dsp::frame_zcr(&samples, &cfg)?;
    let rms = dsp::frame_rms(&samples, &cfg)?;
    let contrast = dsp::spectral_contrast(&spec, dsp::CONTRAST_BANDS, dsp::CONTRAST_QUANTILE)?;

    println!("frame   centroid   rolloff  flatness     zcr     rms   mfcc0  contrast0");
    for t in [10, 30, 60, 80] {
        println!(
            "{t:>5} {:>10.1} {:>9.1} {:>9.4} {:>7.4} {:>7.4} {:>7.2} {:>10.2}",
            centroid.values[[0, t]],
            rolloff.values[[0, t]],
            flatness.values[[0, t]],
            zcr.values[[0, t]],
            rms.values[[0, t]],
            mfcc.values[[0, t]],
            contrast.values[[0, t]],
        );
    }
    Ok(())
}
