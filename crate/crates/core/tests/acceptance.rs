//! Acceptance suite: one PASS/FAIL line per criterion. Expected values come
//! from independent oracles written here (direct DFT, explicit DCT sums,
//! rational arithmetic, a perceptron separability check).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use screamkit::audio_io::AudioClip;
use screamkit::dataset::{
    band_split, undersample, Class6, ClassScheme, LabeledBlock, ThreeClassMapping,
};
use screamkit::dsp::{self, FrameConfig, LogMelSpectrogram, MelParams, Spectrogram};
use screamkit::eval::tsne::conditional_probabilities;
use screamkit::eval::{
    collapse_confusion, confusion_matrix, joint_probabilities, metrics, read_report, tsne_embed,
    TsneParams,
};
use screamkit::featureset::{FeatureExtractor, FeatureSetId};
use screamkit::models::cnn::{cnn_train, CnnArchitecture, CnnModel, CnnTrainConfig};
use screamkit::models::svm::{solve_binary, Kernel, SvmModel, SvmParams};
use screamkit::pipeline::{
    cmd_eval, cmd_extract, cmd_split, cmd_train, ExperimentConfig, ExperimentSpec,
};
use screamkit::segmentation::{make_blocks, BlockRef};
use screamkit::synth::{write_corpus, CorpusSpec};
use screamkit::Block;

const SR: f64 = 44_100.0;

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        ok: parts.iter().all(|p| p.ok),
        detail: parts
            .iter()
            .map(|p| format!("{}{}", if p.ok { "" } else { "!" }, p.detail))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn sine(freq: f64, len: usize, amp: f64) -> Vec<f64> {
    (0..len)
        .map(|n| amp * (2.0 * PI * freq * n as f64 / SR).sin())
        .collect()
}

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

// ---- oracles -------------------------------------------------------------

/// Reflect-padded, Hann-windowed frame `t` (window centred on `t·hop`).
fn oracle_frame(x: &[f64], t: usize, window: usize, hop: usize) -> Vec<f64> {
    let n = x.len() as i64;
    let half = (window / 2) as i64;
    (0..window)
        .map(|j| {
            let mut i = (t * hop) as i64 - half + j as i64;
            while i < 0 || i >= n {
                if i < 0 {
                    i = -i;
                }
                if i >= n {
                    i = 2 * (n - 1) - i;
                }
            }
            let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / window as f64).cos();
            w * x[i as usize]
        })
        .collect()
}

/// Direct one-sided DFT magnitudes.
fn oracle_dft(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * i % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn oracle_hz_to_mel(f: f64) -> f64 {
    if f < 1000.0 {
        f * 3.0 / 200.0
    } else {
        15.0 + (f / 1000.0).ln() * 27.0 / 6.4f64.ln()
    }
}

fn oracle_mel_to_hz(m: f64) -> f64 {
    if m < 15.0 {
        m * 200.0 / 3.0
    } else {
        1000.0 * ((m - 15.0) * 6.4f64.ln() / 27.0).exp()
    }
}

/// Slaney-style area-normalized triangles from 0 Hz to Nyquist.
fn oracle_mel_bank(n_mels: usize, n_fft: usize) -> Vec<Vec<f64>> {
    let top = oracle_hz_to_mel(SR / 2.0);
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| oracle_mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            (0..=n_fft / 2)
                .map(|k| {
                    let f = k as f64 * SR / n_fft as f64;
                    let up = (f - pts[m]) / (pts[m + 1] - pts[m]);
                    let down = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
                    up.min(down).max(0.0) * 2.0 / (pts[m + 2] - pts[m])
                })
                .collect()
        })
        .collect()
}

fn oracle_dct(x: &[f64], n_coeffs: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_coeffs)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            s * if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            }
        })
        .collect()
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact mean of `num_i / den_i` as a reduced fraction.
fn rational_mean(fracs: &[(u128, u128)]) -> (u128, u128) {
    let (mut n, mut d) = (0u128, 1u128);
    for &(a, b) in fracs {
        let (a, b) = if b == 0 { (0, 1) } else { (a, b) };
        n = n * b + a * d;
        d *= b;
        let g = gcd(n, d).max(1);
        n /= g;
        d /= g;
    }
    let k = fracs.len() as u128;
    let g = gcd(n, d * k).max(1);
    (n / g, d * k / g)
}

/// Perceptron with bias; `true` when it finds a separating line.
fn linearly_separable(points: &[[f64; 2]], labels: &[bool]) -> bool {
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let mut w = [0.0f64; 3];
    for _ in 0..20_000 {
        let mut mistakes = 0;
        for (p, &l) in points.iter().zip(labels) {
            let x = [p[0] / scale, p[1] / scale, 1.0];
            let y = if l { 1.0 } else { -1.0 };
            if y * (w[0] * x[0] + w[1] * x[1] + w[2] * x[2]) <= 0.0 {
                for d in 0..3 {
                    w[d] += y * x[d];
                }
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

fn kernel_decision(
    x: &[&[f64]],
    y: &[f64],
    alpha: &[f64],
    bias: f64,
    k: &Kernel,
    p: &[f64],
) -> f64 {
    x.iter()
        .zip(y)
        .zip(alpha)
        .map(|((xi, yi), ai)| ai * yi * k.eval(xi, p))
        .sum::<f64>()
        + bias
}

/// Largest KKT violation of a binary solution, with `f` recomputed here.
fn kkt_violation(x: &[&[f64]], y: &[f64], kernel: Kernel, c: f64) -> f64 {
    let sol = solve_binary(
        x,
        y,
        kernel,
        &SvmParams {
            c,
            ..SvmParams::default()
        },
        false,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let m = y[i] * kernel_decision(x, y, &sol.alpha, sol.bias, &kernel, x[i]);
        let a = sol.alpha[i];
        let v = if a <= 1e-12 {
            (1.0 - m).max(0.0)
        } else if a >= c - 1e-12 {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

// ---- criteria ------------------------------------------------------------

fn dsp_oracles() -> Outcome {
    let cfg = FrameConfig::default();
    let tone = sine(1000.0, 88_200, 1.0);
    let spec = dsp::stft(&tone, &cfg).unwrap();
    let interior = 1..spec.n_frames() - 1;

    let centroid = dsp::spectral_centroid(&spec);
    let c_worst = interior
        .clone()
        .map(|t| (centroid.values[[0, t]] - 1000.0).abs() / 1000.0)
        .fold(0.0, f64::max);

    let zcr = dsp::frame_zcr(&tone, &cfg).unwrap();
    let z_worst = interior
        .clone()
        .map(|t| (zcr.values[[0, t]] - 0.04535).abs() / 0.04535)
        .fold(0.0, f64::max);

    let rms = dsp::frame_rms(&tone, &cfg).unwrap();
    let r_mean = interior.clone().map(|t| rms.values[[0, t]]).sum::<f64>() / interior.len() as f64;

    let flat = Spectrogram {
        magnitudes: Array2::from_elem((1025, 4), 0.3),
        bin_freqs: (0..1025).map(|k| k as f64 * SR / 2048.0).collect(),
        frame_hop: 1024,
        window_size: 2048,
    };
    let flatness = dsp::spectral_flatness(&flat);
    let f_err = flatness
        .values
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);

    let sig = noise(30_000, 3);
    let nspec = dsp::stft(&sig, &cfg).unwrap();
    let (mut dft_err, mut parseval_err) = (0.0f64, 0.0f64);
    let mut peak_ok = true;
    for t in [0, 1, 7, nspec.n_frames() - 1] {
        let frame = oracle_frame(&sig, t, 2048, 1024);
        let mags = oracle_dft(&frame);
        let scale = mags.iter().copied().fold(0.0, f64::max);
        for (k, m) in mags.iter().enumerate() {
            dft_err = dft_err.max((nspec.magnitudes[[k, t]] - m).abs() / scale);
        }
        let energy: f64 = frame.iter().map(|v| v * v).sum::<f64>() * 2048.0;
        let col = nspec.magnitudes.column(t);
        let spec_energy = col[0].powi(2)
            + col[1024].powi(2)
            + 2.0 * (1..1024).map(|k| col[k].powi(2)).sum::<f64>();
        parseval_err = parseval_err.max((spec_energy - energy).abs() / energy);
    }
    for t in [1, 20, 40] {
        let mags = oracle_dft(&oracle_frame(&tone, t, 2048, 1024));
        let argmax = |v: &mut dyn Iterator<Item = f64>| {
            v.enumerate()
                .fold((0, f64::MIN), |b, (i, x)| if x > b.1 { (i, x) } else { b })
                .0
        };
        let lib = argmax(&mut spec.magnitudes.column(t).iter().copied());
        peak_ok &= lib == argmax(&mut mags.into_iter()) && lib == 46;
    }
    all(vec![
        check(
            c_worst < 0.01,
            format!("centroid max rel err {c_worst:.2e}"),
        ),
        check(z_worst < 0.05, format!("zcr max rel err {z_worst:.2e}")),
        check((r_mean - 0.70711).abs() < 1e-3, format!("rms {r_mean:.6}")),
        check(f_err <= 1e-9, format!("flatness err {f_err:.1e}")),
        check(peak_ok, "1 kHz peak bin 46"),
        check(dft_err < 1e-6, format!("stft vs dft {dft_err:.1e}")),
        check(parseval_err < 1e-6, format!("parseval {parseval_err:.1e}")),
    ])
}

fn mfcc_properties() -> Outcome {
    let params = MelParams::default();
    let constant = LogMelSpectrogram {
        values: Array2::from_elem((128, 5), -3.7),
        params,
        floor: dsp::POWER_FLOOR,
    };
    let c = dsp::mfcc(&constant, 13).unwrap();
    let const_err = (1..13)
        .flat_map(|k| (0..5).map(move |t| (k, t)))
        .map(|(k, t)| c.values[[k, t]].abs())
        .fold(0.0, f64::max);

    let ex = FeatureExtractor::default();
    let sig = noise(88_200, 11);
    let loud: Vec<f64> = sig.iter().map(|v| v * 3.5).collect();
    let m1 = dsp::mfcc(&ex.log_mel(&sig).unwrap(), 13).unwrap();
    let m2 = dsp::mfcc(&ex.log_mel(&loud).unwrap(), 13).unwrap();
    let scale_err = (1..13)
        .flat_map(|k| (0..m1.n_frames()).map(move |t| (k, t)))
        .map(|(k, t)| (m1.values[[k, t]] - m2.values[[k, t]]).abs())
        .fold(0.0, f64::max);

    let bank = oracle_mel_bank(128, 2048);
    let mut oracle_err = 0.0f64;
    for t in [0, 10, 43, 86] {
        let mags = oracle_dft(&oracle_frame(&sig, t, 2048, 1024));
        let logmel: Vec<f64> = bank
            .iter()
            .map(|w| {
                w.iter()
                    .zip(&mags)
                    .map(|(a, m)| a * m * m)
                    .sum::<f64>()
                    .max(1e-10)
                    .ln()
            })
            .collect();
        let expected = oracle_dct(&logmel, 13);
        for (k, e) in expected.iter().enumerate() {
            oracle_err = oracle_err.max((m1.values[[k, t]] - e).abs());
        }
    }
    all(vec![
        check(
            const_err <= 1e-9,
            format!("constant c1..c12 {const_err:.1e}"),
        ),
        check(
            scale_err <= 1e-6,
            format!("scale invariance {scale_err:.1e}"),
        ),
        check(oracle_err <= 1e-6, format!("vs oracle {oracle_err:.1e}")),
    ])
}

fn dimensional_contracts() -> Outcome {
    let ex = FeatureExtractor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    for i in 0..100 {
        let amp = rng.random_range(0.01..1.0);
        let kind = i % 3;
        let samples: Vec<f64> = (0..88_200)
            .map(|n| match kind {
                0 => amp * rng.random_range(-1.0..1.0),
                1 => amp * (2.0 * PI * 440.0 * n as f64 / SR).sin(),
                _ => 0.0,
            })
            .collect();
        let block = Block::from_samples(samples);
        for (set, len, shape) in [
            (FeatureSetId::Fs1, 76, None),
            (FeatureSetId::Fs3, 52, None),
            (FeatureSetId::Fs4, 24, None),
            (FeatureSetId::Fs5, 128 * 87, Some([128, 87])),
        ] {
            let v = ex.assemble(&block, set).unwrap();
            if v.values.len() != len || v.shape != shape || v.values.iter().any(|x| !x.is_finite())
            {
                bad.push(format!("block {i} {set}: {}", v.values.len()));
            }
        }
    }
    check(
        bad.is_empty(),
        format!("100 blocks, {} violations {:?}", bad.len(), bad.first()),
    )
}

fn svm_suite() -> Outcome {
    // symmetric pair around c: boundary must sit at c
    let mut shift = 0.0f64;
    for c in [0.0, 2.5, -7.0] {
        let pts = [vec![c - 1.0, 0.3], vec![c + 1.0, 0.3]];
        let x: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let y = [1.0, -1.0];
        let sol = solve_binary(&x, &y, Kernel::Linear, &SvmParams::default(), false).unwrap();
        let f_mid = kernel_decision(&x, &y, &sol.alpha, sol.bias, &Kernel::Linear, &[c, 0.3]);
        shift = shift.max(f_mid.abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let centers = [[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]];
    let mut blobs = Vec::new();
    let mut blob_y = Vec::new();
    for (ci, c) in centers.iter().enumerate() {
        for _ in 0..40 {
            blobs.push(vec![
                c[0] + rng.random_range(-1.0..1.0),
                c[1] + rng.random_range(-1.0..1.0),
            ]);
            blob_y.push(ci);
        }
    }
    let mut xor = Vec::new();
    let mut xor_y = Vec::new();
    for _ in 0..60 {
        let (a, b) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let p = vec![
            if a { 1.0 } else { -1.0 } + rng.random_range(-0.3..0.3),
            if b { 1.0 } else { -1.0 } + rng.random_range(-0.3..0.3),
        ];
        xor.push(p);
        xor_y.push(usize::from(a != b));
    }
    let train_acc = |x: &[Vec<f64>], y: &[usize], params: &SvmParams| {
        let m = SvmModel::train(x, y, params).unwrap();
        x.iter()
            .zip(y)
            .filter(|(p, &l)| m.predict(p).unwrap().label == l)
            .count() as f64
            / y.len() as f64
    };
    let rbf = SvmParams {
        c: 10.0,
        kernel: screamkit::models::KernelSpec::Rbf { gamma: Some(1.0) },
        ..SvmParams::default()
    };
    let linear = SvmParams {
        kernel: screamkit::models::KernelSpec::Linear,
        ..SvmParams::default()
    };
    let blob_acc = train_acc(&blobs, &blob_y, &linear);
    let xor_acc = train_acc(&xor, &xor_y, &rbf);

    // KKT on every binary problem above
    let mut kkt = 0.0f64;
    let pm = |l: bool| if l { 1.0 } else { -1.0 };
    let two = [vec![-1.0, 0.3], vec![1.0, 0.3]];
    let two_x: Vec<&[f64]> = two.iter().map(Vec::as_slice).collect();
    kkt = kkt.max(kkt_violation(&two_x, &[1.0, -1.0], Kernel::Linear, 1.0));
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let idx: Vec<usize> = (0..blobs.len())
            .filter(|&i| blob_y[i] == a || blob_y[i] == b)
            .collect();
        let x: Vec<&[f64]> = idx.iter().map(|&i| blobs[i].as_slice()).collect();
        let y: Vec<f64> = idx.iter().map(|&i| pm(blob_y[i] == a)).collect();
        kkt = kkt.max(kkt_violation(&x, &y, Kernel::Linear, 1.0));
    }
    let x: Vec<&[f64]> = xor.iter().map(Vec::as_slice).collect();
    let y: Vec<f64> = xor_y.iter().map(|&l| pm(l == 0)).collect();
    kkt = kkt.max(kkt_violation(&x, &y, Kernel::Rbf { gamma: 1.0 }, 10.0));
    // overlapping classes exercise bounded support vectors
    let noisy: Vec<Vec<f64>> = (0..80)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let noisy_y: Vec<f64> = noisy
        .iter()
        .map(|p| pm(p[0] + 0.3 * rng.random_range(-1.0..1.0) > 0.0))
        .collect();
    let x: Vec<&[f64]> = noisy.iter().map(Vec::as_slice).collect();
    kkt = kkt.max(kkt_violation(&x, &noisy_y, Kernel::Rbf { gamma: 0.5 }, 1.0));

    all(vec![
        check(shift < 1e-6, format!("midpoint |f| {shift:.1e}")),
        check(kkt <= 1e-3, format!("max KKT violation {kkt:.1e}")),
        check(blob_acc == 1.0, format!("blobs train acc {blob_acc}")),
        check(xor_acc == 1.0, format!("xor rbf train acc {xor_acc}")),
    ])
}

fn cnn_suite() -> Outcome {
    // gradient check on a tiny double-precision net
    let arch = CnnArchitecture {
        n_mels: 8,
        n_frames: 8,
        conv_channels: vec![2, 2, 2],
        kernel_size: 3,
        dense: vec![4],
        n_classes: 3,
    };
    let model = CnnModel::<f64>::init(arch, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<Array2<f64>> = (0..3)
        .map(|_| Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0)))
        .collect();
    let batch: Vec<(ArrayView2<f64>, usize)> =
        xs.iter().enumerate().map(|(i, x)| (x.view(), i)).collect();
    let (_, grads) = model.loss_and_gradient(&batch).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (li, g) in grads.iter().enumerate() {
        let n_w = g.weight.len();
        let cols = g.weight.ncols();
        for pi in 0..n_w + g.bias.len() {
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                let layer = m.layers_mut().nth(li).unwrap();
                if pi < n_w {
                    layer.weight[[pi / cols, pi % cols]] += delta;
                } else {
                    layer.bias[pi - n_w] += delta;
                }
                m.loss(&batch).unwrap()
            };
            let numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
            let analytic = if pi < n_w {
                g.weight[[pi / cols, pi % cols]]
            } else {
                g.bias[pi - n_w]
            };
            worst =
                worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }

    // overfit 32 synthetic log-mel patches: class = which mel band is lit
    let (h, w, k) = (128, 87, 4);
    let samples: Vec<(Array2<f64>, usize)> = (0..32)
        .map(|i| {
            let class = i % k;
            let band = 10 + class * 28;
            let x = Array2::from_shape_fn((h, w), |(r, _)| {
                let lit = if (band..band + 12).contains(&r) {
                    6.0
                } else {
                    0.0
                };
                -8.0 + lit + rng.random_range(-1.0..1.0)
            });
            (x, class)
        })
        .collect();
    let data: Vec<(ArrayView2<f64>, usize)> = samples.iter().map(|(x, y)| (x.view(), *y)).collect();
    let arch = CnnArchitecture {
        n_mels: h,
        n_frames: w,
        conv_channels: vec![4, 8, 8],
        kernel_size: 3,
        dense: vec![16, 8],
        n_classes: k,
    };
    let mut net = CnnModel::<f32>::init(arch, 1).unwrap();
    let views: Vec<_> = data.iter().map(|(x, _)| *x).collect();
    screamkit::models::cnn::fit_input_scaling(&mut net, &views);
    let cfg = CnnTrainConfig {
        epochs: 200,
        patience: 200,
        batch_size: 8,
        seed: 2,
        ..CnnTrainConfig::default()
    };
    let (trained, history) = cnn_train(net, &data, &[], &cfg).unwrap();
    let (_, acc) = trained.evaluate(&data).unwrap();
    let first_perfect = history.epochs.iter().position(|e| e.train_acc == 1.0);

    let mut sum_err = 0.0f64;
    for (x, _) in &data {
        let p = trained.forward(x).unwrap();
        sum_err = sum_err.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    all(vec![
        check(worst < 1e-4, format!("gradient max rel err {worst:.1e}")),
        check(
            acc == 1.0,
            format!("overfit train acc {acc} (first perfect epoch {first_perfect:?})"),
        ),
        check(sum_err <= 1e-9, format!("softmax sum err {sum_err:.1e}")),
    ])
}

fn metrics_suite() -> Outcome {
    let cm = confusion_matrix(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
    let m = metrics(&cm);
    let example = cm.counts == vec![vec![1, 0], vec![1, 1]]
        && m.acc == 2.0 / 3.0
        && m.bal_acc == 0.75
        && (m.macro_f1 - 2.0 / 3.0).abs() <= f64::EPSILON;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mean_mismatch = 0;
    let mut rational_err = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|_| {
                let empty = rng.random_bool(0.1);
                (0..k)
                    .map(|_| if empty { 0 } else { rng.random_range(0..50) })
                    .collect()
            })
            .collect();
        let cm = screamkit::eval::ConfusionMatrix::from_counts(counts.clone()).unwrap();
        let m = metrics(&cm);
        if m.bal_acc != m.class_recall.iter().sum::<f64>() / k as f64 {
            mean_mismatch += 1;
        }
        let fracs: Vec<(u128, u128)> = (0..k)
            .map(|i| (counts[i][i] as u128, counts[i].iter().sum::<u64>() as u128))
            .collect();
        let (n, d) = rational_mean(&fracs);
        rational_err = rational_err.max((m.bal_acc - n as f64 / d as f64).abs());
    }

    // collapse consistency: collapse(cm6) == confusion(map(y))
    let table = ThreeClassMapping::default().table();
    let mut collapse_bad = 0;
    for _ in 0..200 {
        let n = rng.random_range(0..300);
        let t6: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let p6: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let cm6 = confusion_matrix(&t6, &p6, 6).unwrap();
        let collapsed = collapse_confusion(&cm6, &table, &["Sing", "Scream", "NoVocal"]).unwrap();
        let t3: Vec<usize> = t6.iter().map(|&c| table[c]).collect();
        let p3: Vec<usize> = p6.iter().map(|&c| table[c]).collect();
        let direct = confusion_matrix(&t3, &p3, 3).unwrap();
        if collapsed.counts != direct.counts || metrics(&collapsed) != metrics(&direct) {
            collapse_bad += 1;
        }
    }
    all(vec![
        check(example, "[[1,0],[1,1]] example exact"),
        check(
            mean_mismatch == 0 && rational_err <= 1e-15,
            format!(
                "1000 matrices: {mean_mismatch} mean mismatches, rational err {rational_err:.1e}"
            ),
        ),
        check(
            collapse_bad == 0,
            format!("collapse consistency: {collapse_bad}/200 mismatches"),
        ),
    ])
}

fn dataset_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut violations = 0;
    let mut not_partition = 0;
    for trial in 0..1000 {
        let n_bands = rng.random_range(2..12);
        let mut blocks = Vec::new();
        for b in 0..n_bands {
            for s in 0..rng.random_range(1..4) {
                for i in 0..rng.random_range(1..40) {
                    blocks.push(LabeledBlock {
                        block_ref: BlockRef::new(format!("b{b}s{s}"), i),
                        band_id: format!("band{b}"),
                        start_time: i as f64,
                        label6: Class6::ALL[rng.random_range(0..6)],
                    });
                }
            }
        }
        let split = band_split(&blocks, [0.7, 0.15, 0.15], trial).unwrap();
        let train_bands: std::collections::BTreeSet<&str> =
            split.train.iter().map(|b| b.band_id.as_str()).collect();
        if split
            .validation
            .iter()
            .chain(&split.test)
            .any(|b| train_bands.contains(b.band_id.as_str()))
        {
            violations += 1;
        }
        let mut got: Vec<&BlockRef> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .map(|b| &b.block_ref)
            .collect();
        let mut want: Vec<&BlockRef> = blocks.iter().map(|b| &b.block_ref).collect();
        got.sort();
        want.sort();
        if got != want {
            not_partition += 1;
        }
    }

    // undersampling: determinism and exact counts
    let mut count_bad = 0;
    let mut nondeterministic = 0;
    for trial in 0..200u64 {
        let mut blocks = Vec::new();
        let sizes: Vec<usize> = (0..6).map(|_| rng.random_range(1..3000)).collect();
        for (c, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                blocks.push(LabeledBlock {
                    block_ref: BlockRef::new(format!("s{c}"), i),
                    band_id: "b".into(),
                    start_time: 0.0,
                    label6: Class6::ALL[c],
                });
            }
        }
        let a = undersample(
            &blocks,
            ClassScheme::Six,
            ThreeClassMapping::default(),
            trial,
        );
        let b = undersample(
            &blocks,
            ClassScheme::Six,
            ThreeClassMapping::default(),
            trial,
        );
        if a != b {
            nondeterministic += 1;
        }
        let min = *sizes.iter().min().unwrap();
        let target = if min < 1000 { min } else { min / 1000 * 1000 };
        let mut got = BTreeMap::new();
        for x in &a {
            *got.entry(x.label6.index()).or_insert(0usize) += 1;
        }
        for (c, &n) in sizes.iter().enumerate() {
            if got.get(&c).copied().unwrap_or(0) != n.min(target) {
                count_bad += 1;
            }
        }
    }

    // block-count formula on random durations
    let mut block_bad = 0;
    for _ in 0..300 {
        let len = rng.random_range(0..(20.0 * SR) as usize);
        let clip = AudioClip::mono(vec![0.0; len], 44_100, "x");
        let got = make_blocks(&clip, 2.0, 1.0).unwrap().len();
        let expected = (0..).take_while(|k| k * 44_100 + 88_200 <= len).count();
        if got != expected {
            block_bad += 1;
        }
    }
    all(vec![
        check(
            violations == 0 && not_partition == 0,
            format!("1000 splits: {violations} band leaks, {not_partition} non-partitions"),
        ),
        check(
            nondeterministic == 0 && count_bad == 0,
            format!("undersample: {nondeterministic} nondeterministic, {count_bad} wrong counts"),
        ),
        check(
            block_bad == 0,
            format!("block counts: {block_bad}/300 wrong"),
        ),
    ])
}

fn tsne_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let (u, v): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random_range(0.0..1.0));
        (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
    };
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let offset = if i < 100 { 0.0 } else { 50.0 };
        let mut p: Vec<f64> = (0..10).map(|_| gauss(&mut rng)).collect();
        p[0] += offset;
        x.push(p);
        labels.push(i < 100);
    }
    let p = joint_probabilities(&x, 30.0).unwrap();
    let sym = p
        .indexed_iter()
        .map(|((i, j), v)| (v - p[[j, i]]).abs())
        .fold(0.0, f64::max);
    let norm = (p.sum() - 1.0).abs();
    let neg = p.iter().any(|&v| v < 0.0);
    let perp = conditional_probabilities(&x, 30.0)
        .unwrap()
        .iter()
        .map(|c| (c.entropy.exp() - 30.0).abs())
        .fold(0.0, f64::max);

    let mut separable = 0;
    let mut kl_decreased = 0;
    let mut kls = Vec::new();
    for seed in 1..=5 {
        let params = TsneParams {
            perplexity: 30.0,
            iterations: 1000,
            seed,
            ..TsneParams::default()
        };
        let (y, [initial, post, fin]) = tsne_embed(&x, &params).unwrap();
        if linearly_separable(&y, &labels) {
            separable += 1;
        }
        if fin < initial && fin.is_finite() && fin >= 0.0 {
            kl_decreased += 1;
        }
        kls.push(format!("{initial:.2}->{post:.2}->{fin:.2}"));
    }
    all(vec![
        check(
            sym == 0.0 && !neg,
            format!("P symmetric (max asym {sym:.1e})"),
        ),
        check(norm <= 1e-9, format!("sum P - 1 = {norm:.1e}")),
        check(perp <= 1e-3, format!("perplexity err {perp:.1e}")),
        check(separable == 5, format!("{separable}/5 seeds separable")),
        check(kl_decreased == 5, format!("KL {}", kls.join(", "))),
    ])
}

fn end_to_end() -> Outcome {
    let run = |root: &std::path::Path| -> Result<(f64, Vec<Vec<u8>>), Box<dyn std::error::Error>> {
        let manifest = write_corpus(
            &root.join("corpus"),
            &CorpusSpec {
                bands: 4,
                songs_per_band: 2,
                segments_per_song: 6,
                classes: vec![
                    Class6::Sing,
                    Class6::MidFry,
                    Class6::HighFry,
                    Class6::LowFry,
                    Class6::NoVocal,
                ],
                embeddings: false,
                seed: 3,
            },
        )?;
        let mut cfg = ExperimentConfig::with_seed(17);
        cfg.manifest = Some(manifest);
        cfg.out = root.join("out");
        cfg.experiments = vec![
            ExperimentSpec::new(FeatureSetId::Fs1),
            ExperimentSpec::new(FeatureSetId::Fs5),
        ];
        cfg.cnn.conv_channels = vec![4, 8, 8];
        cfg.cnn.dense = vec![16];
        cfg.cnn.train.epochs = 8;
        cfg.validate()?;
        cmd_extract(&cfg)?;
        cmd_split(&cfg, None)?;
        cmd_train(&cfg)?;
        let reports = cmd_eval(&cfg)?;
        let fs1 = read_report(&reports[0])?;
        let bytes = reports
            .iter()
            .map(std::fs::read)
            .collect::<Result<Vec<_>, _>>()?;
        Ok((fs1.bal_acc, bytes))
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    match (run(a.path()), run(b.path())) {
        (Ok((bal, ra)), Ok((_, rb))) => all(vec![
            check(bal > 0.9, format!("fs1+svm 3-class bal_acc {bal:.3}")),
            check(
                ra.len() == 2 && ra == rb,
                "reports byte-identical across reruns",
            ),
        ]),
        (Err(e), _) | (_, Err(e)) => check(false, format!("pipeline error: {e}")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("dsp_oracle_suite", dsp_oracles, Duration::from_secs(10)),
        ("mfcc_properties", mfcc_properties, Duration::MAX),
        (
            "dimensional_contracts",
            dimensional_contracts,
            Duration::MAX,
        ),
        ("svm_suite", svm_suite, Duration::from_secs(30)),
        ("cnn_suite", cnn_suite, Duration::from_secs(180)),
        ("metrics_suite", metrics_suite, Duration::MAX),
        ("dataset_tooling", dataset_suite, Duration::MAX),
        ("tsne_suite", tsne_suite, Duration::from_secs(60)),
        ("end_to_end_smoke", end_to_end, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let ok = outcome.ok && in_time;
        failed += usize::from(!ok);
        let limit_note = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" / limit {}s", limit.as_secs())
        };
        println!(
            "{} {name} ({:.2}s{limit_note}): {}{}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail,
            if in_time { "" } else { "; !over time limit" }
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
