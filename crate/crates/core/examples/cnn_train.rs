//! Trains a reduced CNN on synthetic log-mel patches and prints the
//! learning curve.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screamkit::models::cnn::fit_input_scaling;
use screamkit::models::{cnn_train, CnnArchitecture, CnnModel, CnnTrainConfig};

fn patch(class: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let lit = 8 + class * 40;
    Array2::from_shape_fn((128, 87), |(r, _)| {
        let band = if (lit..lit + 16).contains(&r) {
            5.0
        } else {
            0.0
        };
        -9.0 + band + rng.random_range(-1.5..1.5)
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let make = |n: usize, rng: &mut ChaCha8Rng| -> Vec<(Array2<f64>, usize)> {
        (0..n).map(|i| (patch(i % 3, rng), i % 3)).collect()
    };
    let train_data = make(36, &mut rng);
    let val_data = make(12, &mut rng);
    let train: Vec<(ArrayView2<f64>, usize)> =
        train_data.iter().map(|(x, y)| (x.view(), *y)).collect();
    let val: Vec<(ArrayView2<f64>, usize)> = val_data.iter().map(|(x, y)| (x.view(), *y)).collect();

    let arch = CnnArchitecture {
        conv_channels: vec![4, 8, 8],
        dense: vec![16],
        ..CnnArchitecture::standard(3, 128, 87)
    };
    let mut model = CnnModel::<f32>::init(arch, 1)?;
    println!("{} parameters", model.param_count());
    fit_input_scaling(
        &mut model,
        &train.iter().map(|(x, _)| *x).collect::<Vec<_>>(),
    );

    let cfg = CnnTrainConfig {
        epochs: 15,
        batch_size: 8,
        seed: 1,
        ..CnnTrainConfig::default()
    };
    let (model, history) = cnn_train(model, &train, &val, &cfg)?;
    for e in &history.epochs {
        println!(
            "epoch {:>2}  train loss {:.4} acc {:.2}  val loss {:.4} acc {:.2}",
            e.epoch,
            e.train_loss,
            e.train_acc,
            e.val_loss.unwrap_or(f64::NAN),
            e.val_acc.unwrap_or(f64::NAN)
        );
    }
    println!(
        "best epoch {}, early stop: {}",
        history.best_epoch, history.stopped_early
    );
    println!(
        "class probabilities of val sample 0: {:.3?}",
        model.forward(&val[0].0)?.to_vec()
    );
    Ok(())
}
