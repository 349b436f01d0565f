mod common;

use common::{network_gradcheck, random_grid, random_labels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordfence_core::grid::{BoxI, GridF};
use wordfence_core::labelgen::{rasterize_labels, WordAnnotation};
use wordfence_core::toynet::{init_params, train, NetworkParams, TrainConfig};

/// Parameters with weights large enough for non-trivial activations and
/// random biases so rectifiers sit on both sides of zero.
fn lively_params(seed: u64) -> NetworkParams {
    let (mut params, mut rng) = init_params(seed, 0.5);
    for layer in params.layers_mut() {
        for b in layer.bias.iter_mut() {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    params
}

#[test]
fn network_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let image = GridF::new(6, 6, 1, (0..36).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let labels = random_labels(&mut rng, 6, 6, 0.0);
    let check = network_gradcheck(&lively_params(3), &image, &labels);
    let total = check.checked + check.skipped;
    assert!(check.max_rel_err < 1e-4, "max relative error {:e}", check.max_rel_err);
    assert!(check.skipped * 100 < total, "{} of {total} coordinates sat on a kink", check.skipped);
}

#[test]
fn network_gradient_second_instance() {
    // a different image and parameter draw, as a second independent instance
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let image = random_grid(&mut rng, 6, 6, 1, 1.0);
    let labels = random_labels(&mut rng, 6, 6, 0.1);
    let check = network_gradcheck(&lively_params(8), &image, &labels);
    assert!(check.max_rel_err < 1e-4, "max relative error {:e}", check.max_rel_err);
}

fn toy_dataset() -> Vec<(GridF, wordfence_core::LabelMap)> {
    (0..10)
        .map(|i| {
            let x0 = 2 + (i % 4) as i64;
            let y0 = 3 + (i % 3) as i64;
            let b = BoxI::new(x0, y0, x0 + 9, y0 + 5).unwrap();
            let image = GridF::from_fn(20, 20, 1, |y, x, _| {
                if b.contains(x as i64, y as i64) && x % 2 == 0 {
                    0.05
                } else {
                    0.5
                }
            });
            let labels = rasterize_labels(&[WordAnnotation::new(b, "word")], 20, 20, 3).unwrap();
            (image, labels)
        })
        .collect()
}

#[test]
fn training_reduces_the_loss() {
    let config = TrainConfig {
        learning_rate: 0.01,
        epochs: 30,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train(&toy_dataset(), &config).unwrap();
    assert_eq!(out.epoch_losses.len(), 30);
    let first = out.epoch_losses[0];
    let last = *out.epoch_losses.last().unwrap();
    assert!(last < first, "loss went from {first} to {last}");
}

#[test]
fn training_is_bit_reproducible() {
    let config = TrainConfig {
        learning_rate: 0.01,
        epochs: 3,
        batch: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&toy_dataset(), &config).unwrap();
    let b = train(&toy_dataset(), &config).unwrap();
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert!(a.params.values().zip(b.params.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
