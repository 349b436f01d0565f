use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward, NetworkParams};
use crate::error::{Error, Result};
use crate::grid::GridF;
use crate::labelgen::LabelMap;
use crate::wsloss::weighted_softmax_loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Images per SGD step; the step uses the summed per-image gradients.
    pub batch: usize,
    pub seed: u64,
    /// Weights start uniform in `(-scale, scale)`; biases start at zero.
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 30,
            batch: 1,
            seed: 0,
            weight_init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument("epochs and batch must be positive".into()));
        }
        if !(self.weight_init_scale > 0.0 && self.weight_init_scale.is_finite()) {
            return Err(Error::InvalidArgument("weight init scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Mean per-image loss of each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
}

pub fn init_params(seed: u64, scale: f64) -> (NetworkParams, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros();
    for layer in params.layers_mut() {
        for w in layer.weight.iter_mut() {
            *w = rng.gen_range(-scale..scale);
        }
    }
    (params, rng)
}

/// Plain SGD on the weighted softmax loss, single-threaded and fully
/// determined by `(dataset, config)`.
pub fn train(dataset: &[(GridF, LabelMap)], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(dataset, config, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_with_progress(
    dataset: &[(GridF, LabelMap)],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for (i, (image, labels)) in dataset.iter().enumerate() {
        if image.channels() != 1 || (image.height(), image.width()) != (labels.height(), labels.width()) {
            return Err(Error::InvalidInput(format!(
                "sample {i}: image {:?} does not match labels {}x{}",
                image.dims(),
                labels.height(),
                labels.width()
            )));
        }
    }

    let (mut params, mut rng) = init_params(config.seed, config.weight_init_scale);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch) {
            let mut step = params.zeros_like();
            for &i in batch {
                let (image, labels) = &dataset[i];
                let (logits, cache) = forward(&params, image)?;
                let out = weighted_softmax_loss(&logits, labels)?;
                total += out.loss;
                step.axpy(1.0, &backward(&params, &cache, &out.grad)?);
            }
            params.axpy(-config.learning_rate, &step);
        }
        let mean = total / dataset.len() as f64;
        log::debug!("epoch {} mean loss {mean:.6}", epoch + 1);
        on_epoch(epoch + 1, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

/// Writes the loss log as CSV with header `epoch,mean_loss` (epochs from 1).
pub fn write_loss_log(path: &Path, epoch_losses: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in epoch_losses.iter().enumerate() {
        writeln!(s, "{},{l}", i + 1).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxI;
    use crate::labelgen::{rasterize_labels, WordAnnotation};

    fn tiny_dataset(n: usize) -> Vec<(GridF, LabelMap)> {
        (0..n)
            .map(|i| {
                let x0 = 2 + (i % 4) as i64;
                let bbox = BoxI::new(x0, 3, x0 + 6, 7).unwrap();
                let img = GridF::from_fn(12, 14, 1, |y, x, _| {
                    if bbox.contains(x as i64, y as i64) && x % 2 == 0 {
                        0.05
                    } else {
                        0.5
                    }
                });
                let labels = rasterize_labels(&[WordAnnotation::new(bbox, "ab")], 12, 14, 2).unwrap();
                (img, labels)
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            seed: 42,
            ..TrainConfig::default()
        };
        let out = train(&tiny_dataset(3), &cfg).unwrap();
        assert_eq!(out.params, init_params(42, cfg.weight_init_scale).0);
    }

    #[test]
    fn same_seed_same_run() {
        let cfg = TrainConfig {
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let data = tiny_dataset(4);
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(
            a.epoch_losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>(),
            b.epoch_losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            train(&[], &TrainConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&tiny_dataset(1), &cfg).is_err());
    }

    #[test]
    fn loss_log_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_log(&path, &[3.5, 1.25]).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "epoch,mean_loss\n1,3.5\n2,1.25\n");
    }
}
