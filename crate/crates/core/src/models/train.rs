use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, MlpAutoencoder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub history: Vec<EpochLoss>,
}

/// Chronological split sizes `(train, validation)`; both at least 1.
pub(crate) fn split_sizes(n_samples: usize, validation_fraction: f64) -> Result<(usize, usize)> {
    if n_samples < 2 {
        return Err(Error::InsufficientData {
            what: "training windows",
            need: 2,
            have: n_samples,
        });
    }
    let n_val = ((n_samples as f64 * validation_fraction).round() as usize).clamp(1, n_samples - 1);
    Ok((n_samples - n_val, n_val))
}

/// Fits an autoencoder to `samples` (one sample per row). The last
/// `validation_fraction` of rows is held out; training stops after
/// `patience` epochs without validation improvement and the best-validation
/// weights are restored.
pub fn train_autoencoder(
    samples: &Array2<f64>,
    settings: &TrainSettings,
) -> Result<(MlpAutoencoder, TrainingReport)> {
    let (n_train, _) = split_sizes(samples.nrows(), settings.validation_fraction)?;
    let train = samples.slice(ndarray::s![..n_train, ..]);
    let val = samples.slice(ndarray::s![n_train.., ..]);

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut net = MlpAutoencoder::new(samples.ncols(), settings.latent_dim, &mut rng)?;
    let mut opt = Adam::new(net.n_params(), settings.learning_rate);
    let mut order: Vec<usize> = (0..n_train).collect();
    let batch_size = settings.batch_size.max(1);

    let mut best = (net.clone(), f64::INFINITY, 0);
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=settings.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch = train.select(Axis(0), chunk);
            let (loss, grad) = net.gradient(batch.view());
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite loss {loss}"),
                });
            }
            weighted += loss * chunk.len() as f64;
            opt.step(net.params_mut(), &grad);
        }
        let val_loss = net.loss(val);
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite validation loss {val_loss}"),
            });
        }
        history.push(EpochLoss {
            epoch,
            train_loss: weighted / n_train as f64,
            val_loss,
        });
        if val_loss < best.1 {
            best = (net.clone(), val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= settings.patience {
                break;
            }
        }
    }

    let epochs_run = history.len();
    let (net, best_val_loss, best_epoch) = best;
    Ok((
        net,
        TrainingReport {
            epochs_run,
            best_epoch,
            best_val_loss,
            stopped_early: epochs_run < settings.max_epochs,
            history,
        },
    ))
}
