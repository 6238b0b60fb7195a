use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::PartialVae;
use super::schema::PartialFeature;
use crate::error::{Error, Result};
use crate::nn::{AdamState, ParamLayout, Parameterized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Latent samples per instance in the reconstruction term.
    pub n_mc: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            n_mc: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// What the optimizer sees for each training instance.
pub(crate) trait TrainingSet {
    fn len(&self) -> usize;
    fn target(&self, i: usize) -> &PartialFeature;
    fn cond(&self, i: usize) -> &[f64];
    fn weight(&self, i: usize) -> f64;
    /// Encoder input for instance `i`; may hide attributes at random.
    fn encoder_input<'a>(&'a self, i: usize, rng: &mut ChaCha8Rng) -> Cow<'a, PartialFeature>;
}

/// Maximizes the mean weighted ELBO with Adam over shuffled mini-batches.
/// Returns the mean weighted loss (negative ELBO) of every epoch.
pub(crate) fn train_loop<S: TrainingSet>(vae: &mut PartialVae, data: &S, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Argument("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1e);
    let layout = ParamLayout::of(vae.params(), "model");
    let mut adam = AdamState::new(layout.len(), cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut flat = Vec::with_capacity(layout.len());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = vae.params().zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let enc = data.encoder_input(i, &mut rng);
                let noise = vae.draw_noise(cfg.n_mc, &mut rng);
                let w = data.weight(i);
                let parts = vae.elbo_with_noise(&enc, data.target(i), data.cond(i), &noise, Some((&mut grads, -w * scale)))?;
                batch_loss -= w * parts.elbo();
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (instances {batch:?})"
                )));
            }
            epoch_loss += batch_loss;
            flat.clear();
            vae.params().write_params(&mut flat);
            let g = grads.to_flat();
            adam.step(&mut flat, &g, Some(&layout)).map_err(|e| {
                Error::Training(format!("epoch {epoch}, batch {b}: {e}"))
            })?;
            vae.params_mut().read_params(&flat);
        }
        trace.push(epoch_loss / n as f64);
    }
    Ok(trace)
}
