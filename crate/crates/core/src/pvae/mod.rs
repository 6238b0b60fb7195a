//! Partial VAE over features with missing attributes: a permutation-invariant
//! set encoder (`Z = f(Σ_j h(x_j · e_j))` over observed `j`) and a
//! heterogeneous decoder with Gaussian and categorical heads.

mod engine;
mod schema;
mod train;

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use engine::{
    DecodedPosterior, ElboParts, HeadParams, ImputeMode, PartialVae, PosteriorGaussian, VaeDims, VaeParams,
    SIGMA_FLOOR,
};
pub use schema::{AttributeKind, FeatureSchema, PartialFeature};
pub use train::TrainConfig;
pub(crate) use train::{train_loop, TrainingSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvaeModel {
    vae: PartialVae,
}

impl PvaeModel {
    pub fn new(schema: FeatureSchema, dims: VaeDims, seed: u64) -> Result<Self> {
        Ok(PvaeModel {
            vae: PartialVae::new(schema, dims, 0, seed)?,
        })
    }

    pub fn from_vae(vae: PartialVae) -> Result<Self> {
        if vae.cond_dim() != 0 {
            return Err(Error::Shape("unconditional model expected".into()));
        }
        vae.validate()?;
        Ok(PvaeModel { vae })
    }

    pub fn vae(&self) -> &PartialVae {
        &self.vae
    }

    pub fn vae_mut(&mut self) -> &mut PartialVae {
        &mut self.vae
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.vae.schema()
    }

    pub fn encode(&self, xt: &PartialFeature) -> Result<PosteriorGaussian> {
        self.vae.encode(xt, &[])
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<HeadParams>> {
        self.vae.decode(z, &[])
    }

    pub fn elbo<R: Rng + ?Sized>(&self, xt: &PartialFeature, rng: &mut R, n_mc: usize) -> Result<ElboParts> {
        self.vae.elbo(xt, &[], rng, n_mc)
    }

    pub fn impute<R: Rng + ?Sized>(&self, xt: &PartialFeature, mode: ImputeMode, rng: &mut R) -> Result<Vec<f64>> {
        self.vae.impute(xt, &[], mode, rng)
    }

    /// Deterministic mean-mode imputation.
    pub fn impute_mean(&self, xt: &PartialFeature) -> Result<Vec<f64>> {
        // Mean mode draws nothing; the RNG is a placeholder.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.vae.impute(xt, &[], ImputeMode::Mean, &mut rng)
    }

    pub fn decoded_posterior<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        draws: usize,
        rng: &mut R,
    ) -> Result<DecodedPosterior> {
        self.vae.decoded_posterior(xt, &[], draws, rng)
    }

    /// `log p(x | x̃)` averaged over `draws` posterior latents (`draws = 1`
    /// evaluates at the posterior mean).
    pub fn posterior_log_density<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        xt: &PartialFeature,
        rng: &mut R,
        draws: usize,
    ) -> Result<f64> {
        self.vae.posterior_log_density(x, xt, &[], draws, rng)
    }

    pub fn posterior_density<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        xt: &PartialFeature,
        rng: &mut R,
        draws: usize,
    ) -> Result<f64> {
        Ok(self.posterior_log_density(x, xt, rng, draws)?.exp())
    }

    pub fn sample_posterior_features<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        t: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        self.vae.sample_posterior(xt, &[], t, rng)
    }

    pub fn sample_prior_features<R: Rng + ?Sized>(&self, u: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        self.vae.sample_prior(u, &[], rng)
    }

    /// Mean ELBO over `features` with a fixed noise stream.
    pub fn mean_elbo(&self, features: &[PartialFeature], seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for xt in features {
            total += self.elbo(xt, &mut rng, 1)?.elbo();
        }
        Ok(total / features.len().max(1) as f64)
    }
}

struct FeatureSet<'a> {
    rows: &'a [PartialFeature],
}

impl TrainingSet for FeatureSet<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn target(&self, i: usize) -> &PartialFeature {
        &self.rows[i]
    }

    fn cond(&self, _i: usize) -> &[f64] {
        &[]
    }

    fn weight(&self, _i: usize) -> f64 {
        1.0
    }

    fn encoder_input<'a>(&'a self, i: usize, _rng: &mut ChaCha8Rng) -> Cow<'a, PartialFeature> {
        Cow::Borrowed(&self.rows[i])
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPvae {
    pub model: PvaeModel,
    /// Mean negative ELBO per epoch.
    pub loss_trace: Vec<f64>,
}

/// Fits a partial VAE to `features` by maximizing the mean ELBO with Adam.
/// Initialization and mini-batch order are derived from `cfg.seed`.
pub fn train_pvae(
    features: &[PartialFeature],
    schema: FeatureSchema,
    dims: VaeDims,
    cfg: &TrainConfig,
) -> Result<TrainedPvae> {
    if features.is_empty() {
        return Err(Error::Argument("need at least one feature to train".into()));
    }
    for xt in features {
        schema.check_partial(xt)?;
    }
    let mut model = PvaeModel::new(schema, dims, cfg.seed)?;
    let loss_trace = train_loop(&mut model.vae, &FeatureSet { rows: features }, cfg)?;
    Ok(TrainedPvae { model, loss_trace })
}
