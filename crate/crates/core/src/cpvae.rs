//! Conditional partial VAE. The reward is appended to the feature as an extra
//! continuous attribute that the encoder may or may not see, and the action
//! enters as a one-hot vector both after set aggregation (before `f`) and
//! next to the latent code (before the decoder). Training maximizes the
//! ELBO with every instance weighted by `1 / π̂₀(A_i | x̃_i)`.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::LoggedDataset;
use crate::pvae::{
    train_loop, AttributeKind, ElboParts, HeadParams, ImputeMode, PartialFeature, PartialVae, TrainConfig,
    TrainingSet, VaeDims, VaeParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpvaeConfig {
    pub dims: VaeDims,
    pub train: TrainConfig,
    /// Probability of hiding the reward from the encoder for a training
    /// instance (the decoder always reconstructs it).
    pub reward_dropout: f64,
    /// Cap on the per-instance inverse-propensity weight.
    pub weight_cap: f64,
    /// Weight instances by inverse propensity; `false` trains the plain ELBO.
    pub ips: bool,
}

impl Default for CpvaeConfig {
    fn default() -> Self {
        CpvaeConfig {
            dims: VaeDims::default(),
            train: TrainConfig::default(),
            reward_dropout: 0.25,
            weight_cap: 100.0,
            ips: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// Decode at the posterior mean.
    Point,
    /// Average over `n` posterior draws.
    Mc(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardPrediction {
    pub mean: f64,
    /// Predictive standard deviation of the reward head (mixture over draws
    /// in MC mode).
    pub std: f64,
}

pub fn one_hot(a: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[a] = 1.0;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpvaeModel {
    vae: PartialVae,
    num_actions: usize,
}

impl CpvaeModel {
    /// Fresh model over `features_schema` plus a reward attribute normalized
    /// with `reward_mean`/`reward_std`.
    pub fn new(
        features_schema: &crate::pvae::FeatureSchema,
        num_actions: usize,
        reward_mean: f64,
        reward_std: f64,
        dims: VaeDims,
        seed: u64,
    ) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::Config("need at least one action".into()));
        }
        let std = if reward_std > 1e-12 { reward_std } else { 1.0 };
        let schema = features_schema.with_attribute(AttributeKind::Continuous {
            mean: reward_mean,
            std,
        })?;
        Ok(CpvaeModel {
            vae: PartialVae::new(schema, dims, num_actions, seed)?,
            num_actions,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.vae.cond_dim() != self.num_actions {
            return Err(Error::Shape("conditioning width must equal action count".into()));
        }
        self.vae.validate()
    }

    pub fn vae(&self) -> &PartialVae {
        &self.vae
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of feature attributes (excluding the reward).
    pub fn feature_len(&self) -> usize {
        self.vae.schema().len() - 1
    }

    pub fn params(&self) -> &VaeParams {
        self.vae.params()
    }

    pub fn params_mut(&mut self) -> &mut VaeParams {
        self.vae.params_mut()
    }

    fn check(&self, xt: &PartialFeature, a: usize) -> Result<()> {
        if a >= self.num_actions {
            return Err(Error::Argument(format!("action {a} outside 0..{}", self.num_actions)));
        }
        if xt.len() != self.feature_len() {
            return Err(Error::Shape(format!(
                "feature has {} attributes, model expects {}",
                xt.len(),
                self.feature_len()
            )));
        }
        Ok(())
    }

    /// Weighted ELBO term of one logged instance, `weight · ELBO`, with the
    /// given latent noise. When `grads` is set, adds `scale · ∇(weight · ELBO)`.
    pub fn weighted_elbo(
        &self,
        xt: &PartialFeature,
        action: usize,
        reward: f64,
        reward_visible: bool,
        weight: f64,
        noise: &[Vec<f64>],
        grads: Option<(&mut VaeParams, f64)>,
    ) -> Result<f64> {
        self.check(xt, action)?;
        let target = xt.extended(Some(reward));
        let enc = if reward_visible { target.clone() } else { xt.extended(None) };
        let cond = one_hot(action, self.num_actions);
        let grads = grads.map(|(g, s)| (g, s * weight));
        let parts: ElboParts = self.vae.elbo_with_noise(&enc, &target, &cond, noise, grads)?;
        Ok(weight * parts.elbo())
    }

    /// Posterior over the latent for `(x̃, a, reward missing)`, shared work
    /// factored so several actions can reuse the aggregated features.
    fn heads_for(&self, g: &[f64], a: usize, mode: PredictMode, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<HeadParams>>> {
        let cond = one_hot(a, self.num_actions);
        let post = self.vae.posterior_from_aggregate(g, &cond)?;
        match mode {
            PredictMode::Point => Ok(vec![self.vae.decode(&post.mu, &cond)?]),
            PredictMode::Mc(n) => {
                if n == 0 {
                    return Err(Error::Argument("MC prediction needs n >= 1".into()));
                }
                (0..n).map(|_| self.vae.decode(&post.sample(rng), &cond)).collect()
            }
        }
    }

    fn reward_from_heads(&self, heads: &[Vec<HeadParams>]) -> RewardPrediction {
        let r = self.feature_len();
        let (mut m1, mut m2) = (0.0, 0.0);
        for h in heads {
            if let HeadParams::Gaussian { mean, std } = h[r] {
                m1 += mean;
                m2 += std * std + mean * mean;
            }
        }
        let n = heads.len() as f64;
        let mean = m1 / n;
        RewardPrediction {
            mean,
            std: (m2 / n - mean * mean).max(0.0).sqrt(),
        }
    }

    /// `θ̂(x̃, a)`: reward-head mean with the reward treated as missing.
    pub fn predict_reward(&self, xt: &PartialFeature, a: usize, mode: PredictMode, seed: u64) -> Result<RewardPrediction> {
        self.check(xt, a)?;
        let g = self.vae.aggregate(&xt.extended(None))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.reward_from_heads(&self.heads_for(&g, a, mode, &mut rng)?))
    }

    /// Predictions for every action; the set encoding is computed once.
    pub fn predict_all(&self, xt: &PartialFeature, mode: PredictMode, seed: u64) -> Result<Vec<RewardPrediction>> {
        self.check(xt, 0)?;
        let g = self.vae.aggregate(&xt.extended(None))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.num_actions)
            .map(|a| Ok(self.reward_from_heads(&self.heads_for(&g, a, mode, &mut rng)?)))
            .collect()
    }

    /// `t` completed features drawn from `q(Z | x̃, a, reward missing)`;
    /// observed attributes are preserved.
    pub fn sample_posterior_features<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        a: usize,
        t: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        self.check(xt, a)?;
        let cond = one_hot(a, self.num_actions);
        let mut out = self.vae.sample_posterior(&xt.extended(None), &cond, t, rng)?;
        for x in &mut out {
            x.pop();
        }
        Ok(out)
    }

    /// Mean-mode completion of `x̃` given action `a`.
    pub fn impute(&self, xt: &PartialFeature, a: usize) -> Result<Vec<f64>> {
        self.check(xt, a)?;
        let cond = one_hot(a, self.num_actions);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut x = self.vae.impute(&xt.extended(None), &cond, ImputeMode::Mean, &mut rng)?;
        x.pop();
        Ok(x)
    }
}

struct LoggedSet {
    targets: Vec<PartialFeature>,
    hidden: Vec<PartialFeature>,
    conds: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dropout: f64,
}

impl TrainingSet for LoggedSet {
    fn len(&self) -> usize {
        self.targets.len()
    }

    fn target(&self, i: usize) -> &PartialFeature {
        &self.targets[i]
    }

    fn cond(&self, i: usize) -> &[f64] {
        &self.conds[i]
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    fn encoder_input<'b>(&'b self, i: usize, rng: &mut ChaCha8Rng) -> Cow<'b, PartialFeature> {
        if self.dropout > 0.0 && rng.random::<f64>() < self.dropout {
            Cow::Borrowed(&self.hidden[i])
        } else {
            Cow::Borrowed(&self.targets[i])
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedCpvae {
    pub model: CpvaeModel,
    /// Mean weighted negative ELBO per epoch.
    pub loss_trace: Vec<f64>,
}

/// Per-instance IPS weights `min(1/π̂₀(A_i | x̃_i), cap)`.
pub fn ips_weights(data: &LoggedDataset, propensities: &[Vec<f64>], cap: f64) -> Result<Vec<f64>> {
    if propensities.len() != data.len() {
        return Err(Error::Shape("one propensity vector per row required".into()));
    }
    data.rows
        .iter()
        .zip(propensities)
        .enumerate()
        .map(|(i, (r, p))| {
            let pa = *p
                .get(r.action)
                .ok_or_else(|| Error::Shape(format!("row {i}: propensity vector too short")))?;
            if !(pa > 0.0) {
                return Err(Error::Data(format!("row {i}: propensity of logged action is {pa}")));
            }
            Ok((1.0 / pa).min(cap))
        })
        .collect()
}

/// Trains the conditional model on `data`. `propensities[i]` is
/// `π̂₀(· | x̃_i)`; it is ignored when `cfg.ips` is false.
pub fn train_cpvae(data: &LoggedDataset, propensities: &[Vec<f64>], cfg: &CpvaeConfig) -> Result<TrainedCpvae> {
    if data.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    if !(0.0..1.0).contains(&cfg.reward_dropout) {
        return Err(Error::Config("reward_dropout must lie in [0, 1)".into()));
    }
    let weights = if cfg.ips {
        ips_weights(data, propensities, cfg.weight_cap)?
    } else {
        vec![1.0; data.len()]
    };
    let (rmean, rstd) = data.reward_stats();
    let mut model = CpvaeModel::new(&data.schema, data.num_actions, rmean, rstd, cfg.dims.clone(), cfg.train.seed)?;
    let set = LoggedSet {
        targets: data.rows.iter().map(|r| r.feature.extended(Some(r.reward))).collect(),
        hidden: data.rows.iter().map(|r| r.feature.extended(None)).collect(),
        conds: data.rows.iter().map(|r| one_hot(r.action, data.num_actions)).collect(),
        weights,
        dropout: cfg.reward_dropout,
    };
    let loss_trace = train_loop(&mut model.vae, &set, &cfg.train)?;
    Ok(TrainedCpvae { model, loss_trace })
}
