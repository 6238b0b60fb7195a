//! Similarity-weighted reward estimation from logged data.
//!
//! `θ̂(x, a) = Σ_i w_i · 1[A_i = a] · R_i / π̂₀(a | X̃_i)` with
//! `w_i ∝ p(x | X̃_i)`, plus a matched variant that renormalizes the weights
//! within the rows that took action `a` and drops the propensity.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::LoggedDataset;
use crate::pvae::{DecodedPosterior, PartialFeature, PvaeModel};

/// Similarity `log p(x | X̃_i)` between a complete query feature and each
/// logged row.
pub trait Similarity: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn log_density(&self, x: &[f64], i: usize) -> f64;
}

/// PVAE posterior densities, decoded once per logged row.
pub struct PvaeSimilarity {
    posteriors: Vec<DecodedPosterior>,
}

impl PvaeSimilarity {
    /// `draws` is the number of posterior latents per row (1 = posterior mean).
    pub fn new(pvae: &PvaeModel, features: &[PartialFeature], draws: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let posteriors = features
            .iter()
            .map(|xt| pvae.decoded_posterior(xt, draws, &mut rng))
            .collect::<Result<_>>()?;
        Ok(PvaeSimilarity { posteriors })
    }
}

impl Similarity for PvaeSimilarity {
    fn len(&self) -> usize {
        self.posteriors.len()
    }

    fn log_density(&self, x: &[f64], i: usize) -> f64 {
        self.posteriors[i].log_density(x)
    }
}

/// Indicator similarity: weight 1 when every observed attribute of the row
/// equals the query, 0 otherwise.
pub struct ExactMatchSimilarity {
    rows: Vec<PartialFeature>,
}

impl ExactMatchSimilarity {
    pub fn new(features: &[PartialFeature]) -> Self {
        ExactMatchSimilarity {
            rows: features.to_vec(),
        }
    }
}

impl Similarity for ExactMatchSimilarity {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn log_density(&self, x: &[f64], i: usize) -> f64 {
        let r = &self.rows[i];
        if r.observed().all(|j| r.values()[j] == x[j]) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Normalizes `exp(log_dens)` to sum to one, with max-subtraction.
pub fn normalized_weights(log_dens: &[f64]) -> Result<Vec<f64>> {
    let m = log_dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Estimation(
            "all similarity densities are zero; no logged row resembles the query".into(),
        ));
    }
    let e: Vec<f64> = log_dens.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpvaeOptions {
    /// Use a random subset of this many rows per query (`None` = all rows).
    pub subsample: Option<usize>,
    /// Cap on each inverse-propensity factor `1/π̂₀`.
    pub weight_cap: f64,
    pub seed: u64,
}

impl Default for SpvaeOptions {
    fn default() -> Self {
        SpvaeOptions {
            subsample: None,
            weight_cap: 100.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub value: f64,
    /// `1 / Σ w_i²` over the rows used.
    pub effective_sample_size: f64,
    /// No row in the index set took this action.
    pub no_support: bool,
}

pub struct SpvaeEstimator<S: Similarity> {
    num_actions: usize,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    propensities: Vec<Vec<f64>>,
    similarity: S,
    options: SpvaeOptions,
}

impl<S: Similarity> SpvaeEstimator<S> {
    /// `propensities[i]` is `π̂₀(· | X̃_i)` for logged row `i`.
    pub fn new(data: &LoggedDataset, similarity: S, propensities: Vec<Vec<f64>>, options: SpvaeOptions) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::Argument("estimator needs a non-empty dataset".into()));
        }
        if similarity.len() != n || propensities.len() != n {
            return Err(Error::Shape("similarity/propensity tables must cover every row".into()));
        }
        if propensities.iter().any(|p| p.len() != data.num_actions) {
            return Err(Error::Shape("propensity rows must have one entry per action".into()));
        }
        if let Some(m) = options.subsample {
            if m == 0 || m > n {
                return Err(Error::Config(format!("subsample size must be in 1..={n}, got {m}")));
            }
        }
        if !(options.weight_cap > 1.0) {
            return Err(Error::Config("weight_cap must exceed 1".into()));
        }
        Ok(SpvaeEstimator {
            num_actions: data.num_actions,
            actions: data.rows.iter().map(|r| r.action).collect(),
            rewards: data.rows.iter().map(|r| r.reward).collect(),
            propensities,
            similarity,
            options,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn options(&self) -> &SpvaeOptions {
        &self.options
    }

    pub fn similarity(&self) -> &S {
        &self.similarity
    }

    /// Rows used for a query: all of them, or a sorted random subset drawn
    /// from `seed`.
    pub fn index_set(&self, seed: u64) -> Vec<usize> {
        let n = self.actions.len();
        match self.options.subsample {
            Some(m) if m < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = index::sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        }
    }

    /// Similarity weights over `idx`, normalized to sum to one.
    pub fn weights(&self, x: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        let ld: Vec<f64> = idx.iter().map(|&i| self.similarity.log_density(x, i)).collect();
        normalized_weights(&ld)
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.num_actions {
            return Err(Error::Argument(format!("action {a} outside 0..{}", self.num_actions)));
        }
        Ok(())
    }

    fn ips_from_weights(&self, w: &[f64], idx: &[usize], a: usize) -> ThetaEstimate {
        let mut value = 0.0;
        let mut support = false;
        for (&wi, &i) in w.iter().zip(idx) {
            if self.actions[i] == a {
                support = true;
                let inv = (1.0 / self.propensities[i][a]).min(self.options.weight_cap);
                value += wi * self.rewards[i] * inv;
            }
        }
        ThetaEstimate {
            value,
            effective_sample_size: 1.0 / w.iter().map(|v| v * v).sum::<f64>(),
            no_support: !support,
        }
    }

    pub fn theta_with_seed(&self, x: &[f64], a: usize, seed: u64) -> Result<ThetaEstimate> {
        self.check_action(a)?;
        let idx = self.index_set(seed);
        let w = self.weights(x, &idx)?;
        Ok(self.ips_from_weights(&w, &idx, a))
    }

    pub fn theta(&self, x: &[f64], a: usize) -> Result<ThetaEstimate> {
        self.theta_with_seed(x, a, self.options.seed)
    }

    /// Estimates for every action from one set of weights.
    pub fn theta_all_with_seed(&self, x: &[f64], seed: u64) -> Result<Vec<ThetaEstimate>> {
        let idx = self.index_set(seed);
        let w = self.weights(x, &idx)?;
        Ok((0..self.num_actions).map(|a| self.ips_from_weights(&w, &idx, a)).collect())
    }

    pub fn theta_all(&self, x: &[f64]) -> Result<Vec<ThetaEstimate>> {
        self.theta_all_with_seed(x, self.options.seed)
    }

    fn matched_from_log(&self, ld: &[f64], idx: &[usize], a: usize) -> Result<f64> {
        let (sub_ld, sub_idx): (Vec<f64>, Vec<usize>) = ld
            .iter()
            .zip(idx)
            .filter(|(_, &i)| self.actions[i] == a)
            .map(|(&l, &i)| (l, i))
            .unzip();
        if sub_idx.is_empty() {
            return Err(Error::NoSupport { action: a });
        }
        let w = normalized_weights(&sub_ld)?;
        Ok(w.iter().zip(&sub_idx).map(|(wi, &i)| wi * self.rewards[i]).sum())
    }

    /// Matched estimator: weights renormalized within `N_a = {i : A_i = a}`,
    /// no propensity correction.
    pub fn theta_matched(&self, x: &[f64], a: usize) -> Result<f64> {
        self.check_action(a)?;
        let idx = self.index_set(self.options.seed);
        let ld: Vec<f64> = idx.iter().map(|&i| self.similarity.log_density(x, i)).collect();
        self.matched_from_log(&ld, &idx, a)
    }

    /// Matched estimates for every action; actions without support map to
    /// `None`.
    pub fn theta_matched_all(&self, x: &[f64]) -> Result<Vec<Option<f64>>> {
        let idx = self.index_set(self.options.seed);
        let ld: Vec<f64> = idx.iter().map(|&i| self.similarity.log_density(x, i)).collect();
        (0..self.num_actions)
            .map(|a| match self.matched_from_log(&ld, &idx, a) {
                Ok(v) => Ok(Some(v)),
                Err(Error::NoSupport { .. }) => Ok(None),
                Err(Error::Estimation(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// `Σ_i w_i · 1[A_i = a] / π₀(a | X̃_i)` for one dataset, with true
/// propensities taken from the dataset's ground truth.
pub fn ips_weight_sum<S: Similarity>(data: &LoggedDataset, similarity: &S, x: &[f64], a: usize) -> Result<f64> {
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::Data("identity check needs ground-truth propensities".into()))?;
    let ld: Vec<f64> = (0..data.len()).map(|i| similarity.log_density(x, i)).collect();
    let w = normalized_weights(&ld)?;
    Ok(data
        .rows
        .iter()
        .zip(&w)
        .zip(&truth.propensities)
        .filter(|((r, _), _)| r.action == a)
        .map(|((_, wi), p)| wi / p[a])
        .sum())
}

/// Mean of [`ips_weight_sum`] over `n_trials` datasets produced by
/// `regenerate(trial)`; `similarity` builds the weights for each dataset.
pub fn ips_weight_identity_check<G, B, S>(
    mut regenerate: G,
    similarity: B,
    x: &[f64],
    a: usize,
    n_trials: usize,
) -> Result<f64>
where
    G: FnMut(usize) -> Result<LoggedDataset>,
    B: Fn(&LoggedDataset) -> Result<S>,
    S: Similarity,
{
    if n_trials == 0 {
        return Err(Error::Argument("n_trials must be >= 1".into()));
    }
    let mut total = 0.0;
    for trial in 0..n_trials {
        let data = regenerate(trial)?;
        let sim = similarity(&data)?;
        total += ips_weight_sum(&data, &sim, x, a)?;
    }
    Ok(total / n_trials as f64)
}
